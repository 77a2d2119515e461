// Python bindings. Structured values cross the boundary as JSON text; the
// package __init__ turns them into dicts.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ucp/accounting.hpp"
#include "ucp/builders.hpp"
#include "ucp/network.hpp"
#include "ucp/pipeline.hpp"
#include "ucp/planner.hpp"
#include "ucp/rewriter.hpp"
#include "ucp/serialize.hpp"

namespace py = pybind11;
using namespace ucp;

namespace {

using FArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FArray to_numpy(const Tensor4& t) {
  const auto& s = t.shape();
  FArray a({s.n, s.c, s.h, s.w});
  std::copy(t.vec().begin(), t.vec().end(), a.mutable_data());
  return a;
}

Tensor4 from_numpy(const FArray& a) {
  if (a.ndim() != 4) throw std::invalid_argument("expected an NCHW array");
  Tensor4 t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
            static_cast<int>(a.shape(3)));
  std::copy(a.data(), a.data() + a.size(), t.vec().begin());
  return t;
}

PruneConfig prune_config(const std::string& text) {
  return text.empty() ? PruneConfig{} : config_from_json(json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Channel pruning with MSEB importance scores";

  py::register_exception<PlanError>(m, "PlanError", PyExc_ValueError);
  py::register_exception<RewriteError>(m, "RewriteError", PyExc_ValueError);
  py::register_exception<BundleError>(m, "BundleError", PyExc_IOError);
  py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);
  py::register_exception<PipelineError>(m, "PipelineError", PyExc_RuntimeError);

  py::class_<ModelBundle>(m, "Model")
      .def_property_readonly("arch", [](const ModelBundle& b) { return b.graph.arch; })
      .def("graph_json", [](const ModelBundle& b) { return graph_to_json(b.graph).dump(); })
      .def("param_names", [](const ModelBundle& b) {
        std::vector<std::string> out;
        for (const auto& [k, v] : b.params) out.push_back(k);
        return out;
      })
      .def("param", [](const ModelBundle& b, const std::string& name) { return to_numpy(b.params.at(name)); })
      .def("set_param", [](ModelBundle& b, const std::string& name, const FArray& a) {
        Tensor4 t = from_numpy(a);
        if (!(t.shape() == b.params.at(name).shape())) throw std::invalid_argument("shape mismatch for " + name);
        b.params[name] = std::move(t);
      })
      .def("conv_widths", [](const ModelBundle& b) {
        std::vector<int> w;
        for (const auto& id : b.graph.conv_ids()) w.push_back(b.graph.node(id).out_channels);
        return w;
      })
      .def("forward", [](const ModelBundle& b, const FArray& x, bool train) {
        Network<float> net(b.graph, b.params);
        return to_numpy(net.forward(from_numpy(x), train ? Mode::Train : Mode::Eval));
      }, py::arg("x"), py::arg("train") = false)
      .def("save", [](const ModelBundle& b, const std::string& path) { save_bundle(b, path); });

  m.def("architectures", [] { return known_architectures(); });
  m.def("build", [](const std::string& arch, int classes, bool mseb, int reduction, std::uint64_t seed) {
    BuildOptions o;
    o.with_mseb = mseb;
    o.reduction = reduction;
    return make_bundle(build(arch, classes, o), seed);
  }, py::arg("arch"), py::arg("classes") = 10, py::arg("mseb") = false, py::arg("reduction") = 16,
        py::arg("seed") = 0);
  m.def("load", [](const std::string& path) { return load_bundle(path); });

  m.def("count", [](const ModelBundle& b, const std::string& flops) {
    const auto c = count(b.graph, flop_convention_from_string(flops));
    return json{{"params", c.params}, {"mseb_params", c.mseb_params}, {"flops", c.flops}}.dump();
  }, py::arg("model"), py::arg("flops") = "mac");

  m.def("threshold", [](const std::vector<double>& s, int beta, const std::string& sign) {
    PruneConfig c;
    c.beta = beta;
    c.sign = threshold_sign_from_string(sign);
    c.check();
    const auto t = threshold(s, c);
    return py::make_tuple(t.mean, t.factor, t.value);
  }, py::arg("scores"), py::arg("beta") = 1, py::arg("sign") = "minus");
  m.def("select_channels", [](const std::vector<double>& s, int beta, const std::string& sign,
                              int min_channels, bool half_rule) {
    PruneConfig c;
    c.beta = beta;
    c.sign = threshold_sign_from_string(sign);
    c.min_channels = min_channels;
    c.half_rule = half_rule;
    c.check();
    return select_channels(s, c);
  }, py::arg("scores"), py::arg("beta") = 1, py::arg("sign") = "minus", py::arg("min_channels") = 1,
        py::arg("half_rule") = false);

  m.def("make_plan", [](const std::string& scores, const ModelBundle& b, const std::string& config) {
    return plan_to_json(make_plan(scores_from_json(json::parse(scores)), strip_mseb(b.graph),
                                  prune_config(config))).dump();
  }, py::arg("scores"), py::arg("model"), py::arg("config") = "");
  m.def("identity_plan", [](const ModelBundle& b) { return plan_to_json(identity_plan(b.graph)).dump(); });
  m.def("width_plan", [](const ModelBundle& b, const std::vector<int>& w) {
    return plan_to_json(width_plan(strip_mseb(b.graph), w)).dump();
  });
  m.def("apply", [](const ModelBundle& b, const std::string& plan, const std::string& mode, bool strip,
                    std::optional<std::uint64_t> seed) {
    RewriteOptions o;
    o.mode = rewrite_mode_from_string(mode);
    o.strip_mseb = strip;
    o.reseed = seed;
    return apply(b, plan_from_json(json::parse(plan)), o);
  }, py::arg("model"), py::arg("plan"), py::arg("mode") = "inherit-weights", py::arg("strip_mseb") = true,
        py::arg("seed") = py::none());

  m.def("report", [](const ModelBundle& before, const ModelBundle& after, int base_epochs,
                     const std::string& flops, const std::string& rule) {
    return report_to_json(report(strip_mseb(before.graph), after.graph, base_epochs,
                                 flop_convention_from_string(flops), epoch_rule_from_string(rule)))
        .dump();
  }, py::arg("before"), py::arg("after"), py::arg("base_epochs"), py::arg("flops") = "mac",
        py::arg("rule") = "compute-equal");
  m.def("recommend_epochs", [](int base, double before, double after, const std::string& rule) {
    return recommend_epochs(base, before, after, epoch_rule_from_string(rule));
  }, py::arg("base"), py::arg("flops_before"), py::arg("flops_after"), py::arg("rule") = "compute-equal");

  m.def("default_pipeline_config", [] { return pipeline_config_to_json(default_pipeline_config()).dump(); });
  m.def("run_pipeline", [](const std::string& config) {
    PipelineResult r;
    {
      py::gil_scoped_release release;
      r = run_pipeline(pipeline_config_from_json(json::parse(config)));
    }
    return json{{"manifest", manifest_to_json(r.manifest)},
                {"plan", plan_to_json(r.plan)},
                {"report", report_to_json(r.report)},
                {"baseline_eval_acc", r.baseline_eval_acc},
                {"retrained_eval_acc", r.retrained_eval_acc}}
        .dump();
  });
}
