#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "ucp/accounting.hpp"
#include "ucp/builders.hpp"
#include "ucp/planner.hpp"
#include "ucp/rewriter.hpp"

using namespace ucp;

namespace {

struct Totals {
  std::int64_t params = 0;
  std::int64_t mac = 0;
  std::int64_t ma = 0;
};

// Walks the graph with its own shape arithmetic.
Totals brute_force(const Graph& g) {
  struct S {
    std::int64_t c, h, w;
  };
  std::map<std::string, S> shape;
  Totals t;
  for (const auto& n : g.nodes) {
    const S in = n.inputs.empty() ? S{g.input.c, g.input.h, g.input.w} : shape.at(n.inputs[0]);
    S out = in;
    const std::int64_t in_el = in.c * in.h * in.w;
    switch (n.kind) {
      case LayerKind::Conv: {
        out = {n.out_channels, (in.h + 2 * n.padding - n.kernel_h) / n.stride + 1,
               (in.w + 2 * n.padding - n.kernel_w) / n.stride + 1};
        const std::int64_t el = out.c * out.h * out.w;
        const std::int64_t per = std::int64_t{n.kernel_h} * n.kernel_w * n.in_channels;
        t.params += per * n.out_channels + (n.bias ? n.out_channels : 0);
        t.mac += el * per;
        t.ma += el * (2 * per) + (n.bias ? el : 0);
        break;
      }
      case LayerKind::BatchNorm:
        t.params += 2 * n.channels;
        t.ma += 2 * in_el;
        break;
      case LayerKind::ReLU:
      case LayerKind::Add:
        t.ma += in_el;
        break;
      case LayerKind::MaxPool:
        out = {in.c, (in.h - n.pool_size) / n.pool_stride + 1, (in.w - n.pool_size) / n.pool_stride + 1};
        t.ma += out.c * out.h * out.w * n.pool_size * n.pool_size;
        break;
      case LayerKind::GlobalAvgPool:
        out = {in.c, 1, 1};
        t.ma += in_el;
        break;
      case LayerKind::FullyConnected:
        out = {n.out_channels, 1, 1};
        t.params += std::int64_t{n.in_channels} * n.out_channels + n.out_channels;
        t.mac += std::int64_t{n.in_channels} * n.out_channels;
        t.ma += 2 * std::int64_t{n.in_channels} * n.out_channels + n.out_channels;
        break;
      case LayerKind::Mseb: {
        const std::int64_t hidden = std::max(1, n.channels / n.reduction);
        t.params += 2 * hidden * n.channels;
        // abs + sum per element, two tiny matmuls, one multiply per element to rescale
        t.mac += 2 * hidden * n.channels + in_el;
        t.ma += 2 * in_el + 4 * hidden * n.channels + in_el;
        break;
      }
      case LayerKind::Softmax:
        break;
    }
    shape[n.id] = out;
  }
  return t;
}

Graph single_conv(bool bias) {
  Graph g;
  g.arch = "single";
  g.num_classes = 10;
  LayerNode c;
  c.id = "conv";
  c.kind = LayerKind::Conv;
  c.in_channels = 3;
  c.out_channels = 16;
  c.kernel_h = c.kernel_w = 3;
  c.padding = 1;
  c.bias = bias;
  g.nodes.push_back(c);
  LayerNode gap;
  gap.id = "gap";
  gap.kind = LayerKind::GlobalAvgPool;
  gap.inputs = {"conv"};
  g.nodes.push_back(gap);
  LayerNode fc;
  fc.id = "fc";
  fc.kind = LayerKind::FullyConnected;
  fc.in_channels = 16;
  fc.out_channels = 10;
  fc.inputs = {"gap"};
  g.nodes.push_back(fc);
  g.classifier = "fc";
  return g;
}

}  // namespace

TEST_SUITE("accounting") {
  TEST_CASE("single 3x3 conv on a 32x32 input") {
    const auto b = count(single_conv(true));
    CHECK(b.layers[0].params == 448);
    CHECK(b.layers[0].flops == 442368);
    CHECK(count(single_conv(false)).layers[0].params == 432);
    CHECK(count(single_conv(true), FlopConvention::MultiplyAdd).layers[0].flops == 2 * 442368 + 16 * 1024);
  }

  TEST_CASE("every architecture agrees with an independent counter") {
    for (const auto& arch : known_architectures())
      for (bool mseb : {false, true}) {
        CAPTURE(arch);
        CAPTURE(mseb);
        BuildOptions o;
        o.with_mseb = mseb;
        const Graph g = build(arch, 100, o);
        const Totals t = brute_force(g);
        CHECK(count_params(g) == t.params);
        CHECK(count_flops(g, FlopConvention::Mac) == t.mac);
        CHECK(count_flops(g, FlopConvention::MultiplyAdd) == t.ma);
        const auto b = count(g);
        std::int64_t sum = 0, ms = 0;
        for (const auto& l : b.layers) {
          sum += l.params;
          if (l.kind == LayerKind::Mseb) ms += l.params;
        }
        CHECK(sum == b.params);
        CHECK(ms == b.mseb_params);
        CHECK((mseb ? ms > 0 : ms == 0));
      }
  }

  TEST_CASE("pruned graphs agree with the independent counter and never grow") {
    std::mt19937_64 rng(1);
    const ModelBundle m = make_bundle(build("vgg16", 10), 1);
    std::int64_t prev_p = count_params(m.graph), prev_f = count_flops(m.graph);
    std::vector<int> w;
    for (const auto& id : m.graph.conv_ids()) w.push_back(m.graph.node(id).out_channels);
    for (int step = 0; step < 30; ++step) {
      const std::size_t i = rng() % w.size();
      if (w[i] > 1) w[i] -= 1 + static_cast<int>(rng() % w[i]) / 2;
      const Graph g = apply(m, width_plan(m.graph, w), {}).graph;
      const Totals t = brute_force(g);
      CHECK(count_params(g) == t.params);
      CHECK(count_flops(g) == t.mac);
      CHECK(t.params <= prev_p);
      CHECK(t.mac <= prev_f);
      prev_p = t.params;
      prev_f = t.mac;
    }
  }

  TEST_CASE("resnet56 narrowed stages") {
    const ModelBundle m = make_bundle(build("resnet56", 10), 1);
    for (const auto& t : std::vector<std::vector<int>>{{8, 16, 16}, {8, 32, 32}}) {
      PruningPlan p;
      for (int s = 1; s <= 3; ++s) {
        StagePlan sp;
        sp.stage = s;
        sp.original = m.graph.stages[s - 1].width;
        sp.target = t[s - 1];
        for (int i = 0; i < sp.target; ++i) sp.kept.push_back(i);
        sp.layers = stage_output_convs(m.graph, s);
        p.stages.push_back(sp);
      }
      const Graph g = apply(m, p, {}).graph;
      const Totals bf = brute_force(g);
      const auto r = report(m.graph, g, 160);
      CHECK(r.params_after == bf.params);
      CHECK(r.flops_after == bf.mac);
      CHECK(r.pruned_params_pct == doctest::Approx(std::round(1000.0 * (1.0 - double(bf.params) / double(r.params_before))) / 10.0));
      CHECK(r.pruned_params_pct > 0);
    }
  }

  TEST_CASE("identity report") {
    const Graph g = build("tiny-resnet", 10);
    const auto r = report(g, g, 160);
    CHECK(r.pruned_params_pct == 0.0);
    CHECK(r.pruned_flops_pct == 0.0);
    CHECK(r.epochs == 160);
    CHECK(r.before_layers.size() == r.after_layers.size());
    const json j = report_to_json(r);
    CHECK(j.at("format") == "ucp-report/1");
    CHECK_FALSE(format_report(r).empty());
  }

  TEST_CASE("retraining epochs") {
    CHECK(recommend_epochs(160, 7.99e8, 2.97e8) == 430);
    CHECK(recommend_epochs(160, 7.99e8, 2.97e8, EpochRule::Literal) ==
          std::lround(160 * (1 - 2.97e8 / 7.99e8)));
    CHECK(recommend_epochs(160, 1e8, 1e8) == 160);
    CHECK(recommend_epochs(160, 1e8, 1e8, EpochRule::Literal) == 1);
    CHECK_THROWS(recommend_epochs(160, 0, 1));
    CHECK_THROWS(recommend_epochs(-1, 1, 1));
    CHECK(epoch_rule_from_string("literal") == EpochRule::Literal);
    CHECK(flop_convention_from_string("multiply-add") == FlopConvention::MultiplyAdd);
    CHECK_THROWS(flop_convention_from_string("flops"));
  }
}
