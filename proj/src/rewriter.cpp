#include "ucp/rewriter.hpp"

#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "ucp/accounting.hpp"

namespace ucp {

std::string to_string(RewriteMode m) {
  return m == RewriteMode::InheritWeights ? "inherit-weights" : "architecture-only";
}

RewriteMode rewrite_mode_from_string(const std::string& s) {
  if (s == "inherit-weights" || s == "finetune") return RewriteMode::InheritWeights;
  if (s == "architecture-only" || s == "scratch") return RewriteMode::ArchitectureOnly;
  throw RewriteError("unknown rewrite mode '" + s + "'");
}

namespace {

using Kept = std::optional<std::vector<int>>;

void check_indices(const std::string& id, const std::vector<int>& kept, int c) {
  if (kept.empty()) throw RewriteError("plan empties layer '" + id + "' (width < 1)");
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] < 0 || kept[i] >= c)
      throw RewriteError("plan index " + std::to_string(kept[i]) + " out of range for '" + id +
                         "' with " + std::to_string(c) + " channels");
    if (i > 0 && kept[i] <= kept[i - 1])
      throw RewriteError("plan indices for '" + id + "' are not sorted and unique");
  }
}

std::map<std::string, std::vector<int>> planned_outputs(const Graph& g, const PruningPlan& plan) {
  std::map<std::string, std::vector<int>> out;
  auto add = [&](const std::string& id, int original, const std::vector<int>& kept) {
    const int idx = g.find(id);
    if (idx < 0) throw RewriteError("plan references unknown layer '" + id + "'");
    const LayerNode& n = g.nodes[static_cast<std::size_t>(idx)];
    if (n.kind != LayerKind::Conv) throw RewriteError("plan layer '" + id + "' is not a conv");
    if (n.out_channels != original)
      throw RewriteError("plan expects " + std::to_string(original) + " channels for '" + id +
                         "', model has " + std::to_string(n.out_channels));
    check_indices(id, kept, original);
    auto [it, inserted] = out.emplace(id, kept);
    if (!inserted && it->second != kept)
      throw RewriteError("plan gives layer '" + id + "' two different index sets");
  };
  for (const auto& l : plan.layers) add(l.layer, l.original, l.kept);
  for (const auto& s : plan.stages)
    for (const auto& id : s.layers) add(id, s.original, s.kept);
  return out;
}

std::vector<int> full(int c) {
  std::vector<int> v(static_cast<std::size_t>(c));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Selects rows (dim n) and columns (dim c) of a parameter tensor.
Tensor4 slice(const Tensor4& t, const Kept& rows, const Kept& cols) {
  const std::vector<int> r = rows ? *rows : full(t.n());
  const std::vector<int> c = cols ? *cols : full(t.c());
  Tensor4 out(static_cast<int>(r.size()), static_cast<int>(c.size()), t.h(), t.w());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x)
          out.at(static_cast<int>(i), static_cast<int>(j), y, x) = t.at(r[i], c[j], y, x);
  return out;
}

}  // namespace

std::vector<Kept> propagate_channels(const Graph& g, const PruningPlan& plan) {
  const auto planned = planned_outputs(g, plan);
  const auto shapes = infer_shapes(g);
  std::vector<Kept> kept(g.nodes.size());
  auto of = [&](const std::string& id) -> const Kept& {
    return kept[static_cast<std::size_t>(g.find(id))];
  };
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& n = g.nodes[i];
    switch (n.kind) {
      case LayerKind::Conv:
        if (auto it = planned.find(n.id); it != planned.end() &&
                                          static_cast<int>(it->second.size()) != n.out_channels)
          kept[i] = it->second;
        break;
      case LayerKind::FullyConnected:
      case LayerKind::Softmax:
        break;
      case LayerKind::Add: {
        const int c = shapes.at(n.id).c;
        const std::vector<int> a = of(n.inputs[0]) ? *of(n.inputs[0]) : full(c);
        const std::vector<int> b = of(n.inputs[1]) ? *of(n.inputs[1]) : full(c);
        if (a != b)
          throw RewriteError("plan prunes the inputs of residual join '" + n.id + "' ('" +
                             n.inputs[0] + "', '" + n.inputs[1] + "') differently");
        kept[i] = of(n.inputs[0]);
        break;
      }
      default:
        if (!n.inputs.empty()) kept[i] = of(n.inputs[0]);
        break;
    }
  }
  return kept;
}

ModelBundle apply(const ModelBundle& model, const PruningPlan& plan, const RewriteOptions& opts) {
  if (opts.mode == RewriteMode::ArchitectureOnly && !opts.reseed)
    throw RewriteError("architecture-only rewrite needs a seed");
  const Graph& g = model.graph;
  const auto kept = propagate_channels(g, plan);
  auto in_kept = [&](const LayerNode& n) -> const Kept& {
    static const Kept none;
    if (n.inputs.empty()) return none;
    return kept[static_cast<std::size_t>(g.find(n.inputs[0]))];
  };

  ModelBundle out;
  out.graph = g;
  out.meta = model.meta;
  std::set<std::string> reinit;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const LayerNode& src = g.nodes[i];
    LayerNode& dst = out.graph.nodes[i];
    const Kept& in = in_kept(src);
    switch (src.kind) {
      case LayerKind::Conv:
        if (in) dst.in_channels = static_cast<int>(in->size());
        if (kept[i]) dst.out_channels = static_cast<int>(kept[i]->size());
        break;
      case LayerKind::FullyConnected:
        if (in) dst.in_channels = static_cast<int>(in->size());
        break;
      case LayerKind::BatchNorm:
        if (in) dst.channels = static_cast<int>(in->size());
        break;
      case LayerKind::Mseb:
        if (in) {
          dst.channels = static_cast<int>(in->size());
          if (dst.mseb_hidden() != src.mseb_hidden()) reinit.insert(src.id);
        }
        break;
      default:
        break;
    }
    if (dst.kind == LayerKind::Conv && (dst.in_channels < 1 || dst.out_channels < 1))
      throw RewriteError("rewrite leaves layer '" + dst.id + "' with width < 1");
  }
  for (auto& st : out.graph.stages)
    for (const auto& ps : plan.stages)
      if (ps.stage == st.index) st.width = static_cast<int>(ps.kept.size());

  if (opts.mode == RewriteMode::InheritWeights) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const LayerNode& n = g.nodes[i];
      const Kept& in = in_kept(n);
      auto take = [&](const std::string& slot, const Kept& rows, const Kept& cols) {
        const std::string name = n.id + "." + slot;
        out.params[name] = slice(model.params.at(name), rows, cols);
      };
      switch (n.kind) {
        case LayerKind::Conv:
          take("weight", kept[i], in);
          if (n.bias) take("bias", kept[i], std::nullopt);
          break;
        case LayerKind::FullyConnected:
          take("weight", std::nullopt, in);
          take("bias", std::nullopt, std::nullopt);
          break;
        case LayerKind::BatchNorm:
          for (const char* s : {"gamma", "beta", "running_mean", "running_var"}) take(s, in, std::nullopt);
          break;
        case LayerKind::Mseb:
          if (opts.strip_mseb) break;
          if (reinit.count(n.id)) {
            Graph one;
            one.nodes.push_back(out.graph.nodes[i]);
            for (auto& [k, v] : init_params(one, opts.reseed.value_or(model.meta.seed) + i))
              out.params[k] = std::move(v);
          } else {
            take("w1", std::nullopt, in);
            take("w2", in, std::nullopt);
          }
          break;
        default:
          break;
      }
    }
  }

  if (opts.strip_mseb) out.graph = strip_mseb(out.graph);
  const auto violations = validate(out.graph);
  if (!violations.empty())
    throw RewriteError("rewritten graph is invalid at '" + violations.front().node +
                       "': " + violations.front().message);

  if (opts.mode == RewriteMode::ArchitectureOnly) {
    out.params = init_params(out.graph, *opts.reseed);
    out.meta.epochs_seen = 0;
    out.meta.seed = *opts.reseed;
    out.meta.init_scheme = "fan-in-gaussian";
  }
  out.meta.notes["rewrite_mode"] = to_string(opts.mode);
  if (!plan.score_hash.empty()) out.meta.notes["plan_score_hash"] = plan.score_hash;
  check_params(out.graph, out.params);
  return out;
}

namespace {

int node_width(const LayerNode& n) {
  switch (n.kind) {
    case LayerKind::Conv: return n.out_channels;
    case LayerKind::FullyConnected: return n.in_channels;
    case LayerKind::BatchNorm:
    case LayerKind::Mseb: return n.channels;
    default: return 0;
  }
}

}  // namespace

RewriteSummary summarize(const Graph& before, const Graph& after) {
  RewriteSummary s;
  for (const auto& n : before.nodes) {
    if (!n.has_params()) continue;
    LayerDiff d;
    d.id = n.id;
    d.kind = n.kind;
    d.width_before = node_width(n);
    d.params_before = node_params(n);
    if (after.contains(n.id)) {
      const LayerNode& m = after.node(n.id);
      d.width_after = node_width(m);
      d.params_after = node_params(m);
    }
    s.layers.push_back(d);
  }
  for (const auto& m : after.nodes)
    if (m.has_params() && !before.contains(m.id)) {
      LayerDiff d;
      d.id = m.id;
      d.kind = m.kind;
      d.width_after = node_width(m);
      d.params_after = node_params(m);
      s.layers.push_back(d);
    }
  for (const auto& d : s.layers) {
    s.params_before += d.params_before;
    s.params_after += d.params_after;
  }
  return s;
}

std::string format_summary(const RewriteSummary& s) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %-15s %8s %8s %12s\n", "layer", "kind", "before", "after",
                "param delta");
  out += line;
  for (const auto& d : s.layers) {
    std::snprintf(line, sizeof line, "%-22s %-15s %8d %8d %12lld\n", d.id.c_str(),
                  to_string(d.kind).c_str(), d.width_before, d.width_after,
                  static_cast<long long>(d.delta()));
    out += line;
  }
  std::snprintf(line, sizeof line, "total params %lld -> %lld (%lld)\n",
                static_cast<long long>(s.params_before), static_cast<long long>(s.params_after),
                static_cast<long long>(s.params_after - s.params_before));
  out += line;
  return out;
}

}  // namespace ucp
