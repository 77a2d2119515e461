#include "ucp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ucp {

std::string to_string(ThresholdSign s) { return s == ThresholdSign::Minus ? "minus" : "plus"; }

ThresholdSign threshold_sign_from_string(const std::string& s) {
  if (s == "minus" || s == "-") return ThresholdSign::Minus;
  if (s == "plus" || s == "+") return ThresholdSign::Plus;
  throw PlanError("unknown threshold sign '" + s + "'");
}

std::string to_string(PrunePolicy p) {
  switch (p) {
    case PrunePolicy::VggPerLayer: return "vgg-per-layer";
    case PrunePolicy::ResnetStageUniform: return "resnet-stage-uniform";
    case PrunePolicy::BottleneckMiddle: return "bottleneck-middle";
  }
  return "vgg-per-layer";
}

PrunePolicy prune_policy_from_string(const std::string& s) {
  for (auto p : {PrunePolicy::VggPerLayer, PrunePolicy::ResnetStageUniform,
                 PrunePolicy::BottleneckMiddle})
    if (to_string(p) == s) return p;
  throw PlanError("unknown pruning policy '" + s + "'");
}

double PruneConfig::factor() const {
  const double lambda = std::pow(10.0, -static_cast<double>(beta));
  return sign == ThresholdSign::Minus ? 1.0 - lambda : 1.0 + lambda;
}

void PruneConfig::check() const {
  if (beta < 1) throw PlanError("beta must be >= 1");
  if (min_channels < 1) throw PlanError("min_channels must be >= 1");
  if (half_rule_tolerance < 0) throw PlanError("half-rule tolerance must be >= 0");
  for (const auto& [stage, target] : stage_targets)
    if (target < 1) throw PlanError("stage " + std::to_string(stage) + " target must be >= 1");
}

Threshold threshold(std::span<const double> scores, const PruneConfig& config) {
  if (scores.empty()) throw PlanError("cannot threshold an empty score vector");
  double sum = 0;
  for (double s : scores) sum += s;
  Threshold t;
  t.mean = sum / static_cast<double>(scores.size());
  t.factor = config.factor();
  t.value = t.factor * t.mean;
  return t;
}

std::vector<int> top_k(std::span<const double> scores, int k) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(std::clamp(k, 0, static_cast<int>(scores.size()))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> select_channels(std::span<const double> scores, const PruneConfig& config) {
  const int C = static_cast<int>(scores.size());
  const Threshold t = threshold(scores, config);
  std::vector<int> kept;

  bool plateau = false;
  if (config.half_rule) {
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    plateau = *hi - *lo <= config.half_rule_tolerance &&
              std::all_of(scores.begin(), scores.end(), [&](double s) {
                return std::abs(s - 0.5) <= config.half_rule_tolerance;
              });
  }
  if (plateau) {
    for (int i = 0; i < (C + 1) / 2; ++i) kept.push_back(i);
  } else {
    for (int i = 0; i < C; ++i)
      if (!(scores[static_cast<std::size_t>(i)] < t.value)) kept.push_back(i);
  }
  const int floor = std::min(config.min_channels, C);
  if (static_cast<int>(kept.size()) < floor) kept = top_k(scores, floor);
  return kept;
}

const LayerPlan* PruningPlan::layer(const std::string& id) const {
  for (const auto& l : layers)
    if (l.layer == id) return &l;
  return nullptr;
}

int PruningPlan::pruned_channels() const {
  int total = 0;
  for (const auto& l : layers) total += l.original - l.kept_count();
  for (const auto& s : stages) total += s.original - static_cast<int>(s.kept.size());
  return total;
}

PruningPlan plan_vgg(const ScoreRecord& scores, const PruneConfig& config, const Graph* graph) {
  config.check();
  PruningPlan plan;
  plan.config = config;
  if (graph) {
    for (const auto& id : graph->conv_ids()) {
      const LayerScore* s = scores.find(id);
      if (!s) throw PlanError("missing score entry for conv layer '" + id + "'");
      if (s->channels != graph->node(id).out_channels)
        throw PlanError("score entry for '" + id + "' has " + std::to_string(s->channels) +
                        " channels, layer has " + std::to_string(graph->node(id).out_channels));
      plan.layers.push_back({id, s->channels, select_channels(s->mean, config)});
    }
    return plan;
  }
  for (const auto& s : scores.layers) {
    const std::string id = s.conv.empty() ? s.layer : s.conv;
    plan.layers.push_back({id, s.channels, select_channels(s.mean, config)});
  }
  return plan;
}

namespace {

// Conv producing `id`'s channels, walking back through BN/ReLU/MSEB and
// through residual joins via their first operand.
std::string producing_conv(const Graph& g, std::string id) {
  while (true) {
    const LayerNode& n = g.node(id);
    if (n.kind == LayerKind::Conv) return n.id;
    if (n.inputs.empty()) return {};
    id = n.inputs[0];
  }
}

}  // namespace

std::vector<std::string> stage_output_convs(const Graph& graph, int stage) {
  std::vector<std::string> out;
  const StageAnnotation* st = nullptr;
  for (const auto& s : graph.stages)
    if (s.index == stage) st = &s;
  if (!st) throw PlanError("graph has no stage " + std::to_string(stage));
  for (std::size_t k = 0; k < st->blocks.size(); ++k) {
    const BlockAnnotation* b = graph.block(st->blocks[k]);
    if (!b) throw PlanError("stage " + std::to_string(stage) + " references unknown block");
    if (k == 0 && b->shortcut.empty()) {
      // Identity entry: the layer feeding the stage carries the stage channels.
      const std::string entry = producing_conv(graph, b->input);
      if (entry.empty()) throw PlanError("cannot find the layer feeding stage " + std::to_string(stage));
      out.push_back(entry);
    }
    out.push_back(b->last_conv());
    if (!b->shortcut.empty()) out.push_back(b->shortcut);
  }
  return out;
}

PruningPlan plan_stage_uniform(const ScoreRecord& scores, const Graph& graph,
                               const PruneConfig& config) {
  config.check();
  if (graph.stages.empty()) throw PlanError("graph has no stage annotations");
  PruningPlan plan;
  plan.config = config;
  for (const auto& st : graph.stages) {
    std::vector<const LayerScore*> block_scores;
    for (const auto& bid : st.blocks) {
      const BlockAnnotation* b = graph.block(bid);
      if (!b || b->type != BlockType::Basic)
        throw PlanError("stage-uniform pruning needs basic blocks; '" + bid + "' is not one");
      const LayerScore* s = scores.find(b->last_conv());
      if (!s) throw PlanError("missing block scores for '" + bid + "' (no entry for '" +
                              b->last_conv() + "')");
      if (s->channels != st.width)
        throw PlanError("scores for '" + bid + "' have " + std::to_string(s->channels) +
                        " channels, stage width is " + std::to_string(st.width));
      block_scores.push_back(s);
    }
    std::vector<double> agg(static_cast<std::size_t>(st.width), 0.0);
    double dispersion = 0;
    for (const LayerScore* s : block_scores) {
      for (std::size_t i = 0; i < agg.size(); ++i) agg[i] += s->mean[i];
      double sd = 0;
      for (double v : s->std) sd += v;
      dispersion += s->std.empty() ? 0.0 : sd / static_cast<double>(s->std.size());
    }
    for (auto& v : agg) v /= static_cast<double>(block_scores.size());
    dispersion /= static_cast<double>(block_scores.size());

    int target = st.width;
    if (auto it = config.stage_targets.find(st.index); it != config.stage_targets.end()) {
      target = it->second;
    } else if (config.dispersion_tau) {
      target = dispersion > *config.dispersion_tau ? std::max(1, st.width / 2) : st.width;
    } else {
      throw PlanError("no target width for stage " + std::to_string(st.index));
    }
    if (target > st.width)
      throw PlanError("stage " + std::to_string(st.index) + " target " + std::to_string(target) +
                      " exceeds stage width " + std::to_string(st.width));
    target = std::max(target, std::min(config.min_channels, st.width));

    StagePlan sp;
    sp.stage = st.index;
    sp.original = st.width;
    sp.target = target;
    sp.kept = top_k(agg, target);
    sp.layers = stage_output_convs(graph, st.index);
    plan.stages.push_back(std::move(sp));
  }
  return plan;
}

PruningPlan plan_bottleneck(const ScoreRecord& scores, const Graph& graph,
                            const PruneConfig& config) {
  config.check();
  PruningPlan plan;
  plan.config = config;
  int seen = 0;
  for (const auto& b : graph.blocks) {
    if (b.type == BlockType::Basic || b.convs.size() != 3) continue;
    ++seen;
    const std::string& mid = b.middle_conv();
    const LayerScore* s = scores.find(mid);
    if (!s) throw PlanError("missing scores for middle conv '" + mid + "'");
    if (s->channels != graph.node(mid).out_channels)
      throw PlanError("scores for '" + mid + "' do not match its width");
    plan.layers.push_back({mid, s->channels, select_channels(s->mean, config)});
  }
  if (seen == 0) throw PlanError("graph has no bottleneck blocks");
  return plan;
}

PruningPlan make_plan(const ScoreRecord& scores, const Graph& graph, const PruneConfig& config) {
  switch (config.policy) {
    case PrunePolicy::VggPerLayer: return plan_vgg(scores, config, &graph);
    case PrunePolicy::ResnetStageUniform: return plan_stage_uniform(scores, graph, config);
    case PrunePolicy::BottleneckMiddle: return plan_bottleneck(scores, graph, config);
  }
  throw PlanError("unknown policy");
}

PruningPlan identity_plan(const Graph& graph) {
  PruningPlan plan;
  for (const auto& id : graph.conv_ids()) {
    const int c = graph.node(id).out_channels;
    LayerPlan lp{id, c, {}};
    for (int i = 0; i < c; ++i) lp.kept.push_back(i);
    plan.layers.push_back(std::move(lp));
  }
  return plan;
}

PruningPlan width_plan(const Graph& graph, std::span<const int> widths) {
  const auto ids = graph.conv_ids();
  if (ids.size() != widths.size())
    throw PlanError("width list has " + std::to_string(widths.size()) + " entries, graph has " +
                    std::to_string(ids.size()) + " convs");
  PruningPlan plan;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int c = graph.node(ids[i]).out_channels;
    if (widths[i] < 1 || widths[i] > c)
      throw PlanError("width " + std::to_string(widths[i]) + " invalid for '" + ids[i] + "'");
    LayerPlan lp{ids[i], c, {}};
    for (int k = 0; k < widths[i]; ++k) lp.kept.push_back(k);
    plan.layers.push_back(std::move(lp));
  }
  return plan;
}

json config_to_json(const PruneConfig& c) {
  json j;
  j["beta"] = c.beta;
  j["sign"] = to_string(c.sign);
  j["min_channels"] = c.min_channels;
  j["half_rule"] = c.half_rule;
  j["half_rule_tolerance"] = c.half_rule_tolerance;
  json targets = json::object();
  for (const auto& [s, t] : c.stage_targets) targets[std::to_string(s)] = t;
  j["stage_targets"] = std::move(targets);
  j["dispersion_tau"] = c.dispersion_tau ? json(*c.dispersion_tau) : json(nullptr);
  j["policy"] = to_string(c.policy);
  return j;
}

PruneConfig config_from_json(const json& j) {
  PruneConfig c;
  c.beta = j.value("beta", 1);
  c.sign = threshold_sign_from_string(j.value("sign", "minus"));
  c.min_channels = j.value("min_channels", 1);
  c.half_rule = j.value("half_rule", false);
  c.half_rule_tolerance = j.value("half_rule_tolerance", 1e-6);
  if (j.contains("stage_targets"))
    for (const auto& [k, v] : j.at("stage_targets").items()) c.stage_targets[std::stoi(k)] = v.get<int>();
  if (j.contains("dispersion_tau") && !j.at("dispersion_tau").is_null())
    c.dispersion_tau = j.at("dispersion_tau").get<double>();
  c.policy = prune_policy_from_string(j.value("policy", "vgg-per-layer"));
  return c;
}

json plan_to_json(const PruningPlan& p) {
  json j;
  j["format"] = "ucp-plan/1";
  j["config"] = config_to_json(p.config);
  j["score_hash"] = p.score_hash;
  json layers = json::array();
  for (const auto& l : p.layers)
    layers.push_back({{"layer", l.layer}, {"original", l.original}, {"kept_count", l.kept_count()}, {"kept", l.kept}});
  j["layers"] = std::move(layers);
  json stages = json::array();
  for (const auto& s : p.stages)
    stages.push_back({{"stage", s.stage},
                      {"original", s.original},
                      {"target", s.target},
                      {"kept", s.kept},
                      {"layers", s.layers}});
  j["stages"] = std::move(stages);
  return j;
}

PruningPlan plan_from_json(const json& j) {
  PruningPlan p;
  p.config = config_from_json(j.value("config", json::object()));
  p.score_hash = j.value("score_hash", "");
  for (const auto& jl : j.value("layers", json::array()))
    p.layers.push_back({jl.at("layer").get<std::string>(), jl.at("original").get<int>(),
                        jl.at("kept").get<std::vector<int>>()});
  for (const auto& js : j.value("stages", json::array())) {
    StagePlan s;
    s.stage = js.at("stage").get<int>();
    s.original = js.at("original").get<int>();
    s.target = js.at("target").get<int>();
    s.kept = js.at("kept").get<std::vector<int>>();
    s.layers = js.at("layers").get<std::vector<std::string>>();
    p.stages.push_back(std::move(s));
  }
  return p;
}

}  // namespace ucp
