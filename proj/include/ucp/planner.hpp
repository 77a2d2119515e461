#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ucp/graph.hpp"
#include "ucp/mseb.hpp"
#include "ucp/serialize.hpp"

namespace ucp {

enum class ThresholdSign { Minus, Plus };
enum class PrunePolicy { VggPerLayer, ResnetStageUniform, BottleneckMiddle };

std::string to_string(ThresholdSign s);
ThresholdSign threshold_sign_from_string(const std::string& s);
std::string to_string(PrunePolicy p);
PrunePolicy prune_policy_from_string(const std::string& s);

struct PruneConfig {
  int beta = 1;  // threshold offset lambda = 10^-beta
  ThresholdSign sign = ThresholdSign::Minus;
  int min_channels = 1;
  bool half_rule = false;
  double half_rule_tolerance = 1e-6;
  std::map<int, int> stage_targets;  // stage index -> target I/O width
  // Experimental: when a stage has no explicit target and the mean per-block
  // score dispersion exceeds this, the stage is halved; otherwise kept.
  std::optional<double> dispersion_tau;
  PrunePolicy policy = PrunePolicy::VggPerLayer;

  /// 1 - 10^-beta or 1 + 10^-beta.
  [[nodiscard]] double factor() const;
  void check() const;
};

struct Threshold {
  double mean = 0;
  double factor = 0;
  double value = 0;  // factor * mean
};

/// Threshold = (1 +/- 10^-beta) * mean(scores).
Threshold threshold(std::span<const double> scores, const PruneConfig& config);

/// Indices (ascending) of channels that survive: score >= threshold, with
/// the half-cut rule and the min-channel floor applied.
std::vector<int> select_channels(std::span<const double> scores, const PruneConfig& config);

/// Indices of the `k` largest scores (ties to the lower index), ascending.
std::vector<int> top_k(std::span<const double> scores, int k);

struct LayerPlan {
  std::string layer;  // conv whose output channels are pruned
  int original = 0;
  std::vector<int> kept;
  [[nodiscard]] int kept_count() const { return static_cast<int>(kept.size()); }
};

struct StagePlan {
  int stage = 0;
  int original = 0;
  int target = 0;
  std::vector<int> kept;            // shared by every member block
  std::vector<std::string> layers;  // convs whose outputs carry the stage channels
};

struct PruningPlan {
  PruneConfig config;
  std::string score_hash;
  std::vector<LayerPlan> layers;
  std::vector<StagePlan> stages;

  [[nodiscard]] const LayerPlan* layer(const std::string& id) const;
  [[nodiscard]] int pruned_channels() const;
};

class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-layer threshold pruning of every scored conv. With a graph, every
/// conv of the graph must have a score entry.
PruningPlan plan_vgg(const ScoreRecord& scores, const PruneConfig& config,
                     const Graph* graph = nullptr);

/// One shared index set per stage applied to all block inputs/outputs.
PruningPlan plan_stage_uniform(const ScoreRecord& scores, const Graph& graph,
                               const PruneConfig& config);

/// Threshold pruning of each bottleneck's middle 3x3 conv only.
PruningPlan plan_bottleneck(const ScoreRecord& scores, const Graph& graph,
                            const PruneConfig& config);

/// Dispatches on config.policy.
PruningPlan make_plan(const ScoreRecord& scores, const Graph& graph, const PruneConfig& config);

/// Plan keeping every channel of every conv.
PruningPlan identity_plan(const Graph& graph);

/// Plan that keeps the first widths[i] channels of the i-th conv (graph
/// order). Used to apply published channel counts.
PruningPlan width_plan(const Graph& graph, std::span<const int> widths);

/// Convs whose outputs are rewritten by stage-uniform pruning of `stage`.
std::vector<std::string> stage_output_convs(const Graph& graph, int stage);

json plan_to_json(const PruningPlan& p);
PruningPlan plan_from_json(const json& j);
json config_to_json(const PruneConfig& c);
PruneConfig config_from_json(const json& j);

}  // namespace ucp
