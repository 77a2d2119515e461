#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ucp/accounting.hpp"
#include "ucp/builders.hpp"
#include "ucp/data.hpp"
#include "ucp/mseb.hpp"
#include "ucp/planner.hpp"
#include "ucp/rewriter.hpp"
#include "ucp/trainer.hpp"

namespace ucp {

struct PipelineConfig {
  std::string arch = "tiny-vgg";
  BuildOptions build;  // with_mseb is forced on
  DatasetSpec train_data;
  DatasetSpec eval_data;
  TrainConfig train;
  PruneConfig prune;
  RewriteMode retrain_mode = RewriteMode::ArchitectureOnly;
  TrainConfig finetune;  // used when retrain_mode is InheritWeights
  FlopConvention flops = FlopConvention::Mac;
  EpochRule epoch_rule = EpochRule::ComputeEqual;
  int score_batch_size = 64;
  int score_batches = 8;
  std::uint64_t seed = 0;  // model init and compact re-init
  std::filesystem::path out_dir;  // empty: keep artifacts in memory only
};

/// Defaults for the desk-scale tiny-vgg experiment on the planted task
/// (amplitude 0.2 against unit noise, 1024 train / 2048 eval samples).
PipelineConfig default_pipeline_config();

json pipeline_config_to_json(const PipelineConfig& c);
/// Fields missing from `j` keep the defaults.
PipelineConfig pipeline_config_from_json(const json& j);

struct StageRecord {
  std::string name;
  std::string status;  // ok | failed
  std::vector<std::string> input_hashes;
  std::string output_hash;
  std::string output_path;
  double wall_seconds = 0;
  std::string error;
};

struct ExperimentManifest {
  json config;
  std::vector<StageRecord> stages;
  std::string status = "running";  // running | ok | failed
  std::string failed_stage;
  std::vector<float> norm_mean;
  std::vector<float> norm_std;
};

json manifest_to_json(const ExperimentManifest& m);

struct PipelineResult {
  ExperimentManifest manifest;
  ModelBundle baseline;  // trained, MSEB-bearing
  ScoreRecord scores;
  PruningPlan plan;
  ModelBundle compact;   // as emitted by the rewriter
  ModelBundle retrained;
  CompressionReport report;
  double baseline_eval_acc = 0;
  double retrained_eval_acc = 0;
  TrainResult baseline_run;
  TrainResult retrain_run;
};

class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Runs train -> score -> plan -> apply -> retrain -> report. When out_dir is
/// set every artifact and the manifest are written there; on failure the
/// partial manifest is written and PipelineError names the stage.
PipelineResult run_pipeline(const PipelineConfig& config);

struct SweepPoint {
  PruneConfig config;
  int pruned_channels = 0;
  CompressionReport report;
};

/// Plans and rewrites (architecture only) for each configuration against
/// one fixed score record.
std::vector<SweepPoint> sweep(const ModelBundle& model, const ScoreRecord& scores,
                              const std::vector<PruneConfig>& configs,
                              FlopConvention flops = FlopConvention::Mac);

/// The ordering (minus,2) (minus,4) (minus,6) (minus,8) (plus,6) (plus,4) (plus,2).
std::vector<PruneConfig> ablation_sequence(const PruneConfig& base);

/// Signal/noise split of the first scored layer. Channels are ranked by
/// the between-class / within-class variance ratio of their per-sample mean
/// MSEB input; the upper half counts as signal-carrying.
struct PlantedAnalysis {
  std::string layer;
  std::vector<double> fisher;
  std::vector<double> kernel_signal_share;  // share of conv kernel energy on signal inputs
  std::vector<double> scores;
  std::vector<int> signal;
  std::vector<int> noise;
  double signal_mean = 0;
  double noise_mean = 0;
  [[nodiscard]] bool holds() const { return signal_mean > noise_mean; }
};

PlantedAnalysis analyze_planted(const ModelBundle& model, const Dataset& data,
                                const ScoreRecord& scores, int signal_inputs);

}  // namespace ucp
