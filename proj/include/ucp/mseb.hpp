#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ucp/bundle.hpp"
#include "ucp/data.hpp"
#include "ucp/serialize.hpp"

namespace ucp {

/// Squeeze: mean of |u| over one H x W channel plane.
double squeeze(std::span<const float> plane);

/// Excitation: s = sigmoid(W2 relu(W1 z)). `w1` is hidden x C, `w2` is
/// C x hidden, both row-major. No bias terms.
std::vector<double> excite(std::span<const double> z, std::span<const double> w1,
                           std::span<const double> w2, int hidden);

/// Channel-wise product of a feature map with per-channel gates (one gate
/// vector shared by every sample in the batch).
Tensor4 scale(const Tensor4& u, std::span<const float> s);

/// Mean excitation of one MSEB node over the scored samples.
struct LayerScore {
  std::string layer;   // MSEB node id
  std::string conv;    // conv whose output channels the gates score
  std::string block;   // owning residual block, empty for plain layers
  int stage = 0;
  int channels = 0;
  std::vector<double> mean;  // in (0, 1)
  std::vector<double> std;   // population standard deviation per channel
  std::int64_t samples = 0;
};

struct BlockScoreSummary {
  std::string block;
  int stage = 0;
  double mean = 0;      // mean of the block's mean-score entries
  double min = 0;
  double max = 0;
  double mean_std = 0;  // mean per-channel dispersion
};

struct ScoreRecord {
  std::vector<LayerScore> layers;
  std::vector<BlockScoreSummary> blocks;
  std::string model_hash;

  /// Entry whose MSEB id or scored conv id equals `id`.
  [[nodiscard]] const LayerScore* find(const std::string& id) const;
  /// Recomputes block summaries from the layer entries.
  void summarize();
};

class ScoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Conv whose output channels an MSEB node gates (walks back through
/// batch-norm and ReLU). Empty when none is found.
std::string scored_conv(const Graph& g, const std::string& mseb_id);

/// Runs eval-mode forward passes over the first `max_batches` batches of
/// `data` (in order) and averages every MSEB's gate vectors.
ScoreRecord collect_scores(const ModelBundle& model, const Dataset& data, int batch_size,
                           int max_batches);

json scores_to_json(const ScoreRecord& r);
ScoreRecord scores_from_json(const json& j);

}  // namespace ucp
