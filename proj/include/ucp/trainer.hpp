#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ucp/accounting.hpp"
#include "ucp/bundle.hpp"
#include "ucp/data.hpp"
#include "ucp/serialize.hpp"

namespace ucp {

enum class LossVariant { SoftmaxCe, PerClassBce };
std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

/// Normalizer of the L2 penalty: (wd / 2n) * sum w^2 with n the weight count,
/// or the plain (wd / 2) * sum w^2.
enum class PenaltyNorm { PerWeight, Sum };
std::string to_string(PenaltyNorm p);
PenaltyNorm penalty_norm_from_string(const std::string& s);

inline constexpr double kProbClamp = 1e-12;

struct TrainConfig {
  int epochs = 20;
  int batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> milestones{0.5, 0.75};  // fractions of `epochs`
  double lr_drop = 0.1;
  std::uint64_t seed = 0;
  LossVariant loss = LossVariant::SoftmaxCe;
  PenaltyNorm penalty = PenaltyNorm::PerWeight;
  bool augment = false;  // random pad-crop and horizontal flip

  void check() const;
};

json train_config_to_json(const TrainConfig& c);
/// Fields missing from `j` keep the values of `base`.
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});

/// Learning rate in effect during `epoch` (0-based).
double lr_at(const TrainConfig& c, int epoch);

/// Names of the parameters the L2 penalty applies to (conv, fc and MSEB
/// weights; biases and batch-norm parameters are excluded).
std::vector<std::string> penalized(const Graph& g);

/// Data term averaged over the batch. `probs` is (N, K, 1, 1).
double data_loss(const Tensor4d& probs, std::span<const int> labels, LossVariant v);

/// L2 penalty over the given weight tensors.
double penalty(std::span<const Tensor4d* const> weights, double weight_decay, PenaltyNorm norm);

/// total = data term + penalty.
double loss(const Tensor4d& probs, std::span<const int> labels,
            std::span<const Tensor4d* const> weights, double weight_decay, LossVariant v,
            PenaltyNorm norm = PenaltyNorm::PerWeight);

/// Gradient of the batch-mean data term w.r.t. the softmax output.
template <typename T>
Tensor<T> loss_grad_probs(const Tensor<T>& probs, std::span<const int> labels, LossVariant v);

/// One momentum step: v = momentum * v - lr * g; w += v.
void sgd_update(std::span<float> w, std::span<const float> g, std::span<float> v, float lr,
                float momentum);

struct OptimizerState {
  std::map<std::string, Tensor4> velocity;  // zero-initialized, parameter shapes
};

/// Applies sgd_update to every parameter that has a gradient.
void sgd_step(std::map<std::string, Tensor4>& params, const std::map<std::string, Tensor4>& grads,
              OptimizerState& state, double lr, double momentum);

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double eval_acc = 0;
};

struct TrainResult {
  ModelBundle best;  // checkpoint with the highest eval accuracy
  ModelBundle last;
  int best_epoch = -1;
  std::vector<EpochRecord> history;
};

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classification accuracy in eval mode.
double evaluate(const ModelBundle& model, const Dataset& data, int batch_size = 256);

TrainResult train(const ModelBundle& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& config);

/// Trains a freshly initialized compact model for report.epochs epochs.
TrainResult retrain_scratch(const ModelBundle& compact, const Dataset& train_set,
                            const Dataset& eval_set, TrainConfig base,
                            const CompressionReport& report);

/// Continues training a weight-inheriting compact model with `config`.
TrainResult fine_tune(const ModelBundle& compact, const Dataset& train_set,
                      const Dataset& eval_set, const TrainConfig& config);

json history_to_json(const TrainResult& r);

}  // namespace ucp
