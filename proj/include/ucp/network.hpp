#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ucp/bundle.hpp"
#include "ucp/graph.hpp"
#include "ucp/ops.hpp"

namespace ucp {

enum class Mode { Train, Eval };

struct NetOptions {
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  // MSEB nodes compute their gates but pass features through unscaled.
  bool mseb_identity = false;
};

/// Forward record of one executed node.
template <typename T>
struct TapeRecord {
  int node = -1;
  Mode mode = Mode::Train;
  ops::BatchNormCache<T> bn;
  ops::MsebCache<T> mseb;
  std::vector<std::size_t> argmax;
};

/// Operations recorded during a forward pass plus accumulated parameter
/// gradients. Backward replays `records` in reverse.
template <typename T>
struct GradTape {
  Tensor<T> input;
  std::vector<Tensor<T>> activations;  // per node, graph order
  std::vector<TapeRecord<T>> records;  // execution order
  std::map<std::string, Tensor<T>> grads;

  void clear_records() {
    activations.clear();
    records.clear();
  }
};

/// Executable view of a graph with parameters held in precision T.
template <typename T>
class Network {
 public:
  Network(Graph g, const ParamStore& params, NetOptions opts = {});

  /// Runs every node in graph order and returns the last node's output.
  /// When `tape` is given, records what backward needs.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, GradTape<T>* tape = nullptr);

  /// Backpropagates `grad_out` (w.r.t. the last node's output) and
  /// accumulates into tape.grads. Returns the gradient w.r.t. the input.
  Tensor<T> backward(GradTape<T>& tape, const Tensor<T>& grad_out);

  /// Same, seeding the gradient at the softmax input (fused cross-entropy).
  Tensor<T> backward_from_logits(GradTape<T>& tape, const Tensor<T>& grad_logits);

  /// Zero-filled gradient buffers for every trainable parameter.
  void zero_grads(GradTape<T>& tape) const;

  [[nodiscard]] const Graph& graph() const { return graph_; }
  [[nodiscard]] const NetOptions& options() const { return opts_; }
  NetOptions& options() { return opts_; }

  std::map<std::string, Tensor<T>>& params() { return params_; }
  [[nodiscard]] const std::map<std::string, Tensor<T>>& params() const { return params_; }
  [[nodiscard]] const std::vector<std::string>& trainable() const { return trainable_; }

  /// Parameters converted back to float32.
  [[nodiscard]] ParamStore export_params() const;

  /// Per-sample MSEB gates from the most recent forward pass, keyed by node id.
  [[nodiscard]] const std::map<std::string, Tensor<T>>& gates() const { return gates_; }

 private:
  Tensor<T> run_backward(GradTape<T>& tape, int seed_node, const Tensor<T>& seed_grad);
  Tensor<T> forward_node(int i, const std::vector<const Tensor<T>*>& ins, Mode mode,
                         TapeRecord<T>& rec);
  std::vector<Tensor<T>> backward_node(const TapeRecord<T>& rec,
                                       const std::vector<const Tensor<T>*>& ins,
                                       const Tensor<T>& out, const Tensor<T>& dy,
                                       GradTape<T>& tape);

  Graph graph_;
  NetOptions opts_;
  std::map<std::string, Tensor<T>> params_;
  std::vector<std::string> trainable_;
  std::vector<std::vector<int>> input_index_;  // producer indices; -1 = graph input
  std::map<std::string, Tensor<T>> gates_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace ucp
