#include "ucp/network.hpp"

namespace ucp {

template <typename T>
Network<T>::Network(Graph g, const ParamStore& params, NetOptions opts)
    : graph_(std::move(g)), opts_(opts) {
  check_params(graph_, params);
  for (const auto& slot : param_slots(graph_)) {
    params_.emplace(slot.name, params.at(slot.name).template cast<T>());
    if (slot.trainable) trainable_.push_back(slot.name);
  }
  for (const auto& n : graph_.nodes) {
    std::vector<int> idx;
    for (const auto& src : n.inputs) {
      const int j = graph_.find(src);
      if (j < 0) throw StructuralError("layer '" + n.id + "': unknown input '" + src + "'");
      idx.push_back(j);
    }
    if (idx.empty()) idx.push_back(-1);
    input_index_.push_back(std::move(idx));
  }
}

template <typename T>
ParamStore Network<T>::export_params() const {
  ParamStore out;
  for (const auto& [name, t] : params_) out.emplace(name, t.template cast<float>());
  return out;
}

template <typename T>
void Network<T>::zero_grads(GradTape<T>& tape) const {
  for (const auto& name : trainable_) {
    auto it = tape.grads.find(name);
    if (it == tape.grads.end())
      tape.grads.emplace(name, Tensor<T>(params_.at(name).shape()));
    else
      it->second.fill(T{0});
  }
}

template <typename T>
Tensor<T> Network<T>::forward_node(int i, const std::vector<const Tensor<T>*>& ins, Mode mode,
                                   TapeRecord<T>& rec) {
  const LayerNode& n = graph_.nodes[static_cast<std::size_t>(i)];
  const Tensor<T>& x = *ins[0];
  const bool train = mode == Mode::Train;
  auto p = [&](const char* slot) -> Tensor<T>& { return params_.at(n.id + "." + slot); };
  auto expect_channels = [&](int want) {
    if (x.c() != want)
      throw StructuralError("layer '" + n.id + "': expected " + std::to_string(want) +
                            " input channels, got " + std::to_string(x.c()));
  };

  switch (n.kind) {
    case LayerKind::Conv:
      expect_channels(n.in_channels);
      return ops::conv2d(x, p("weight"), n.bias ? &p("bias") : nullptr,
                         ops::ConvGeometry{n.stride, n.padding});
    case LayerKind::BatchNorm:
      expect_channels(n.channels);
      return ops::batchnorm(x, p("gamma"), p("beta"), p("running_mean"), p("running_var"), train,
                            opts_.bn_eps, opts_.bn_momentum, rec.bn);
    case LayerKind::ReLU:
      return ops::relu(x);
    case LayerKind::MaxPool:
      return ops::maxpool(x, n.pool_size, n.pool_stride, rec.argmax);
    case LayerKind::GlobalAvgPool:
      return ops::global_avg_pool(x);
    case LayerKind::FullyConnected:
      if (static_cast<int>(x.size() / static_cast<std::size_t>(x.n())) != n.in_channels)
        throw StructuralError("layer '" + n.id + "': expected " + std::to_string(n.in_channels) +
                              " input features, got " + x.shape().str());
      return ops::fully_connected(x, p("weight"), p("bias"));
    case LayerKind::Mseb: {
      expect_channels(n.channels);
      auto y = ops::mseb(x, p("w1"), p("w2"), opts_.mseb_identity, rec.mseb);
      gates_[n.id] = rec.mseb.s;
      return y;
    }
    case LayerKind::Add: {
      const Tensor<T>& b = *ins[1];
      if (b.shape() != x.shape())
        throw StructuralError("layer '" + n.id + "': add of " + x.shape().str() + " and " +
                              b.shape().str());
      Tensor<T> y = x;
      y += b;
      return y;
    }
    case LayerKind::Softmax:
      return ops::softmax(x);
  }
  throw StructuralError("layer '" + n.id + "': unsupported kind");
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode, GradTape<T>* tape) {
  if (x.c() != graph_.input.c)
    throw StructuralError("network input has " + std::to_string(x.c()) + " channels, expected " +
                          std::to_string(graph_.input.c));
  GradTape<T> local;
  GradTape<T>& t = tape ? *tape : local;
  t.clear_records();
  t.input = x;
  t.activations.resize(graph_.nodes.size());
  gates_.clear();

  std::vector<const Tensor<T>*> ins;
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    ins.clear();
    for (int j : input_index_[i])
      ins.push_back(j < 0 ? &t.input : &t.activations[static_cast<std::size_t>(j)]);
    TapeRecord<T> rec;
    rec.node = static_cast<int>(i);
    rec.mode = mode;
    t.activations[i] = forward_node(static_cast<int>(i), ins, mode, rec);
    if (tape) t.records.push_back(std::move(rec));
  }
  return t.activations.back();
}

template <typename T>
std::vector<Tensor<T>> Network<T>::backward_node(const TapeRecord<T>& rec,
                                                 const std::vector<const Tensor<T>*>& ins,
                                                 const Tensor<T>& out, const Tensor<T>& dy,
                                                 GradTape<T>& tape) {
  const LayerNode& n = graph_.nodes[static_cast<std::size_t>(rec.node)];
  if (dy.shape() != out.shape())
    throw StructuralError("layer '" + n.id + "': upstream gradient " + dy.shape().str() +
                          " does not match forward output " + out.shape().str());
  const Tensor<T>& x = *ins[0];
  auto p = [&](const char* slot) -> Tensor<T>& { return params_.at(n.id + "." + slot); };
  auto g = [&](const char* slot) -> Tensor<T>& {
    const std::string name = n.id + "." + slot;
    auto it = tape.grads.find(name);
    if (it == tape.grads.end())
      it = tape.grads.emplace(name, Tensor<T>(params_.at(name).shape())).first;
    return it->second;
  };
  const bool train = rec.mode == Mode::Train;

  switch (n.kind) {
    case LayerKind::Conv:
      return {ops::conv2d_backward(x, p("weight"), dy, ops::ConvGeometry{n.stride, n.padding},
                                   g("weight"), n.bias ? &g("bias") : nullptr)};
    case LayerKind::BatchNorm:
      return {ops::batchnorm_backward(dy, p("gamma"), rec.bn, train, g("gamma"), g("beta"))};
    case LayerKind::ReLU:
      return {ops::relu_backward(x, dy)};
    case LayerKind::MaxPool:
      return {ops::maxpool_backward(x.shape(), dy, rec.argmax)};
    case LayerKind::GlobalAvgPool:
      return {ops::global_avg_pool_backward(x.shape(), dy)};
    case LayerKind::FullyConnected:
      return {ops::fully_connected_backward(x, p("weight"), dy, g("weight"), g("bias"))};
    case LayerKind::Mseb:
      return {ops::mseb_backward(x, p("w1"), p("w2"), dy, opts_.mseb_identity, rec.mseb, g("w1"),
                                 g("w2"))};
    case LayerKind::Add:
      return {dy, dy};
    case LayerKind::Softmax:
      return {ops::softmax_backward(out, dy)};
  }
  throw StructuralError("layer '" + n.id + "': unsupported kind");
}

template <typename T>
Tensor<T> Network<T>::run_backward(GradTape<T>& tape, int seed_node, const Tensor<T>& seed_grad) {
  if (tape.records.size() != graph_.nodes.size())
    throw StructuralError("backward called without a recorded forward pass");
  std::vector<Tensor<T>> grads(graph_.nodes.size());
  Tensor<T> input_grad(tape.input.shape());
  grads[static_cast<std::size_t>(seed_node)] = seed_grad;

  std::vector<const Tensor<T>*> ins;
  for (auto it = tape.records.rbegin(); it != tape.records.rend(); ++it) {
    const auto i = static_cast<std::size_t>(it->node);
    if (grads[i].empty()) continue;
    ins.clear();
    for (int j : input_index_[i])
      ins.push_back(j < 0 ? &tape.input : &tape.activations[static_cast<std::size_t>(j)]);
    auto dins = backward_node(*it, ins, tape.activations[i], grads[i], tape);
    for (std::size_t k = 0; k < dins.size(); ++k) {
      const int j = input_index_[i][k];
      Tensor<T>& dst = j < 0 ? input_grad : grads[static_cast<std::size_t>(j)];
      if (dst.empty()) dst = std::move(dins[k]);
      else dst += dins[k];
    }
    grads[i] = Tensor<T>();
  }
  return input_grad;
}

template <typename T>
Tensor<T> Network<T>::backward(GradTape<T>& tape, const Tensor<T>& grad_out) {
  return run_backward(tape, static_cast<int>(graph_.nodes.size()) - 1, grad_out);
}

template <typename T>
Tensor<T> Network<T>::backward_from_logits(GradTape<T>& tape, const Tensor<T>& grad_logits) {
  const LayerNode& last = graph_.nodes.back();
  if (last.kind != LayerKind::Softmax || last.inputs.size() != 1)
    throw StructuralError("backward_from_logits requires a softmax sink");
  return run_backward(tape, graph_.find(last.inputs[0]), grad_logits);
}

template class Network<float>;
template class Network<double>;

}  // namespace ucp
