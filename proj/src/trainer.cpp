#include "ucp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ucp/network.hpp"

namespace ucp {

std::string to_string(LossVariant v) {
  return v == LossVariant::SoftmaxCe ? "softmax-ce" : "per-class-bce";
}

LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "softmax-ce") return LossVariant::SoftmaxCe;
  if (s == "per-class-bce") return LossVariant::PerClassBce;
  throw std::invalid_argument("unknown loss variant '" + s + "'");
}

std::string to_string(PenaltyNorm p) { return p == PenaltyNorm::PerWeight ? "per-weight" : "sum"; }

PenaltyNorm penalty_norm_from_string(const std::string& s) {
  if (s == "per-weight") return PenaltyNorm::PerWeight;
  if (s == "sum") return PenaltyNorm::Sum;
  throw std::invalid_argument("unknown penalty normalization '" + s + "'");
}

void TrainConfig::check() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw std::invalid_argument("weight decay must be >= 0");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"milestones", c.milestones},
          {"lr_drop", c.lr_drop},
          {"seed", c.seed},
          {"loss", to_string(c.loss)},
          {"penalty", to_string(c.penalty)},
          {"augment", c.augment}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.milestones = j.value("milestones", c.milestones);
  c.lr_drop = j.value("lr_drop", c.lr_drop);
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss")) c.loss = loss_variant_from_string(j.at("loss").get<std::string>());
  if (j.contains("penalty")) c.penalty = penalty_norm_from_string(j.at("penalty").get<std::string>());
  c.augment = j.value("augment", c.augment);
  c.check();
  return c;
}

double lr_at(const TrainConfig& c, int epoch) {
  double lr = c.lr;
  for (double m : c.milestones)
    if (static_cast<double>(epoch) >= m * static_cast<double>(c.epochs)) lr *= c.lr_drop;
  return lr;
}

std::vector<std::string> penalized(const Graph& g) {
  std::vector<std::string> out;
  for (const auto& slot : param_slots(g)) {
    const std::string suffix = slot.name.substr(slot.name.rfind('.') + 1);
    if (suffix == "weight" || suffix == "w1" || suffix == "w2") out.push_back(slot.name);
  }
  return out;
}

double data_loss(const Tensor4d& probs, std::span<const int> labels, LossVariant v) {
  const int N = probs.n();
  const int K = probs.c();
  if (static_cast<int>(labels.size()) != N) throw std::invalid_argument("label count mismatch");
  double total = 0;
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const double p = std::clamp(probs.at(n, k, 0, 0), kProbClamp, 1.0 - kProbClamp);
      const bool y = labels[static_cast<std::size_t>(n)] == k;
      if (y) total -= std::log(p);
      else if (v == LossVariant::PerClassBce) total -= std::log(1.0 - p);
    }
  }
  return total / N;
}

double penalty(std::span<const Tensor4d* const> weights, double weight_decay, PenaltyNorm norm) {
  double sq = 0;
  std::size_t n = 0;
  for (const Tensor4d* w : weights) {
    for (double v : w->data()) sq += v * v;
    n += w->size();
  }
  if (n == 0) return 0.0;
  const double denom = norm == PenaltyNorm::PerWeight ? 2.0 * static_cast<double>(n) : 2.0;
  return weight_decay / denom * sq;
}

double loss(const Tensor4d& probs, std::span<const int> labels,
            std::span<const Tensor4d* const> weights, double weight_decay, LossVariant v,
            PenaltyNorm norm) {
  return data_loss(probs, labels, v) + penalty(weights, weight_decay, norm);
}

template <typename T>
Tensor<T> loss_grad_probs(const Tensor<T>& probs, std::span<const int> labels, LossVariant v) {
  Tensor<T> g(probs.shape());
  const T inv = T{1} / static_cast<T>(probs.n());
  for (int n = 0; n < probs.n(); ++n)
    for (int k = 0; k < probs.c(); ++k) {
      const T p = std::clamp(probs.at(n, k, 0, 0), static_cast<T>(kProbClamp),
                             static_cast<T>(1.0 - kProbClamp));
      if (labels[static_cast<std::size_t>(n)] == k) g.at(n, k, 0, 0) = -inv / p;
      else if (v == LossVariant::PerClassBce) g.at(n, k, 0, 0) = inv / (T{1} - p);
    }
  return g;
}

template Tensor<float> loss_grad_probs(const Tensor<float>&, std::span<const int>, LossVariant);
template Tensor<double> loss_grad_probs(const Tensor<double>&, std::span<const int>, LossVariant);

void sgd_update(std::span<float> w, std::span<const float> g, std::span<float> v, float lr,
                float momentum) {
  if (w.size() != g.size() || w.size() != v.size())
    throw std::invalid_argument("sgd_update: size mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = momentum * v[i] - lr * g[i];
    w[i] += v[i];
  }
}

void sgd_step(std::map<std::string, Tensor4>& params, const std::map<std::string, Tensor4>& grads,
              OptimizerState& state, double lr, double momentum) {
  for (const auto& [name, g] : grads) {
    Tensor4& w = params.at(name);
    if (w.shape() != g.shape())
      throw StructuralError("gradient for '" + name + "' has shape " + g.shape().str() +
                            ", parameter has " + w.shape().str());
    auto it = state.velocity.find(name);
    if (it == state.velocity.end()) it = state.velocity.emplace(name, Tensor4(w.shape())).first;
    sgd_update(w.data(), g.data(), it->second.data(), static_cast<float>(lr),
               static_cast<float>(momentum));
  }
}

namespace {

int argmax_row(const Tensor4& p, int n) {
  int best = 0;
  for (int k = 1; k < p.c(); ++k)
    if (p.at(n, k, 0, 0) > p.at(n, best, 0, 0)) best = k;
  return best;
}

// Zero-padded random crop (pad = size / 8) and horizontal flip.
void augment(Tensor4& x, std::mt19937_64& rng) {
  const int pad = std::max(1, x.h() / 8);
  std::uniform_int_distribution<int> shift(-pad, pad);
  std::bernoulli_distribution flip(0.5);
  Tensor4 src = x;
  for (int n = 0; n < x.n(); ++n) {
    const int dy = shift(rng), dx = shift(rng);
    const bool f = flip(rng);
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int xx = 0; xx < x.w(); ++xx) {
          const int sy = y + dy;
          int sx = xx + dx;
          if (f) sx = x.w() - 1 - sx;
          x.at(n, c, y, xx) =
              (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) ? 0.0f : src.at(n, c, sy, sx);
        }
  }
}

void check_dataset(const ModelBundle& m, const Dataset& d, const char* what) {
  if (d.size() == 0) throw TrainError(std::string(what) + " set is empty");
  if (d.num_classes != m.graph.num_classes)
    throw TrainError(std::string(what) + " set has " + std::to_string(d.num_classes) +
                     " classes, model head has " + std::to_string(m.graph.num_classes));
  if (d.channels != m.graph.input.c)
    throw TrainError(std::string(what) + " set has " + std::to_string(d.channels) +
                     " channels, model expects " + std::to_string(m.graph.input.c));
}

double accuracy(Network<float>& net, const Dataset& data, int batch_size) {
  std::size_t correct = 0;
  for (std::size_t first = 0; first < data.size(); first += static_cast<std::size_t>(batch_size)) {
    const auto idx = data.range(first, static_cast<std::size_t>(batch_size));
    const Tensor4 p = net.forward(data.batch(idx), Mode::Eval);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (argmax_row(p, static_cast<int>(i)) == data.labels[idx[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

double evaluate(const ModelBundle& model, const Dataset& data, int batch_size) {
  check_dataset(model, data, "evaluation");
  Network<float> net(model.graph, model.params);
  return accuracy(net, data, batch_size);
}

TrainResult train(const ModelBundle& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& config) {
  config.check();
  check_dataset(model, train_set, "training");
  check_dataset(model, eval_set, "evaluation");
  const auto& last = model.graph.nodes.back();
  if (last.kind != LayerKind::Softmax) throw TrainError("model must end in a softmax");

  Network<float> net(model.graph, model.params);
  const auto decayed = penalized(model.graph);
  std::size_t n_decayed = 0;
  for (const auto& name : decayed) n_decayed += net.params().at(name).size();
  const double decay_scale =
      config.penalty == PenaltyNorm::PerWeight ? 1.0 / static_cast<double>(std::max<std::size_t>(1, n_decayed)) : 1.0;

  OptimizerState state;
  GradTape<float> tape;
  std::mt19937_64 aug_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainResult result;
  double best_acc = -1;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const auto order = shuffled_indices(train_set.size(), config.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0;
    std::size_t correct = 0;
    int batch_no = 0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size), ++batch_no) {
      const std::size_t count = std::min(order.size() - first, static_cast<std::size_t>(config.batch_size));
      std::span<const std::size_t> idx(order.data() + first, count);
      Tensor4 x = train_set.batch(idx);
      if (config.augment) augment(x, aug_rng);
      const auto labels = train_set.batch_labels(idx);

      net.zero_grads(tape);
      const Tensor4 p = net.forward(x, Mode::Train, &tape);
      double pen = 0;
      if (config.weight_decay > 0) {
        double sq = 0;
        for (const auto& name : decayed)
          for (float w : net.params().at(name).data()) sq += static_cast<double>(w) * w;
        pen = config.weight_decay * decay_scale * 0.5 * sq;
      }
      const double l = data_loss(p.cast<double>(), labels, config.loss) + pen;
      if (!std::isfinite(l))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch_no));
      loss_sum += l * static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i)
        if (argmax_row(p, static_cast<int>(i)) == labels[i]) ++correct;

      if (config.loss == LossVariant::SoftmaxCe) {
        Tensor4 dlogits = p;
        const float inv = 1.0f / static_cast<float>(count);
        for (int n = 0; n < p.n(); ++n)
          for (int k = 0; k < p.c(); ++k)
            dlogits.at(n, k, 0, 0) = (p.at(n, k, 0, 0) - (labels[static_cast<std::size_t>(n)] == k ? 1.0f : 0.0f)) * inv;
        net.backward_from_logits(tape, dlogits);
      } else {
        net.backward(tape, loss_grad_probs(p, labels, config.loss));
      }
      if (config.weight_decay > 0) {
        const auto k = static_cast<float>(config.weight_decay * decay_scale);
        for (const auto& name : decayed) {
          auto gw = tape.grads.at(name).data();
          auto w = net.params().at(name).data();
          for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += k * w[i];
        }
      }
      sgd_step(net.params(), tape.grads, state, lr, config.momentum);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.eval_acc = accuracy(net, eval_set, 256);
    result.history.push_back(rec);
    if (rec.eval_acc > best_acc) {
      best_acc = rec.eval_acc;
      result.best_epoch = epoch;
      result.best = {model.graph, net.export_params(), model.meta};
      result.best.meta.epochs_seen = model.meta.epochs_seen + epoch + 1;
    }
  }
  result.last = {model.graph, net.export_params(), model.meta};
  result.last.meta.epochs_seen = model.meta.epochs_seen + config.epochs;
  result.best.meta.config_hash = result.last.meta.config_hash =
      content_hash(train_config_to_json(config).dump());
  return result;
}

TrainResult retrain_scratch(const ModelBundle& compact, const Dataset& train_set,
                            const Dataset& eval_set, TrainConfig base,
                            const CompressionReport& report) {
  if (compact.meta.epochs_seen != 0)
    throw TrainError("retrain from scratch expects a freshly initialized model");
  base.epochs = std::max(1, report.epochs);
  return train(compact, train_set, eval_set, base);
}

TrainResult fine_tune(const ModelBundle& compact, const Dataset& train_set,
                      const Dataset& eval_set, const TrainConfig& config) {
  return train(compact, train_set, eval_set, config);
}

json history_to_json(const TrainResult& r) {
  json epochs = json::array();
  for (const auto& e : r.history)
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"train_loss", e.train_loss},
                      {"train_acc", e.train_acc},
                      {"eval_acc", e.eval_acc}});
  return {{"format", "ucp-history/1"}, {"best_epoch", r.best_epoch}, {"epochs", std::move(epochs)}};
}

}  // namespace ucp
