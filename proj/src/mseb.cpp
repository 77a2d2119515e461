#include "ucp/mseb.hpp"

#include <algorithm>
#include <cmath>

#include "ucp/network.hpp"

namespace ucp {

double squeeze(std::span<const float> plane) {
  if (plane.empty()) return 0.0;
  double s = 0;
  for (float v : plane) s += std::abs(static_cast<double>(v));
  return s / static_cast<double>(plane.size());
}

std::vector<double> excite(std::span<const double> z, std::span<const double> w1,
                           std::span<const double> w2, int hidden) {
  const std::size_t C = z.size();
  const auto H = static_cast<std::size_t>(hidden);
  if (w1.size() != H * C || w2.size() != C * H)
    throw StructuralError("excite: weight sizes do not match C=" + std::to_string(C) +
                          ", hidden=" + std::to_string(hidden));
  std::vector<double> h(H, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    double acc = 0;
    for (std::size_t c = 0; c < C; ++c) acc += w1[j * C + c] * z[c];
    h[j] = std::max(0.0, acc);
  }
  std::vector<double> s(C);
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0;
    for (std::size_t j = 0; j < H; ++j) acc += w2[c * H + j] * h[j];
    s[c] = 1.0 / (1.0 + std::exp(-acc));
  }
  return s;
}

Tensor4 scale(const Tensor4& u, std::span<const float> s) {
  if (static_cast<int>(s.size()) != u.c())
    throw StructuralError("scale: " + std::to_string(s.size()) + " gates for " +
                          std::to_string(u.c()) + " channels");
  Tensor4 gates(u.n(), u.c(), 1, 1);
  for (int n = 0; n < u.n(); ++n)
    for (int c = 0; c < u.c(); ++c) gates.at(n, c, 0, 0) = s[static_cast<std::size_t>(c)];
  return ops::scale(u, gates);
}

const LayerScore* ScoreRecord::find(const std::string& id) const {
  for (const auto& l : layers)
    if (l.layer == id) return &l;
  for (const auto& l : layers)
    if (l.conv == id) return &l;
  return nullptr;
}

void ScoreRecord::summarize() {
  blocks.clear();
  for (const auto& l : layers) {
    if (l.block.empty() || l.mean.empty()) continue;
    BlockScoreSummary b;
    b.block = l.block;
    b.stage = l.stage;
    double sum = 0, sum_std = 0;
    b.min = l.mean.front();
    b.max = l.mean.front();
    for (std::size_t i = 0; i < l.mean.size(); ++i) {
      sum += l.mean[i];
      b.min = std::min(b.min, l.mean[i]);
      b.max = std::max(b.max, l.mean[i]);
      if (i < l.std.size()) sum_std += l.std[i];
    }
    b.mean = sum / static_cast<double>(l.mean.size());
    b.mean_std = sum_std / static_cast<double>(l.mean.size());
    blocks.push_back(b);
  }
}

std::string scored_conv(const Graph& g, const std::string& mseb_id) {
  std::string cur = mseb_id;
  while (true) {
    const LayerNode& n = g.node(cur);
    if (n.inputs.size() != 1) return {};
    const LayerNode& prev = g.node(n.inputs[0]);
    if (prev.kind == LayerKind::Conv) return prev.id;
    if (prev.kind != LayerKind::BatchNorm && prev.kind != LayerKind::ReLU) return {};
    cur = prev.id;
  }
}

ScoreRecord collect_scores(const ModelBundle& model, const Dataset& data, int batch_size,
                           int max_batches) {
  const auto ids = model.graph.mseb_ids();
  if (ids.empty())
    throw ScoreError("model has no MSEB nodes; build it with MSEB enabled (--mseb) before scoring");
  if (data.size() == 0) throw ScoreError("scoring dataset is empty");
  if (batch_size < 1 || max_batches < 1) throw ScoreError("batch size and batch count must be >= 1");

  Network<float> net(model.graph, model.params);
  std::vector<std::vector<double>> sum(ids.size()), sumsq(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto C = static_cast<std::size_t>(model.graph.node(ids[k]).channels);
    sum[k].assign(C, 0.0);
    sumsq[k].assign(C, 0.0);
  }
  std::int64_t samples = 0;
  for (int b = 0; b < max_batches; ++b) {
    const auto idx = data.range(static_cast<std::size_t>(b) * batch_size, static_cast<std::size_t>(batch_size));
    if (idx.empty()) break;
    net.forward(data.batch(idx), Mode::Eval);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const Tensor4& s = net.gates().at(ids[k]);
      for (int n = 0; n < s.n(); ++n)
        for (int c = 0; c < s.c(); ++c) {
          const double v = s.at(n, c, 0, 0);
          sum[k][static_cast<std::size_t>(c)] += v;
          sumsq[k][static_cast<std::size_t>(c)] += v * v;
        }
    }
    samples += static_cast<std::int64_t>(idx.size());
  }

  ScoreRecord rec;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    LayerScore l;
    l.layer = ids[k];
    l.conv = scored_conv(model.graph, ids[k]);
    for (const auto& b : model.graph.blocks)
      if (std::find(b.members.begin(), b.members.end(), ids[k]) != b.members.end()) {
        l.block = b.id;
        l.stage = b.stage;
      }
    l.channels = static_cast<int>(sum[k].size());
    l.samples = samples;
    const auto n = static_cast<double>(samples);
    for (std::size_t c = 0; c < sum[k].size(); ++c) {
      const double m = sum[k][c] / n;
      l.mean.push_back(m);
      l.std.push_back(std::sqrt(std::max(0.0, sumsq[k][c] / n - m * m)));
    }
    rec.layers.push_back(std::move(l));
  }
  rec.summarize();
  return rec;
}

json scores_to_json(const ScoreRecord& r) {
  json j;
  j["format"] = "ucp-scores/1";
  j["model_hash"] = r.model_hash;
  json layers = json::array();
  for (const auto& l : r.layers)
    layers.push_back({{"layer", l.layer},
                      {"conv", l.conv},
                      {"block", l.block},
                      {"stage", l.stage},
                      {"channels", l.channels},
                      {"mean", l.mean},
                      {"std", l.std},
                      {"samples", l.samples}});
  j["layers"] = std::move(layers);
  json blocks = json::array();
  for (const auto& b : r.blocks)
    blocks.push_back({{"block", b.block},
                      {"stage", b.stage},
                      {"mean", b.mean},
                      {"min", b.min},
                      {"max", b.max},
                      {"mean_std", b.mean_std}});
  j["blocks"] = std::move(blocks);
  return j;
}

ScoreRecord scores_from_json(const json& j) {
  ScoreRecord r;
  r.model_hash = j.value("model_hash", "");
  for (const auto& jl : j.at("layers")) {
    LayerScore l;
    l.layer = jl.at("layer").get<std::string>();
    l.conv = jl.value("conv", "");
    l.block = jl.value("block", "");
    l.stage = jl.value("stage", 0);
    l.mean = jl.at("mean").get<std::vector<double>>();
    l.std = jl.value("std", std::vector<double>(l.mean.size(), 0.0));
    l.channels = jl.value("channels", static_cast<int>(l.mean.size()));
    l.samples = jl.value("samples", std::int64_t{1});
    if (l.channels != static_cast<int>(l.mean.size()))
      throw ScoreError("score entry '" + l.layer + "' declares " + std::to_string(l.channels) +
                       " channels but has " + std::to_string(l.mean.size()) + " means");
    if (l.samples <= 0) throw ScoreError("score entry '" + l.layer + "' has no samples");
    for (double v : l.mean)
      if (!(v > 0.0 && v < 1.0))
        throw ScoreError("score entry '" + l.layer + "' has a value outside (0, 1)");
    r.layers.push_back(std::move(l));
  }
  r.summarize();
  return r;
}

}  // namespace ucp
