#include "ucp/pipeline.hpp"

#include <chrono>
#include <cstring>
#include <functional>

#include "ucp/network.hpp"
#include "ucp/serialize.hpp"

namespace ucp {

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.build.with_mseb = true;
  // r = 16 leaves an 8-channel layer a single hidden unit, which tends to die.
  c.build.reduction = 2;
  c.train_data.source = DataSource::SyntheticPlanted;
  c.train_data.samples = 1024;
  c.train_data.amplitude = 0.2f;
  c.eval_data = c.train_data;
  c.eval_data.train_split = false;
  c.eval_data.samples = 2048;
  c.train.epochs = 20;
  c.finetune = c.train;
  c.finetune.lr = 0.01;
  c.prune.beta = 1;
  c.prune.sign = ThresholdSign::Minus;
  return c;
}

namespace {

json spec_to_json(const DatasetSpec& s) {
  return {{"source", to_string(s.source)},
          {"root", s.root.string()},
          {"split", s.train_split ? "train" : "eval"},
          {"subset", s.subset},
          {"seed", s.seed},
          {"image_size", s.image_size},
          {"classes", s.classes},
          {"samples", s.samples},
          {"signal_channels", s.signal_channels},
          {"noise_channels", s.noise_channels},
          {"amplitude", s.amplitude},
          {"noise_std", s.noise_std}};
}

DatasetSpec spec_from_json(const json& j, DatasetSpec s) {
  if (j.contains("source")) s.source = data_source_from_string(j.at("source").get<std::string>());
  if (j.contains("root")) s.root = j.at("root").get<std::string>();
  if (j.contains("split")) s.train_split = j.at("split").get<std::string>() != "eval";
  s.subset = j.value("subset", s.subset);
  s.seed = j.value("seed", s.seed);
  s.image_size = j.value("image_size", s.image_size);
  s.classes = j.value("classes", s.classes);
  s.samples = j.value("samples", s.samples);
  s.signal_channels = j.value("signal_channels", s.signal_channels);
  s.noise_channels = j.value("noise_channels", s.noise_channels);
  s.amplitude = j.value("amplitude", s.amplitude);
  s.noise_std = j.value("noise_std", s.noise_std);
  return s;
}

std::string dataset_hash(const Dataset& d) {
  std::string bytes(reinterpret_cast<const char*>(d.images.data()), d.images.size() * sizeof(float));
  bytes.append(reinterpret_cast<const char*>(d.labels.data()), d.labels.size() * sizeof(int));
  return content_hash(bytes);
}

std::string model_hash(const ModelBundle& b) {
  std::string bytes = graph_to_json(b.graph).dump();
  for (const auto& [name, t] : b.params) {
    bytes += name;
    bytes.append(reinterpret_cast<const char*>(t.vec().data()), t.size() * sizeof(float));
  }
  return content_hash(bytes);
}

std::string json_hash(const json& j) { return content_hash(j.dump(2) + "\n"); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

json pipeline_config_to_json(const PipelineConfig& c) {
  return {{"arch", c.arch},
          {"mseb_placement", to_string(c.build.placement)},
          {"mseb_reduction", c.build.reduction},
          {"train_data", spec_to_json(c.train_data)},
          {"eval_data", spec_to_json(c.eval_data)},
          {"train", train_config_to_json(c.train)},
          {"prune", config_to_json(c.prune)},
          {"retrain_mode", to_string(c.retrain_mode)},
          {"finetune", train_config_to_json(c.finetune)},
          {"flop_convention", to_string(c.flops)},
          {"epoch_rule", to_string(c.epoch_rule)},
          {"score_batch_size", c.score_batch_size},
          {"score_batches", c.score_batches},
          {"seed", c.seed},
          {"out_dir", c.out_dir.string()}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c = default_pipeline_config();
  c.arch = j.value("arch", c.arch);
  if (j.contains("mseb_placement"))
    c.build.placement = placement_from_string(j.at("mseb_placement").get<std::string>());
  c.build.reduction = j.value("mseb_reduction", c.build.reduction);
  if (j.contains("train_data")) {
    c.train_data = spec_from_json(j.at("train_data"), c.train_data);
    const int eval_samples = c.eval_data.samples;
    c.eval_data = c.train_data;
    c.eval_data.train_split = false;
    c.eval_data.samples = eval_samples;
  }
  if (j.contains("eval_data")) c.eval_data = spec_from_json(j.at("eval_data"), c.eval_data);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  c.finetune = c.train;
  c.finetune.lr = 0.01;
  if (j.contains("finetune")) c.finetune = train_config_from_json(j.at("finetune"), c.finetune);
  if (j.contains("prune")) {
    json p = config_to_json(c.prune);
    p.update(j.at("prune"));
    c.prune = config_from_json(p);
  }
  if (j.contains("retrain_mode"))
    c.retrain_mode = rewrite_mode_from_string(j.at("retrain_mode").get<std::string>());
  if (j.contains("flop_convention"))
    c.flops = flop_convention_from_string(j.at("flop_convention").get<std::string>());
  if (j.contains("epoch_rule"))
    c.epoch_rule = epoch_rule_from_string(j.at("epoch_rule").get<std::string>());
  c.score_batch_size = j.value("score_batch_size", c.score_batch_size);
  c.score_batches = j.value("score_batches", c.score_batches);
  c.seed = j.value("seed", c.seed);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  return c;
}

json manifest_to_json(const ExperimentManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages)
    stages.push_back({{"name", s.name},
                      {"status", s.status},
                      {"input_hashes", s.input_hashes},
                      {"output_hash", s.output_hash},
                      {"output_path", s.output_path},
                      {"wall_seconds", s.wall_seconds},
                      {"error", s.error}});
  return {{"format", "ucp-manifest/1"},
          {"status", m.status},
          {"failed_stage", m.failed_stage},
          {"normalization", {{"mean", m.norm_mean}, {"std", m.norm_std}}},
          {"config", m.config},
          {"stages", std::move(stages)}};
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  PipelineResult r;
  ExperimentManifest& m = r.manifest;
  m.config = pipeline_config_to_json(config);
  const bool persist = !config.out_dir.empty();
  auto path = [&](const std::string& name) { return config.out_dir / name; };
  auto write_manifest = [&] {
    if (persist) write_json_file(path("manifest.json"), manifest_to_json(m));
  };

  // Each stage returns {output hash, output path}.
  auto stage = [&](const std::string& name, std::vector<std::string> inputs,
                   const std::function<std::pair<std::string, std::string>()>& body) {
    StageRecord rec;
    rec.name = name;
    rec.input_hashes = std::move(inputs);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      std::tie(rec.output_hash, rec.output_path) = body();
      rec.status = "ok";
      rec.wall_seconds = seconds_since(t0);
      m.stages.push_back(rec);
      write_manifest();
      return rec.output_hash;
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.wall_seconds = seconds_since(t0);
      m.stages.push_back(rec);
      m.status = "failed";
      m.failed_stage = name;
      try {
        write_manifest();
      } catch (...) {
      }
      throw PipelineError(name, e.what());
    }
  };

  Dataset train_set, eval_set;
  const std::string data_hash = stage("data", {content_hash(m.config.dump())}, [&] {
    train_set = load_dataset(config.train_data);
    eval_set = load_dataset(config.eval_data);
    m.norm_mean = train_set.norm_mean;
    m.norm_std = train_set.norm_std;
    return std::pair{content_hash(dataset_hash(train_set) + dataset_hash(eval_set)), std::string{}};
  });

  const std::string baseline_hash = stage("train", {data_hash}, [&] {
    BuildOptions opts = config.build;
    opts.with_mseb = true;
    opts.input_channels = train_set.channels;
    opts.image_size = train_set.height;
    ModelBundle init = make_bundle(build(config.arch, train_set.num_classes, opts), config.seed);
    r.baseline_run = train(init, train_set, eval_set, config.train);
    r.baseline = r.baseline_run.best;
    r.baseline_eval_acc = r.baseline_run.history.at(static_cast<std::size_t>(r.baseline_run.best_epoch)).eval_acc;
    std::string out;
    if (persist) {
      save_bundle(r.baseline, path("baseline.json"));
      write_json_file(path("baseline_history.json"), history_to_json(r.baseline_run));
      out = path("baseline.json").string();
    }
    return std::pair{model_hash(r.baseline), out};
  });

  const std::string score_hash = stage("score", {baseline_hash}, [&] {
    r.scores = collect_scores(r.baseline, train_set, config.score_batch_size, config.score_batches);
    r.scores.model_hash = baseline_hash;
    const json j = scores_to_json(r.scores);
    std::string out;
    if (persist) {
      write_json_file(path("scores.json"), j);
      out = path("scores.json").string();
    }
    return std::pair{json_hash(j), out};
  });

  const std::string plan_hash = stage("plan", {score_hash}, [&] {
    r.plan = make_plan(r.scores, strip_mseb(r.baseline.graph), config.prune);
    r.plan.score_hash = score_hash;
    const json j = plan_to_json(r.plan);
    std::string out;
    if (persist) {
      write_json_file(path("plan.json"), j);
      out = path("plan.json").string();
    }
    return std::pair{json_hash(j), out};
  });

  const std::string compact_hash = stage("apply", {baseline_hash, plan_hash}, [&] {
    RewriteOptions opts;
    opts.mode = config.retrain_mode;
    opts.strip_mseb = true;
    opts.reseed = config.seed + 1;
    r.compact = apply(r.baseline, r.plan, opts);
    std::string out;
    if (persist) {
      save_bundle(r.compact, path("compact.json"));
      out = path("compact.json").string();
    }
    return std::pair{model_hash(r.compact), out};
  });

  r.report = report(strip_mseb(r.baseline.graph), r.compact.graph, config.train.epochs,
                    config.flops, config.epoch_rule);

  const std::string retrained_hash = stage("retrain", {compact_hash}, [&] {
    if (config.retrain_mode == RewriteMode::ArchitectureOnly)
      r.retrain_run = retrain_scratch(r.compact, train_set, eval_set, config.train, r.report);
    else
      r.retrain_run = fine_tune(r.compact, train_set, eval_set, config.finetune);
    r.retrained = r.retrain_run.best;
    r.retrained_eval_acc = r.retrain_run.history.at(static_cast<std::size_t>(r.retrain_run.best_epoch)).eval_acc;
    std::string out;
    if (persist) {
      save_bundle(r.retrained, path("retrained.json"));
      write_json_file(path("retrain_history.json"), history_to_json(r.retrain_run));
      out = path("retrained.json").string();
    }
    return std::pair{model_hash(r.retrained), out};
  });

  stage("report", {baseline_hash, retrained_hash}, [&] {
    json j = report_to_json(r.report);
    j["baseline_eval_acc"] = r.baseline_eval_acc;
    j["retrained_eval_acc"] = r.retrained_eval_acc;
    std::string out;
    if (persist) {
      write_json_file(path("report.json"), j);
      out = path("report.json").string();
    }
    return std::pair{json_hash(j), out};
  });

  m.status = "ok";
  write_manifest();
  return r;
}

std::vector<SweepPoint> sweep(const ModelBundle& model, const ScoreRecord& scores,
                              const std::vector<PruneConfig>& configs, FlopConvention flops) {
  const Graph plain = strip_mseb(model.graph);
  std::vector<SweepPoint> out;
  for (const auto& c : configs) {
    SweepPoint p;
    p.config = c;
    const PruningPlan plan = make_plan(scores, plain, c);
    p.pruned_channels = plan.pruned_channels();
    RewriteOptions opts;
    opts.mode = RewriteMode::ArchitectureOnly;
    opts.reseed = 0;
    const ModelBundle compact = apply(model, plan, opts);
    p.report = report(plain, compact.graph, 1, flops);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PruneConfig> ablation_sequence(const PruneConfig& base) {
  std::vector<PruneConfig> out;
  const std::pair<ThresholdSign, int> seq[] = {
      {ThresholdSign::Minus, 2}, {ThresholdSign::Minus, 4}, {ThresholdSign::Minus, 6},
      {ThresholdSign::Minus, 8}, {ThresholdSign::Plus, 6},  {ThresholdSign::Plus, 4},
      {ThresholdSign::Plus, 2}};
  for (const auto& [sign, beta] : seq) {
    PruneConfig c = base;
    c.sign = sign;
    c.beta = beta;
    out.push_back(c);
  }
  return out;
}

PlantedAnalysis analyze_planted(const ModelBundle& model, const Dataset& data,
                                const ScoreRecord& scores, int signal_inputs) {
  const auto ids = model.graph.mseb_ids();
  if (ids.empty()) throw ScoreError("model has no MSEB nodes");
  PlantedAnalysis a;
  a.layer = ids.front();
  const LayerScore* ls = scores.find(a.layer);
  if (!ls) throw ScoreError("no scores for '" + a.layer + "'");
  a.scores = ls->mean;
  const LayerNode& mseb = model.graph.node(a.layer);
  const int src = model.graph.find(mseb.inputs.at(0));
  const int C = mseb.channels;
  const int K = data.num_classes;

  // Per-sample channel means of the MSEB input.
  Network<float> net(model.graph, model.params);
  GradTape<float> tape;
  std::vector<std::vector<double>> value(static_cast<std::size_t>(C));
  for (std::size_t first = 0; first < data.size(); first += 256) {
    const auto idx = data.range(first, 256);
    net.forward(data.batch(idx), Mode::Eval, &tape);
    const Tensor4& u = tape.activations[static_cast<std::size_t>(src)];
    for (int n = 0; n < u.n(); ++n)
      for (int c = 0; c < C; ++c) {
        double s = 0;
        for (float v : u.channel(n, c)) s += v;
        value[static_cast<std::size_t>(c)].push_back(s / static_cast<double>(u.shape().plane()));
      }
  }
  for (int c = 0; c < C; ++c) {
    const auto& v = value[static_cast<std::size_t>(c)];
    std::vector<double> sum(static_cast<std::size_t>(K), 0.0);
    std::vector<double> cnt(static_cast<std::size_t>(K), 0.0);
    double total = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum[static_cast<std::size_t>(data.labels[i])] += v[i];
      cnt[static_cast<std::size_t>(data.labels[i])] += 1;
      total += v[i];
    }
    const double mu = total / static_cast<double>(v.size());
    double between = 0, within = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto k = static_cast<std::size_t>(data.labels[i]);
      const double mk = sum[k] / cnt[k];
      between += (mk - mu) * (mk - mu);
      within += (v[i] - mk) * (v[i] - mk);
    }
    a.fisher.push_back(within > 0 ? between / within : 0.0);
  }

  // Kernel energy share on signal inputs, for the conv feeding the MSEB.
  const std::string conv = scored_conv(model.graph, a.layer);
  if (!conv.empty()) {
    const Tensor4& w = model.params.at(conv + ".weight");
    for (int o = 0; o < w.n(); ++o) {
      double sig = 0, all = 0;
      for (int i = 0; i < w.c(); ++i)
        for (int y = 0; y < w.h(); ++y)
          for (int x = 0; x < w.w(); ++x) {
            const double e = static_cast<double>(w.at(o, i, y, x)) * w.at(o, i, y, x);
            all += e;
            if (i < signal_inputs) sig += e;
          }
      a.kernel_signal_share.push_back(all > 0 ? sig / all : 0.0);
    }
  }

  std::vector<int> rank(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) rank[static_cast<std::size_t>(c)] = c;
  std::stable_sort(rank.begin(), rank.end(), [&](int x, int y) {
    return a.fisher[static_cast<std::size_t>(x)] > a.fisher[static_cast<std::size_t>(y)];
  });
  const int half = C / 2;
  for (int i = 0; i < C; ++i) (i < half ? a.signal : a.noise).push_back(rank[static_cast<std::size_t>(i)]);
  std::sort(a.signal.begin(), a.signal.end());
  std::sort(a.noise.begin(), a.noise.end());
  for (int c : a.signal) a.signal_mean += a.scores[static_cast<std::size_t>(c)];
  for (int c : a.noise) a.noise_mean += a.scores[static_cast<std::size_t>(c)];
  if (!a.signal.empty()) a.signal_mean /= static_cast<double>(a.signal.size());
  if (!a.noise.empty()) a.noise_mean /= static_cast<double>(a.noise.size());
  return a;
}

}  // namespace ucp
