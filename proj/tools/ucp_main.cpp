// Command-line front end: build, train, score, plan, apply, count, report,
// retrain, pipeline, sweep.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "ucp/accounting.hpp"
#include "ucp/builders.hpp"
#include "ucp/bundle.hpp"
#include "ucp/mseb.hpp"
#include "ucp/pipeline.hpp"
#include "ucp/planner.hpp"
#include "ucp/rewriter.hpp"
#include "ucp/serialize.hpp"
#include "ucp/trainer.hpp"

using namespace ucp;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kStageFailed = 3;

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return default_pipeline_config();
  return pipeline_config_from_json(read_json_file(path));
}

std::map<int, int> parse_targets(const std::string& s) {
  std::map<int, int> out;
  std::stringstream ss(s);
  std::string item;
  int stage = 1;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out[stage++] = std::stoi(item);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

void print_history(const TrainResult& r) {
  for (const auto& e : r.history)
    std::printf("epoch %3d  lr %.4g  loss %.4f  train %.3f  eval %.3f\n", e.epoch, e.lr,
                e.train_loss, e.train_acc, e.eval_acc);
  std::printf("best epoch %d\n", r.best_epoch);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uniform channel pruning toolkit"};
  app.require_subcommand(1);
  std::function<void()> action;

  // build
  auto* cmd_build = app.add_subcommand("build", "Build an architecture and initialize weights");
  std::string arch = "tiny-vgg", out, placement = "default";
  int classes = 10, reduction = 16, in_channels = 0, image_size = 0;
  bool with_mseb = false;
  std::uint64_t seed = 0;
  cmd_build->add_option("--arch", arch, "Architecture name")->required();
  cmd_build->add_option("--classes", classes, "Number of classes");
  cmd_build->add_flag("--mseb", with_mseb, "Insert MSEB modules");
  cmd_build->add_option("--placement", placement, "MSEB placement");
  cmd_build->add_option("--reduction", reduction, "MSEB reduction ratio");
  cmd_build->add_option("--input-channels", in_channels, "Override input channels");
  cmd_build->add_option("--image-size", image_size, "Override input size");
  cmd_build->add_option("--seed", seed, "Initialization seed");
  cmd_build->add_option("--out", out, "Bundle manifest path")->required();
  cmd_build->callback([&] {
    action = [&] {
      BuildOptions o;
      o.with_mseb = with_mseb;
      o.placement = placement_from_string(placement);
      o.reduction = reduction;
      if (in_channels > 0) o.input_channels = in_channels;
      if (image_size > 0) o.image_size = image_size;
      ModelBundle b = make_bundle(build(arch, classes, o), seed);
      save_bundle(b, out);
      std::printf("%s: %lld params, %lld FLOPs -> %s\n", arch.c_str(),
                  static_cast<long long>(count_params(b.graph)),
                  static_cast<long long>(count_flops(b.graph)), out.c_str());
    };
  });

  // train / retrain
  std::string model, config_path, history;
  auto* cmd_train = app.add_subcommand("train", "Train a model bundle");
  cmd_train->add_option("--model", model, "Input bundle")->required();
  cmd_train->add_option("--config", config_path, "JSON config (data and train sections)");
  cmd_train->add_option("--out", out, "Output bundle")->required();
  cmd_train->add_option("--history", history, "History JSON path");
  cmd_train->callback([&] {
    action = [&] {
      const PipelineConfig c = load_config(config_path);
      const ModelBundle m = load_bundle(model);
      const TrainResult r = train(m, load_dataset(c.train_data), load_dataset(c.eval_data), c.train);
      print_history(r);
      save_bundle(r.best, out);
      if (!history.empty()) write_json_file(history, history_to_json(r));
    };
  });

  std::string before, mode = "scratch", flops = "mac", epoch_rule = "compute-equal";
  int base_epochs = 0;
  auto* cmd_retrain = app.add_subcommand("retrain", "Retrain a compact model");
  cmd_retrain->add_option("--model", model, "Compact bundle")->required();
  cmd_retrain->add_option("--before", before, "Unpruned bundle (for FLOP-matched epochs)")->required();
  cmd_retrain->add_option("--mode", mode, "scratch|finetune");
  cmd_retrain->add_option("--base-epochs", base_epochs, "Base epochs (default: config epochs)");
  cmd_retrain->add_option("--epoch-rule", epoch_rule, "compute-equal|literal");
  cmd_retrain->add_option("--config", config_path, "JSON config");
  cmd_retrain->add_option("--out", out, "Output bundle")->required();
  cmd_retrain->add_option("--history", history, "History JSON path");
  cmd_retrain->callback([&] {
    action = [&] {
      const PipelineConfig c = load_config(config_path);
      const ModelBundle compact = load_bundle(model);
      const ModelBundle base = load_bundle(before);
      const Dataset tr = load_dataset(c.train_data), ev = load_dataset(c.eval_data);
      const auto rep = report(strip_mseb(base.graph), compact.graph,
                              base_epochs > 0 ? base_epochs : c.train.epochs, c.flops,
                              epoch_rule_from_string(epoch_rule));
      const TrainResult r = rewrite_mode_from_string(mode) == RewriteMode::ArchitectureOnly
                                ? retrain_scratch(compact, tr, ev, c.train, rep)
                                : fine_tune(compact, tr, ev, c.finetune);
      print_history(r);
      save_bundle(r.best, out);
      if (!history.empty()) write_json_file(history, history_to_json(r));
    };
  });

  // score
  int batches = 8, batch_size = 64;
  auto* cmd_score = app.add_subcommand("score", "Collect MSEB channel scores");
  cmd_score->add_option("--model", model, "MSEB-bearing bundle")->required();
  cmd_score->add_option("--config", config_path, "JSON config (train_data is scored)");
  cmd_score->add_option("--batches", batches, "Number of batches");
  cmd_score->add_option("--batch-size", batch_size, "Batch size");
  cmd_score->add_option("--out", out, "Score JSON")->required();
  cmd_score->callback([&] {
    action = [&] {
      const PipelineConfig c = load_config(config_path);
      ScoreRecord s = collect_scores(load_bundle(model), load_dataset(c.train_data), batch_size, batches);
      s.model_hash = file_hash(model);
      write_json_file(out, scores_to_json(s));
      for (const auto& b : s.blocks)
        std::printf("%s stage %d mean %.4f min %.4f max %.4f std %.4f\n", b.block.c_str(), b.stage,
                    b.mean, b.min, b.max, b.mean_std);
    };
  });

  // plan
  std::string scores_path, sign = "minus", policy = "vgg-per-layer", targets, half_rule = "off";
  int beta = 1, min_channels = 1;
  auto* cmd_plan = app.add_subcommand("plan", "Turn scores into a pruning plan");
  cmd_plan->add_option("--scores", scores_path, "Score JSON")->required();
  cmd_plan->add_option("--model", model, "Bundle the scores belong to")->required();
  cmd_plan->add_option("--beta", beta, "Threshold exponent");
  cmd_plan->add_option("--sign", sign, "minus|plus");
  cmd_plan->add_option("--policy", policy, "vgg-per-layer|resnet-stage-uniform|bottleneck-middle");
  cmd_plan->add_option("--stage-targets", targets, "Comma-separated stage widths, e.g. 8,32,32");
  cmd_plan->add_option("--half-rule", half_rule, "on|off");
  cmd_plan->add_option("--min-channels", min_channels, "Per-layer floor");
  cmd_plan->add_option("--out", out, "Plan JSON")->required();
  cmd_plan->callback([&] {
    action = [&] {
      PruneConfig c;
      c.beta = beta;
      c.sign = threshold_sign_from_string(sign);
      c.policy = prune_policy_from_string(policy);
      c.stage_targets = parse_targets(targets);
      c.half_rule = half_rule == "on";
      c.min_channels = min_channels;
      const ModelBundle m = load_bundle(model);
      PruningPlan p = make_plan(scores_from_json(read_json_file(scores_path)), strip_mseb(m.graph), c);
      p.score_hash = file_hash(scores_path);
      write_json_file(out, plan_to_json(p));
      for (const auto& l : p.layers) std::printf("%s %d -> %d\n", l.layer.c_str(), l.original, l.kept_count());
      for (const auto& s : p.stages)
        std::printf("stage %d %d -> %d\n", s.stage, s.original, static_cast<int>(s.kept.size()));
    };
  });

  // apply
  std::string plan_path, widths;
  bool keep_mseb = false;
  auto* cmd_apply = app.add_subcommand("apply", "Rewrite a model with a plan");
  cmd_apply->add_option("--model", model, "Input bundle")->required();
  auto* plan_opt = cmd_apply->add_option("--plan", plan_path, "Plan JSON");
  cmd_apply->add_option("--widths", widths, "Keep the first N channels of each conv")->excludes(plan_opt);
  cmd_apply->add_option("--mode", mode, "scratch|finetune");
  cmd_apply->add_flag("--keep-mseb", keep_mseb, "Retain MSEB nodes");
  cmd_apply->add_option("--seed", seed, "Seed for fresh weights");
  cmd_apply->add_option("--out", out, "Output bundle")->required();
  cmd_apply->callback([&] {
    action = [&] {
      const ModelBundle m = load_bundle(model);
      PruningPlan p;
      if (!plan_path.empty()) p = plan_from_json(read_json_file(plan_path));
      else if (!widths.empty()) {
        const auto w = parse_ints(widths);
        p = width_plan(m.graph, w);
      } else throw std::invalid_argument("apply needs --plan or --widths");
      RewriteOptions o;
      o.mode = rewrite_mode_from_string(mode);
      o.strip_mseb = !keep_mseb;
      o.reseed = seed;
      const ModelBundle r = apply(m, p, o);
      save_bundle(r, out);
      std::fputs(format_summary(summarize(m.graph, r.graph)).c_str(), stdout);
    };
  });

  // count
  bool as_json = false;
  auto* cmd_count = app.add_subcommand("count", "Count parameters and FLOPs");
  auto* model_opt = cmd_count->add_option("--model", model, "Bundle");
  cmd_count->add_option("--arch", arch, "Architecture (instead of a bundle)")->excludes(model_opt);
  cmd_count->add_option("--classes", classes, "Classes for --arch");
  cmd_count->add_option("--flops", flops, "mac|multiply-add");
  cmd_count->add_flag("--json", as_json, "Emit JSON");
  cmd_count->callback([&] {
    action = [&] {
      const Graph g = model.empty() ? build(arch, classes) : load_bundle(model).graph;
      const auto c = count(g, flop_convention_from_string(flops));
      if (as_json) {
        json layers = json::array();
        for (const auto& l : c.layers)
          layers.push_back({{"id", l.id}, {"params", l.params}, {"flops", l.flops}});
        std::cout << json{{"params", c.params}, {"mseb_params", c.mseb_params}, {"flops", c.flops},
                          {"layers", layers}}
                         .dump(2)
                  << "\n";
        return;
      }
      for (const auto& l : c.layers)
        std::printf("%-22s %-15s %6d %6d %12lld %14lld\n", l.id.c_str(), to_string(l.kind).c_str(),
                    l.in_width, l.out_width, static_cast<long long>(l.params),
                    static_cast<long long>(l.flops));
      std::printf("params %lld (mseb %lld)  flops %lld\n", static_cast<long long>(c.params),
                  static_cast<long long>(c.mseb_params), static_cast<long long>(c.flops));
    };
  });

  // report
  std::string after;
  auto* cmd_report = app.add_subcommand("report", "Compression report between two models");
  cmd_report->add_option("--before", before, "Unpruned bundle")->required();
  cmd_report->add_option("--after", after, "Compact bundle")->required();
  cmd_report->add_option("--base-epochs", base_epochs, "Baseline epochs")->required();
  cmd_report->add_option("--flops", flops, "mac|multiply-add");
  cmd_report->add_option("--epoch-rule", epoch_rule, "compute-equal|literal");
  cmd_report->add_option("--out", out, "Report JSON");
  cmd_report->callback([&] {
    action = [&] {
      const auto r = report(strip_mseb(load_bundle(before).graph), load_bundle(after).graph,
                            base_epochs, flop_convention_from_string(flops),
                            epoch_rule_from_string(epoch_rule));
      std::fputs(format_report(r).c_str(), stdout);
      if (!out.empty()) write_json_file(out, report_to_json(r));
    };
  });

  // pipeline
  std::string out_dir;
  auto* cmd_pipeline = app.add_subcommand("pipeline", "train -> score -> plan -> apply -> retrain -> report");
  cmd_pipeline->add_option("--config", config_path, "Pipeline JSON config");
  cmd_pipeline->add_option("--out-dir", out_dir, "Artifact directory (overrides config)");
  cmd_pipeline->callback([&] {
    action = [&] {
      PipelineConfig c = load_config(config_path);
      if (!out_dir.empty()) c.out_dir = out_dir;
      const PipelineResult r = run_pipeline(c);
      std::fputs(format_report(r.report).c_str(), stdout);
      std::printf("baseline eval %.4f  retrained eval %.4f\n", r.baseline_eval_acc, r.retrained_eval_acc);
      for (const auto& s : r.manifest.stages)
        std::printf("%-8s %s %s %.2fs\n", s.name.c_str(), s.status.c_str(), s.output_hash.c_str(), s.wall_seconds);
    };
  });

  // sweep
  auto* cmd_sweep = app.add_subcommand("sweep", "Ablation sweep of (sign, beta) on fixed scores");
  cmd_sweep->add_option("--model", model, "MSEB-bearing bundle")->required();
  cmd_sweep->add_option("--scores", scores_path, "Score JSON")->required();
  cmd_sweep->add_option("--policy", policy, "Pruning policy");
  cmd_sweep->add_option("--out", out, "Sweep JSON");
  cmd_sweep->callback([&] {
    action = [&] {
      PruneConfig base;
      base.policy = prune_policy_from_string(policy);
      const auto pts = sweep(load_bundle(model), scores_from_json(read_json_file(scores_path)),
                             ablation_sequence(base));
      json arr = json::array();
      for (const auto& p : pts) {
        std::printf("%-5s beta %d  pruned channels %5d  params -%.1f%%  flops -%.1f%%\n",
                    to_string(p.config.sign).c_str(), p.config.beta, p.pruned_channels,
                    p.report.pruned_params_pct, p.report.pruned_flops_pct);
        arr.push_back({{"sign", to_string(p.config.sign)},
                       {"beta", p.config.beta},
                       {"pruned_channels", p.pruned_channels},
                       {"pruned_params_pct", p.report.pruned_params_pct},
                       {"pruned_flops_pct", p.report.pruned_flops_pct}});
      }
      if (!out.empty()) write_json_file(out, arr);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }
  try {
    if (action) action();
  } catch (const PipelineError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kStageFailed;
  } catch (const TrainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kStageFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalid;
  }
  return kOk;
}
