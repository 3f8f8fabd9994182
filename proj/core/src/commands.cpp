// SPDX-License-Identifier: Apache-2.0
#include "talkit/commands.hpp"

#include <algorithm>
#include <fstream>

#include "talkit/pipeline.hpp"
#include "json_util.hpp"

namespace talkit::cli {

namespace fs = std::filesystem;

namespace {

struct DatasetPaths {
  fs::path manifest;
  fs::path annotations;
};

DatasetPaths resolve_dataset(const RunConfig& cfg) {
  DatasetPaths p;
  p.manifest = cfg.data.manifest.empty()
                   ? cfg.output_dir / "dataset" / "manifest.json"
                   : cfg.data.manifest;
  p.annotations = cfg.data.annotations.empty()
                      ? (cfg.data.manifest.empty()
                             ? cfg.output_dir / "dataset" / "annotations.json"
                             : cfg.data.manifest.parent_path() /
                                   "annotations.json")
                      : cfg.data.annotations;
  if (!fs::exists(p.manifest)) {
    throw ValidationError("manifest '" + p.manifest.string() +
                          "' does not exist" +
                          (cfg.data.synth ? " (run `talkit generate` first)"
                                          : ""));
  }
  if (!fs::exists(p.annotations)) {
    throw ValidationError("annotations '" + p.annotations.string() +
                          "' do not exist");
  }
  return p;
}

FusionPlan make_fusion_plan(const RunConfig& cfg,
                            const pipeline::SampleSet& samples) {
  FusionPlan plan;
  plan.mode = cfg.fusion.mode;
  plan.source_dims = samples.source_dims;
  if (plan.mode == FusionMode::kProjCat) {
    plan.projection_dims = cfg.fusion.projection_dims;
    if (plan.projection_dims.empty()) {
      if (samples.source_dims.size() == 3) {
        plan.projection_dims = {386, 386, 256};
      } else {
        throw ValidationError(
            "fusion.projection_dims is required for " +
            std::to_string(samples.source_dims.size()) + " sources");
      }
    }
  }
  plan.validate();
  return plan;
}

ModelConfig model_config_for_dataset(const RunConfig& cfg, int num_classes) {
  ModelConfig mcfg = cfg.model;
  mcfg.num_classes = num_classes;  // the annotations are authoritative
  mcfg.validate();
  return mcfg;
}

fs::path latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ValidationError("checkpoint directory '" + dir.string() +
                          "' does not exist (run `talkit train` first)");
  }
  fs::path best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ckpt") {
      if (best.empty() || entry.path().filename() > best.filename()) {
        best = entry.path();
      }
    }
  }
  if (best.empty()) {
    throw ValidationError("no checkpoints in '" + dir.string() + "'");
  }
  return best;
}

void cmd_generate(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.data.synth) {
    throw ValidationError("generate requires a data.synth section");
  }
  auto ds = synth::generate(*cfg.data.synth);
  const fs::path dir = cfg.output_dir / "dataset";
  synth::write_dataset(ds, dir);
  io::write_detections(dir / "oracle_detections.json",
                       synth::oracle_detections(ds.annotations),
                       std::max<int>(io::kDefaultPredictionCap,
                                     cfg.decode.max_predictions));
  long instances = 0;
  for (const auto& v : ds.annotations.videos) {
    instances += static_cast<long>(v.instances().size());
  }
  out << "generated " << ds.annotations.videos.size() << " videos, "
      << instances << " instances, " << cfg.data.synth->sources.size()
      << " feature sources -> " << dir.string() << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto paths = resolve_dataset(cfg);
  const auto bundle = pipeline::load_dataset(paths.manifest, paths.annotations);
  const auto samples = pipeline::build_samples(
      bundle, cfg.data.reference_source, cfg.fusion.align);
  const auto plan = make_fusion_plan(cfg, samples);
  const auto mcfg =
      model_config_for_dataset(cfg, bundle.annotations.num_classes);

  Localizer model(mcfg, plan, cfg.seed);
  TrainOptions opts;
  opts.checkpoint_dir = cfg.output_dir / "checkpoints";
  opts.log_path = cfg.output_dir / "train_log.jsonl";
  fs::create_directories(cfg.output_dir);

  const auto report = train_model(model, samples.samples, cfg.train,
                                  samples.seconds_per_step, opts);
  out << "trained " << cfg.train.epochs << " epochs ("
      << report.step_losses.size() << " steps) on "
      << samples.samples.size() << " videos; final loss "
      << (report.step_losses.empty() ? 0.0 : report.step_losses.back())
      << "\ncheckpoints -> " << opts.checkpoint_dir.string() << "\n";
}

void cmd_predict(const RunConfig& cfg, const CliOptions& cli,
                 std::ostream& out) {
  const auto paths = resolve_dataset(cfg);
  const auto bundle = pipeline::load_dataset(paths.manifest, paths.annotations);
  const auto samples = pipeline::build_samples(
      bundle, cfg.data.reference_source, cfg.fusion.align);

  const fs::path ckpt_path =
      cli.checkpoint ? *cli.checkpoint
                     : latest_checkpoint(cfg.output_dir / "checkpoints");
  auto ckpt = load_checkpoint(ckpt_path);

  auto results = pipeline::predict_all(ckpt.model, samples, cfg.decode);
  fs::create_directories(cfg.output_dir);
  const fs::path det_path = cfg.output_dir / "detections.json";
  io::write_detections(det_path, results, cfg.decode.max_predictions);
  long total = 0;
  for (const auto& [vid, list] : results) total += static_cast<long>(list.size());
  out << "predicted " << total << " detections for " << results.size()
      << " videos with checkpoint " << ckpt_path.filename().string()
      << " -> " << det_path.string() << "\n";
}

metrics::EvalReport cmd_eval(const RunConfig& cfg, const CliOptions& cli,
                             std::ostream& out) {
  const auto paths = resolve_dataset(cfg);
  const auto annotations = io::read_annotations(paths.annotations);
  const fs::path det_path =
      cli.detections ? *cli.detections : cfg.output_dir / "detections.json";
  const auto dets =
      io::read_detections(det_path, cfg.decode.max_predictions);
  const auto report = metrics::evaluate(dets, annotations, cfg.eval);
  fs::create_directories(cfg.output_dir);
  metrics::write_eval_report(cfg.output_dir / "eval_report.json", report);
  out << metrics::format_report_table(report);
  return report;
}

void cmd_ablate(const RunConfig& cfg, const CliOptions& cli,
                std::ostream& out) {
  // Same dataset and seed for both fusion modes; only the fusion differs.
  struct ModeResult {
    std::string name;
    metrics::EvalReport report;
  };
  std::vector<ModeResult> results;
  for (const FusionMode mode : {FusionMode::kCat, FusionMode::kProjCat}) {
    RunConfig sub = cfg;
    sub.fusion.mode = mode;
    sub.output_dir = cfg.output_dir / ("ablate_" + to_string(mode));
    fs::create_directories(sub.output_dir);
    // Point the sub-run at the shared dataset.
    const auto paths = resolve_dataset(cfg);
    sub.data.manifest = paths.manifest;
    sub.data.annotations = paths.annotations;

    out << "--- fusion mode: " << to_string(mode) << " ---\n";
    cmd_train(sub, out);
    cmd_predict(sub, cli, out);
    results.push_back({to_string(mode), cmd_eval(sub, cli, out)});
  }

  const auto& cat = results[0].report;
  const auto& proj = results[1].report;
  detail::json summary;
  summary["cat"] = {{"average_mAP", cat.average_map},
                    {"recall_at_1x_tiou05", cat.recall_at_1x_tiou05}};
  summary["proj_cat"] = {{"average_mAP", proj.average_map},
                         {"recall_at_1x_tiou05", proj.recall_at_1x_tiou05}};
  summary["delta_average_mAP"] = proj.average_map - cat.average_map;
  summary["delta_recall"] =
      proj.recall_at_1x_tiou05 - cat.recall_at_1x_tiou05;
  std::ofstream f(cfg.output_dir / "ablation.json", std::ios::trunc);
  f << summary.dump(2) << "\n";

  char buf[128];
  out << "--- ablation summary ---\n";
  std::snprintf(buf, sizeof(buf), "%-10s  avg mAP %6.2f  Recall@1x %6.2f\n",
                "cat", 100.0 * cat.average_map,
                100.0 * cat.recall_at_1x_tiou05);
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-10s  avg mAP %6.2f  Recall@1x %6.2f\n",
                "proj_cat", 100.0 * proj.average_map,
                100.0 * proj.recall_at_1x_tiou05);
  out << buf;
  std::snprintf(buf, sizeof(buf), "delta (proj_cat - cat): %+.2f avg mAP\n",
                100.0 * (proj.average_map - cat.average_map));
  out << buf;
}

}  // namespace

std::string usage() {
  return "usage: talkit <generate|train|predict|eval|ablate> <config.json>\n"
         "           [--checkpoint <path>] [--detections <path>]\n";
}

int run(const std::string& command, const std::filesystem::path& config_path,
        const CliOptions& opts, std::ostream& out, std::ostream& err) {
  static const char* kCommands[] = {"generate", "train", "predict", "eval",
                                    "ablate"};
  if (std::find(std::begin(kCommands), std::end(kCommands), command) ==
      std::end(kCommands)) {
    err << "unknown command '" << command << "'\n" << usage();
    return kExitUsage;
  }
  try {
    const RunConfig cfg = load_run_config(config_path);
    if (command == "generate") {
      cmd_generate(cfg, out);
    } else if (command == "train") {
      cmd_train(cfg, out);
    } else if (command == "predict") {
      cmd_predict(cfg, opts, out);
    } else if (command == "eval") {
      cmd_eval(cfg, opts, out);
    } else {
      cmd_ablate(cfg, opts, out);
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace talkit::cli
