// SPDX-License-Identifier: Apache-2.0
#include "talkit/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

extern char** environ;

namespace talkit {

namespace {

using detail::json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Parses an override value as JSON when possible, else keeps it a string.
json parse_env_value(const std::string& v) {
  json parsed = json::parse(v, nullptr, false);
  if (parsed.is_discarded()) return json(v);
  return parsed;
}

void apply_env_overrides(json& doc) {
  static const char* kSections[] = {"data",  "fusion", "model",
                                    "train", "decode", "eval"};
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.rfind("TALKIT_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = entry.substr(7, eq - 7);
    const std::string value = entry.substr(eq + 1);

    std::string section;
    std::string field = lower(key);
    for (const char* s : kSections) {
      const std::string prefix = std::string(s) + "_";
      if (lower(key).rfind(prefix, 0) == 0) {
        section = s;
        field = lower(key).substr(prefix.size());
        break;
      }
    }
    if (section.empty()) {
      doc[field] = parse_env_value(value);  // seed, output_dir
    } else {
      doc[section][field] = parse_env_value(value);
    }
  }
}

synth::SynthConfig synth_config_from_json(const json& j,
                                          const std::string& ctx) {
  synth::SynthConfig cfg;
  cfg.num_videos = detail::get_or(j, "num_videos", cfg.num_videos, ctx);
  cfg.duration_min = detail::get_or(j, "duration_min", cfg.duration_min, ctx);
  cfg.duration_max = detail::get_or(j, "duration_max", cfg.duration_max, ctx);
  cfg.num_classes = detail::get_or(j, "num_classes", cfg.num_classes, ctx);
  cfg.instances_min =
      detail::get_or(j, "instances_min", cfg.instances_min, ctx);
  cfg.instances_max =
      detail::get_or(j, "instances_max", cfg.instances_max, ctx);
  cfg.short_fraction =
      detail::get_or(j, "short_fraction", cfg.short_fraction, ctx);
  cfg.short_max_seconds =
      detail::get_or(j, "short_max_seconds", cfg.short_max_seconds, ctx);
  cfg.fps = detail::get_or(j, "fps", cfg.fps, ctx);
  cfg.noise_level = detail::get_or(j, "noise_level", cfg.noise_level, ctx);
  cfg.seed = detail::get_or(j, "seed", cfg.seed, ctx);
  if (j.contains("sources")) {
    const auto& arr = j.at("sources");
    if (!arr.is_array() || arr.empty()) {
      throw ConfigError(ctx + ".sources must be a nonempty list");
    }
    cfg.sources.clear();
    for (const auto& s : arr) {
      synth::SynthSource src;
      src.name = detail::get_field<std::string>(s, "name", ctx + ".sources");
      const std::string sctx = ctx + ".sources." + src.name;
      src.dim = detail::get_field<int>(s, "dim", sctx);
      src.frames_per_clip = detail::get_field<int>(s, "frames_per_clip", sctx);
      src.clip_stride_frames =
          detail::get_field<int>(s, "clip_stride_frames", sctx);
      src.magnitude = detail::get_or(s, "magnitude", 1.0, sctx);
      src.informative = detail::get_or(s, "informative", true, sctx);
      cfg.sources.push_back(std::move(src));
    }
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  return cfg;
}

TrainConfig train_config_from_json(const json& j, const std::string& ctx) {
  TrainConfig cfg;
  cfg.epochs = detail::get_or(j, "epochs", cfg.epochs, ctx);
  cfg.batch_size = detail::get_or(j, "batch_size", cfg.batch_size, ctx);
  cfg.base_lr = detail::get_or(j, "base_lr", cfg.base_lr, ctx);
  cfg.warmup_epochs =
      detail::get_or(j, "warmup_epochs", cfg.warmup_epochs, ctx);
  cfg.weight_decay = detail::get_or(j, "weight_decay", cfg.weight_decay, ctx);
  cfg.adam_beta1 = detail::get_or(j, "adam_beta1", cfg.adam_beta1, ctx);
  cfg.adam_beta2 = detail::get_or(j, "adam_beta2", cfg.adam_beta2, ctx);
  cfg.adam_eps = detail::get_or(j, "adam_eps", cfg.adam_eps, ctx);
  cfg.focal_alpha = detail::get_or(j, "focal_alpha", cfg.focal_alpha, ctx);
  cfg.focal_gamma = detail::get_or(j, "focal_gamma", cfg.focal_gamma, ctx);
  cfg.center_sampling_radius = detail::get_or(
      j, "center_sampling_radius", cfg.center_sampling_radius, ctx);
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  return cfg;
}

decode::DecodeConfig decode_config_from_json(const json& j,
                                             const std::string& ctx) {
  decode::DecodeConfig cfg;
  cfg.score_threshold =
      detail::get_or(j, "score_threshold", cfg.score_threshold, ctx);
  cfg.pre_nms_topk = detail::get_or(j, "pre_nms_topk", cfg.pre_nms_topk, ctx);
  cfg.softnms_sigma =
      detail::get_or(j, "softnms_sigma", cfg.softnms_sigma, ctx);
  cfg.softnms_floor =
      detail::get_or(j, "softnms_floor", cfg.softnms_floor, ctx);
  cfg.max_predictions =
      detail::get_or(j, "max_predictions", cfg.max_predictions, ctx);
  cfg.seconds_per_step =
      detail::get_or(j, "seconds_per_step", cfg.seconds_per_step, ctx);
  // seconds_per_step is resolved from the data at run time; check the rest.
  if (!(cfg.score_threshold > 0.0) || cfg.pre_nms_topk < 1 ||
      !(cfg.softnms_sigma > 0.0) || !(cfg.softnms_floor > 0.0) ||
      cfg.max_predictions < 1 || cfg.seconds_per_step < 0.0) {
    throw ConfigError(ctx + ": decode parameters out of range");
  }
  return cfg;
}

metrics::EvalConfig eval_config_from_json(const json& j,
                                          const std::string& ctx) {
  metrics::EvalConfig cfg;
  cfg.tiou_thresholds = detail::get_or<std::vector<double>>(
      j, "tiou_thresholds", cfg.tiou_thresholds, ctx);
  cfg.recall_k = detail::get_or(j, "recall_k", cfg.recall_k, ctx);
  cfg.recall_tiou = detail::get_or(j, "recall_tiou", cfg.recall_tiou, ctx);
  if (cfg.tiou_thresholds.empty() || cfg.recall_k < 1 ||
      !(cfg.recall_tiou > 0.0 && cfg.recall_tiou <= 1.0)) {
    throw ConfigError(ctx + ": eval parameters out of range");
  }
  for (double t : cfg.tiou_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw ConfigError(ctx + ".tiou_thresholds must lie in (0, 1]");
    }
  }
  return cfg;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  json doc = json::parse(ss.str(), nullptr, false);
  if (doc.is_discarded()) {
    throw ConfigError("'" + path.string() + "' is not valid JSON");
  }
  apply_env_overrides(doc);

  RunConfig cfg;
  cfg.seed = detail::get_or<std::uint64_t>(doc, "seed", cfg.seed, "config");
  cfg.output_dir = detail::get_or<std::string>(doc, "output_dir", "", "config");
  if (cfg.output_dir.empty()) {
    throw ConfigError("config.output_dir: missing required field");
  }

  if (doc.contains("data")) {
    const auto& d = doc.at("data");
    if (d.contains("synth")) {
      cfg.data.synth = synth_config_from_json(d.at("synth"), "data.synth");
      // Dataset generation inherits the run seed unless pinned explicitly.
      if (!d.at("synth").contains("seed")) cfg.data.synth->seed = cfg.seed;
    }
    cfg.data.manifest = detail::get_or<std::string>(d, "manifest", "", "data");
    cfg.data.annotations =
        detail::get_or<std::string>(d, "annotations", "", "data");
    cfg.data.reference_source =
        detail::get_or<std::string>(d, "reference_source", "", "data");
  }
  if (!cfg.data.synth && cfg.data.manifest.empty()) {
    throw ConfigError("data: either a synth section or a manifest path is "
                      "required");
  }

  if (doc.contains("fusion")) {
    const auto& f = doc.at("fusion");
    cfg.fusion.mode = fusion_mode_from_string(
        detail::get_or<std::string>(f, "mode", "proj_cat", "fusion"));
    cfg.fusion.projection_dims = detail::get_or<std::vector<int>>(
        f, "projection_dims", {}, "fusion");
    const std::string align =
        detail::get_or<std::string>(f, "align", "nearest", "fusion");
    if (align == "nearest") {
      cfg.fusion.align = fusion::AlignMode::kNearest;
    } else if (align == "linear") {
      cfg.fusion.align = fusion::AlignMode::kLinear;
    } else {
      throw ConfigError("fusion.align must be 'nearest' or 'linear'");
    }
  }

  cfg.model = doc.contains("model")
                  ? detail::model_config_from_json(doc.at("model"), "model")
                  : ModelConfig{};
  cfg.train = doc.contains("train")
                  ? train_config_from_json(doc.at("train"), "train")
                  : TrainConfig{};
  cfg.train.seed = cfg.seed;
  cfg.decode = doc.contains("decode")
                   ? decode_config_from_json(doc.at("decode"), "decode")
                   : decode::DecodeConfig{};
  cfg.eval = doc.contains("eval")
                 ? eval_config_from_json(doc.at("eval"), "eval")
                 : metrics::EvalConfig{};
  return cfg;
}

}  // namespace talkit
