// SPDX-License-Identifier: Apache-2.0
#include "talkit/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "talkit/error.hpp"
#include "talkit/fusion.hpp"

namespace talkit::synth {

void SynthConfig::validate() const {
  if (num_videos < 1) throw ValidationError("synth.num_videos must be >= 1");
  if (!(duration_min > 0.0) || !(duration_max >= duration_min)) {
    throw ValidationError("synth duration range is invalid");
  }
  if (num_classes < 1) throw ValidationError("synth.num_classes must be >= 1");
  if (instances_min < 0 || instances_max < instances_min) {
    throw ValidationError("synth instance count range is invalid");
  }
  if (!(short_fraction >= 0.0 && short_fraction <= 1.0)) {
    throw ValidationError("synth.short_fraction must lie in [0,1]");
  }
  if (!(short_max_seconds > 0.6)) {
    throw ValidationError("synth.short_max_seconds must exceed 0.6");
  }
  if (!(duration_min > 2.0 * short_max_seconds)) {
    throw ValidationError("infeasible config: videos of duration " +
                          std::to_string(duration_min) +
                          " cannot hold long instances above " +
                          std::to_string(short_max_seconds) + " seconds");
  }
  if (!(fps > 0.0)) throw ValidationError("synth.fps must be > 0");
  if (noise_level < 0.0) throw ValidationError("synth.noise_level must be >= 0");
  if (sources.empty()) throw ValidationError("synth needs at least one source");
  for (const auto& s : sources) {
    if (s.name.empty()) throw ValidationError("synth source needs a name");
    if (s.dim <= 0 || s.frames_per_clip <= 0 || s.clip_stride_frames <= 0) {
      throw ValidationError("synth source '" + s.name +
                            "': geometry must be positive");
    }
    if (s.informative && s.dim < num_classes) {
      throw ValidationError("synth source '" + s.name + "': dim " +
                            std::to_string(s.dim) +
                            " cannot hold " + std::to_string(num_classes) +
                            " orthogonal class signatures");
    }
    if (!(s.magnitude > 0.0)) {
      throw ValidationError("synth source '" + s.name +
                            "': magnitude must be > 0");
    }
  }
}

double sample_instance_duration(const SynthConfig& cfg, double video_duration,
                                Rng& rng) {
  const double long_cap = 0.5 * video_duration;
  if (!(long_cap > cfg.short_max_seconds)) {
    throw ValidationError("infeasible video: duration " +
                          std::to_string(video_duration) +
                          " leaves no room for long instances");
  }
  if (rng.uniform() < cfg.short_fraction) {
    return rng.uniform(0.5, cfg.short_max_seconds);
  }
  // Long tail: shifted exponential with mean 8 s, capped at half the video.
  const double u = 1.0 - rng.uniform();
  const double dur = cfg.short_max_seconds - 8.0 * std::log(u);
  return std::min(dur, long_cap);
}

namespace {

Mat make_signatures(int num_classes, int dim, Rng& rng) {
  Mat sig(num_classes, dim);
  for (Index r = 0; r < sig.rows(); ++r) {
    for (Index c = 0; c < sig.cols(); ++c) sig(r, c) = rng.normal();
  }
  // Modified Gram-Schmidt, rows scaled to norm sqrt(dim) so each entry is
  // O(1) against unit-variance noise.
  for (Index i = 0; i < sig.rows(); ++i) {
    for (Index j = 0; j < i; ++j) {
      sig.row(i) -= sig.row(i).dot(sig.row(j)) * sig.row(j);
    }
    const double norm = sig.row(i).norm();
    if (norm < 1e-9) {
      throw ValidationError("degenerate class signatures; change the seed");
    }
    sig.row(i) /= norm;
  }
  sig *= std::sqrt(static_cast<double>(dim));
  return sig;
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x73796e7468ULL));

  SynthDataset ds;
  ds.annotations.num_classes = cfg.num_classes;
  for (const auto& src : cfg.sources) {
    ds.signatures[src.name] =
        src.informative ? make_signatures(cfg.num_classes, src.dim, rng)
                        : Mat::Zero(cfg.num_classes, src.dim);
  }

  for (int v = 0; v < cfg.num_videos; ++v) {
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04d", v);
    const double duration = rng.uniform(cfg.duration_min, cfg.duration_max);
    const auto n_inst = static_cast<int>(
        rng.uniform_int(cfg.instances_min, cfg.instances_max));
    std::vector<ActionInstance> instances;
    instances.reserve(static_cast<std::size_t>(n_inst));
    for (int i = 0; i < n_inst; ++i) {
      const double dur = sample_instance_duration(cfg, duration, rng);
      if (dur >= duration) {
        throw ValidationError("infeasible config: instance of " +
                              std::to_string(dur) +
                              " s does not fit a video of " +
                              std::to_string(duration) + " s");
      }
      const double start = rng.uniform(0.0, duration - dur);
      const auto label =
          static_cast<int>(rng.uniform_int(0, cfg.num_classes - 1));
      instances.emplace_back(label, Segment(start, start + dur));
    }

    io::ManifestVideo mv;
    mv.video_id = name;
    mv.duration = duration;
    mv.fps = cfg.fps;

    std::map<std::string, Mat> feats;
    for (const auto& src : cfg.sources) {
      const long t = io::expected_num_clips(duration, cfg.fps,
                                            src.frames_per_clip,
                                            src.clip_stride_frames);
      Mat f(t, src.dim);
      for (Index r = 0; r < f.rows(); ++r) {
        for (Index c = 0; c < f.cols(); ++c) {
          f(r, c) = cfg.noise_level * rng.normal();
        }
      }
      const Mat& sig = ds.signatures[src.name];
      for (const auto& inst : instances) {
        for (Index r = 0; r < f.rows(); ++r) {
          const double center =
              (static_cast<double>(r) * src.clip_stride_frames +
               src.frames_per_clip / 2.0) /
              cfg.fps;
          if (center >= inst.segment.start() && center <= inst.segment.end()) {
            f.row(r) += sig.row(inst.label_id);
          }
        }
      }
      f *= src.magnitude;
      feats[src.name] = std::move(f);

      io::ManifestSource ms;
      ms.name = src.name;
      ms.frames_per_clip = src.frames_per_clip;
      ms.clip_stride_frames = src.clip_stride_frames;
      ms.dim = src.dim;
      mv.sources.push_back(std::move(ms));
    }

    ds.annotations.videos.emplace_back(name, duration, std::move(instances));
    ds.manifest.videos.push_back(std::move(mv));
    ds.features.push_back(std::move(feats));
  }
  return ds;
}

void write_dataset(SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  for (std::size_t v = 0; v < ds.manifest.videos.size(); ++v) {
    auto& mv = ds.manifest.videos[v];
    for (auto& src : mv.sources) {
      src.path = "features/" + mv.video_id + "_" + src.name + ".tkf";
      io::write_feature_file(dir / src.path, ds.features[v].at(src.name));
    }
  }
  io::write_manifest(dir / "manifest.json", ds.manifest);
  io::write_annotations(dir / "annotations.json", ds.annotations);
}

io::DetectionMap oracle_detections(const io::Dataset& annotations) {
  io::DetectionMap out;
  for (const auto& video : annotations.videos) {
    auto& list = out[video.video_id()];
    for (const auto& inst : video.instances()) {
      list.emplace_back(inst.label_id, 1.0, inst.segment);
    }
  }
  return out;
}

}  // namespace talkit::synth
