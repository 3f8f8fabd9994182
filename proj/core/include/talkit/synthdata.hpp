// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "talkit/io.hpp"
#include "talkit/mat.hpp"
#include "talkit/rng.hpp"

namespace talkit::synth {

struct SynthSource {
  std::string name;
  int dim = 0;
  int frames_per_clip = 0;
  int clip_stride_frames = 0;
  // Multiplies the whole source (signal and noise); the knob for the
  // deliberately imbalanced-magnitude ablation.
  double magnitude = 1.0;
  // When false the source carries no class signal, only noise.
  bool informative = true;
};

struct SynthConfig {
  int num_videos = 20;
  double duration_min = 30.0;
  double duration_max = 90.0;
  int num_classes = 5;
  int instances_min = 3;
  int instances_max = 8;
  // Target fraction of instances shorter than short_max_seconds; realized
  // as the exact mixture weight of the short duration component.
  double short_fraction = 0.224;
  double short_max_seconds = 3.0;
  double fps = 30.0;
  double noise_level = 1.0;
  std::uint64_t seed = 1;
  std::vector<SynthSource> sources = {
      {"slowfast", 2304, 32, 16, 1.0, true},
      {"omnivore", 1536, 32, 16, 1.0, true},
      {"egovlp", 256, 4, 4, 1.0, true},
  };

  void validate() const;
};

struct SynthDataset {
  io::Dataset annotations;
  io::Manifest manifest;  // feature paths filled in by write_dataset
  // features[v][source name] = T x D matrix
  std::vector<std::map<std::string, Mat>> features;
  // Per source: num_classes x dim orthogonal signature rows (pre-magnitude).
  std::map<std::string, Mat> signatures;
};

/// Draws one instance duration from the short/long mixture.
double sample_instance_duration(const SynthConfig& cfg, double video_duration,
                                Rng& rng);

/// Seeded generator: plants class-signature vectors into per-source feature
/// sequences over each instance's clip span, adds scaled unit-variance
/// noise everywhere. Identical seeds give bit-identical datasets.
SynthDataset generate(const SynthConfig& cfg);

/// Writes manifest.json, annotations.json and features/*.tkf under dir.
void write_dataset(SynthDataset& ds, const std::filesystem::path& dir);

/// Each ground-truth instance as a detection with score 1.0; pins the
/// evaluator's perfect-prediction fixpoint.
io::DetectionMap oracle_detections(const io::Dataset& annotations);

}  // namespace talkit::synth
