// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "talkit/decode.hpp"
#include "talkit/fusion.hpp"
#include "talkit/io.hpp"
#include "talkit/train.hpp"

namespace talkit::pipeline {

struct DatasetBundle {
  io::Dataset annotations;
  io::Manifest manifest;
  std::filesystem::path manifest_dir;
};

/// Reads and cross-validates the manifest/annotations pair (same video ids,
/// matching durations).
DatasetBundle load_dataset(const std::filesystem::path& manifest_path,
                           const std::filesystem::path& annotations_path);

struct SampleSet {
  std::vector<TrainSample> samples;
  std::vector<std::string> source_names;
  std::vector<int> source_dims;
  double seconds_per_step = 0.0;  // reference clip stride / fps
};

/// Loads every feature file and aligns each video's sources onto the
/// reference source's grid. An empty reference name selects the first
/// source listed in the manifest.
SampleSet build_samples(const DatasetBundle& bundle,
                        const std::string& reference_source,
                        fusion::AlignMode mode = fusion::AlignMode::kNearest);

/// Forward + decode for every sample. cfg.seconds_per_step of 0 is filled
/// from the sample set.
io::DetectionMap predict_all(const Localizer& model, const SampleSet& samples,
                             decode::DecodeConfig cfg);

}  // namespace talkit::pipeline
