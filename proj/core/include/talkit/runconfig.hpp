// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "talkit/decode.hpp"
#include "talkit/fusion.hpp"
#include "talkit/metrics.hpp"
#include "talkit/model.hpp"
#include "talkit/synthdata.hpp"
#include "talkit/train.hpp"

namespace talkit {

struct DataConfig {
  std::optional<synth::SynthConfig> synth;
  std::filesystem::path manifest;
  std::filesystem::path annotations;
  std::string reference_source;  // empty: first source in the manifest
};

struct FusionConfig {
  FusionMode mode = FusionMode::kProjCat;
  std::vector<int> projection_dims;  // empty + 3 sources: (386, 386, 256)
  fusion::AlignMode align = fusion::AlignMode::kNearest;
};

/// One JSON document drives every command. Environment variables of the
/// form TALKIT_<SECTION>_<FIELD> (e.g. TALKIT_TRAIN_EPOCHS=3,
/// TALKIT_FUSION_MODE=cat) override individual fields; TALKIT_SEED and
/// TALKIT_OUTPUT_DIR override the top level.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;
  DataConfig data;
  FusionConfig fusion;
  ModelConfig model;
  TrainConfig train;
  decode::DecodeConfig decode;
  metrics::EvalConfig eval;
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace talkit
