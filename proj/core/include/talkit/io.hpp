// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "talkit/mat.hpp"
#include "talkit/types.hpp"

namespace talkit::io {

inline constexpr int kDefaultPredictionCap = 2000;
inline constexpr std::uint8_t kDtypeFloat32LE = 0;

// ---------------------------------------------------------------------------
// Feature files
//
// Binary layout, little-endian throughout:
//   bytes  0..3   magic "TKF1"
//   byte   4      dtype code (0 = little-endian float32)
//   bytes  5..8   T (uint32, rows)
//   bytes  9..12  D (uint32, cols)
//   bytes 13..15  zero padding (header is 16 bytes total)
//   bytes 16..    T*D float32 values, row-major
// ---------------------------------------------------------------------------

void write_feature_file(const std::filesystem::path& path, const Mat& m);
Mat read_feature_file(const std::filesystem::path& path);

// In-memory form of the same bytes; the checkpoint container embeds one
// blob per parameter tensor.
std::string encode_feature_blob(const Mat& m);
Mat decode_feature_blob(const std::string& bytes, const std::string& ctx);

// ---------------------------------------------------------------------------
// Annotations (JSON)
//   {"num_classes": C,
//    "videos": [{"video_id": ..., "duration": ...,
//                "instances": [{"label_id":..., "start":..., "end":...}]}]}
// ---------------------------------------------------------------------------

struct Dataset {
  int num_classes = 0;
  std::vector<VideoRecord> videos;
};

Dataset read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const Dataset& ds);

// ---------------------------------------------------------------------------
// Detections (JSON)
//   {"version": "1.0",
//    "detect_results": {video_id: [{"label_id":..., "score":...,
//                                   "segment":[start, end]}, ...]}}
// Lists are sorted by score descending (ties: start, then label). Byte
// output is deterministic for identical input.
// ---------------------------------------------------------------------------

using DetectionMap = std::map<std::string, std::vector<Detection>>;

void write_detections(const std::filesystem::path& path,
                      const DetectionMap& results,
                      int prediction_cap = kDefaultPredictionCap);
DetectionMap read_detections(const std::filesystem::path& path,
                             int prediction_cap = kDefaultPredictionCap);

// ---------------------------------------------------------------------------
// Manifest (JSON): per-video feature sources and their clip geometry.
//   {"videos": [{"video_id":..., "duration":..., "fps":...,
//                "sources": [{"name":..., "path":..., "frames_per_clip":...,
//                             "clip_stride_frames":..., "dim":...}]}]}
// Feature paths are relative to the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestSource {
  std::string name;
  std::string path;
  int frames_per_clip = 0;
  int clip_stride_frames = 0;
  int dim = 0;
};

struct ManifestVideo {
  std::string video_id;
  double duration = 0.0;
  double fps = 0.0;
  std::vector<ManifestSource> sources;
};

struct Manifest {
  std::vector<ManifestVideo> videos;
};

// Number of clips a full-window extractor emits: frames = round(duration*fps),
// T = floor((frames - frames_per_clip) / clip_stride_frames) + 1.
long expected_num_clips(double duration, double fps, int frames_per_clip,
                        int clip_stride_frames);

// With verify_features set, opens each referenced feature file header and
// checks the declared dim against D and the geometry formula against T.
Manifest read_manifest(const std::filesystem::path& path,
                       bool verify_features = true);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

}  // namespace talkit::io
