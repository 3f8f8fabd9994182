// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "talkit/model.hpp"
#include "talkit/types.hpp"

namespace talkit::decode {

struct DecodeConfig {
  double score_threshold = 0.001;
  int pre_nms_topk = 2000;       // per-level cap before pooling levels
  double softnms_sigma = 0.9;
  double softnms_floor = 0.001;  // rescored detections below this are dropped
  int max_predictions = 2000;
  double seconds_per_step = 0.0;  // finest-grid step length, set per dataset

  void validate() const;
};

/// Deterministic detection ordering used throughout decoding and
/// serialization: score descending, then earlier start, then smaller label,
/// then earlier end.
bool detection_before(const Detection& a, const Detection& b);

/// Turns pyramid outputs into scored segments. A point i at level stride s
/// with offsets (d_start, d_end) and sigmoid probability p > threshold for
/// class c yields
///   segment = ((i*s - d_start*s) * dt, (i*s + d_end*s) * dt)
/// clipped to [0, duration]; empty segments are dropped. Each level keeps
/// its pre_nms_topk best candidates before pooling.
std::vector<Detection> decode_points(const PyramidOutput& p,
                                     const DecodeConfig& cfg, double duration);

/// Gaussian SoftNMS applied independently per label: repeatedly emit the
/// highest-scoring remaining detection and rescale the rest of its class by
/// exp(-tiou^2 / sigma), dropping anything rescored below the floor.
/// Segments are never altered; scores never increase.
std::vector<Detection> soft_nms(std::vector<Detection> dets,
                                const DecodeConfig& cfg);

/// Keeps the first min(n, max_predictions) entries of a score-sorted list.
std::vector<Detection> cap_predictions(std::vector<Detection> dets,
                                       int max_predictions);

/// decode_points + soft_nms + cap, the per-video pipeline.
std::vector<Detection> decode_video(const PyramidOutput& p,
                                    const DecodeConfig& cfg, double duration);

}  // namespace talkit::decode
