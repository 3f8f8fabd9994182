// SPDX-License-Identifier: Apache-2.0
#include "talkit/decode.hpp"

#include <algorithm>
#include <cmath>

#include "talkit/error.hpp"
#include "talkit/nn.hpp"

namespace talkit::decode {

void DecodeConfig::validate() const {
  if (!(score_threshold > 0.0)) {
    throw ValidationError("decode.score_threshold must be > 0");
  }
  if (pre_nms_topk < 1) throw ValidationError("decode.pre_nms_topk must be >= 1");
  if (!(softnms_sigma > 0.0)) {
    throw ValidationError("decode.softnms_sigma must be > 0");
  }
  if (!(softnms_floor > 0.0)) {
    throw ValidationError("decode.softnms_floor must be > 0");
  }
  if (max_predictions < 1) {
    throw ValidationError("decode.max_predictions must be >= 1");
  }
  if (!(seconds_per_step > 0.0)) {
    throw ValidationError("decode.seconds_per_step must be > 0");
  }
}

bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start() != b.segment.start())
    return a.segment.start() < b.segment.start();
  if (a.label_id != b.label_id) return a.label_id < b.label_id;
  return a.segment.end() < b.segment.end();
}

std::vector<Detection> decode_points(const PyramidOutput& p,
                                     const DecodeConfig& cfg,
                                     double duration) {
  cfg.validate();
  if (!(duration > 0.0)) throw ValidationError("duration must be > 0");
  const double dt = cfg.seconds_per_step;

  std::vector<Detection> pooled;
  std::vector<Detection> level_dets;
  for (const auto& lvl : p.levels) {
    level_dets.clear();
    const double s = static_cast<double>(lvl.stride);
    for (Index t = 0; t < lvl.cls_logits.rows(); ++t) {
      if (!lvl.valid[static_cast<std::size_t>(t)]) continue;
      const double center = static_cast<double>(t) * s;
      const double start_steps = center - lvl.offsets(t, 0) * s;
      const double end_steps = center + lvl.offsets(t, 1) * s;
      if (!(start_steps < end_steps)) continue;  // empty segment
      for (Index c = 0; c < lvl.cls_logits.cols(); ++c) {
        const double prob = nn::sigmoid(lvl.cls_logits(t, c));
        if (!(prob > cfg.score_threshold)) continue;
        const auto clipped =
            clip_segment(Segment(start_steps * dt, end_steps * dt), duration);
        if (!clipped) continue;
        level_dets.emplace_back(static_cast<int>(c), prob, *clipped);
      }
    }
    std::sort(level_dets.begin(), level_dets.end(), detection_before);
    if (static_cast<int>(level_dets.size()) > cfg.pre_nms_topk) {
      level_dets.erase(level_dets.begin() + cfg.pre_nms_topk,
                       level_dets.end());
    }
    pooled.insert(pooled.end(), level_dets.begin(), level_dets.end());
  }
  std::sort(pooled.begin(), pooled.end(), detection_before);
  return pooled;
}

std::vector<Detection> soft_nms(std::vector<Detection> dets,
                                const DecodeConfig& cfg) {
  // Bucket by label; suppression never crosses classes.
  std::vector<std::vector<Detection>> by_label;
  for (auto& d : dets) {
    if (d.label_id >= static_cast<int>(by_label.size())) {
      by_label.resize(static_cast<std::size_t>(d.label_id) + 1);
    }
    by_label[static_cast<std::size_t>(d.label_id)].push_back(d);
  }

  std::vector<Detection> out;
  out.reserve(dets.size());
  for (auto& group : by_label) {
    while (!group.empty()) {
      auto best = std::min_element(group.begin(), group.end(),
                                   detection_before);
      const Detection keep = *best;
      group.erase(best);
      out.push_back(keep);
      std::vector<Detection> rest;
      rest.reserve(group.size());
      for (const auto& d : group) {
        const double overlap = tiou(keep.segment, d.segment);
        const double factor =
            std::exp(-(overlap * overlap) / cfg.softnms_sigma);
        const double rescored = d.score * factor;
        if (rescored < cfg.softnms_floor) continue;
        rest.emplace_back(d.label_id, rescored, d.segment);
      }
      group = std::move(rest);
    }
  }
  std::sort(out.begin(), out.end(), detection_before);
  return out;
}

std::vector<Detection> cap_predictions(std::vector<Detection> dets,
                                       int max_predictions) {
  if (max_predictions < 1) {
    throw ValidationError("max_predictions must be >= 1");
  }
  if (static_cast<int>(dets.size()) > max_predictions) {
    dets.erase(dets.begin() + max_predictions, dets.end());
  }
  return dets;
}

std::vector<Detection> decode_video(const PyramidOutput& p,
                                    const DecodeConfig& cfg,
                                    double duration) {
  return cap_predictions(soft_nms(decode_points(p, cfg, duration), cfg),
                         cfg.max_predictions);
}

}  // namespace talkit::decode
