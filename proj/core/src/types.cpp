// SPDX-License-Identifier: Apache-2.0
#include "talkit/types.hpp"

#include <algorithm>
#include <cmath>

namespace talkit {

Segment::Segment(double start, double end) : start_(start), end_(end) {
  if (!std::isfinite(start) || !std::isfinite(end)) {
    throw ValidationError("segment endpoints must be finite");
  }
  if (!(start < end)) {
    throw ValidationError("segment requires start < end, got [" +
                          std::to_string(start) + ", " + std::to_string(end) +
                          "]");
  }
}

double tiou(const Segment& a, const Segment& b) {
  const double inter =
      std::min(a.end(), b.end()) - std::max(a.start(), b.start());
  if (inter <= 0.0) return 0.0;
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

std::optional<Segment> clip_segment(const Segment& s, double duration) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw ValidationError("clip_segment requires duration > 0");
  }
  const double lo = std::max(s.start(), 0.0);
  const double hi = std::min(s.end(), duration);
  if (!(lo < hi)) return std::nullopt;
  return Segment(lo, hi);
}

ActionInstance::ActionInstance(int label, Segment seg)
    : label_id(label), segment(seg) {
  if (label_id < 0) throw ValidationError("label_id must be nonnegative");
}

Detection::Detection(int label, double sc, Segment seg)
    : label_id(label), score(sc), segment(seg) {
  if (label_id < 0) throw ValidationError("label_id must be nonnegative");
  if (!(score >= 0.0 && score <= 1.0)) {
    throw ValidationError("detection score must lie in [0,1], got " +
                          std::to_string(score));
  }
}

VideoRecord::VideoRecord(std::string video_id, double duration,
                         std::vector<ActionInstance> instances)
    : video_id_(std::move(video_id)),
      duration_(duration),
      instances_(std::move(instances)) {
  if (!(duration_ > 0.0) || !std::isfinite(duration_)) {
    throw ValidationError("video '" + video_id_ + "': duration must be > 0");
  }
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const auto& seg = instances_[i].segment;
    if (seg.start() < 0.0 || seg.end() > duration_) {
      throw ValidationError("video '" + video_id_ + "': instance " +
                            std::to_string(i) + " lies outside [0, duration]");
    }
  }
}

}  // namespace talkit
