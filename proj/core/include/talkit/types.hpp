// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "talkit/error.hpp"

namespace talkit {

/// Closed time interval in seconds. Zero-length and reversed intervals are
/// rejected at construction; a Segment that exists is always usable.
class Segment {
 public:
  Segment(double start, double end);

  double start() const { return start_; }
  double end() const { return end_; }
  double length() const { return end_ - start_; }

  friend bool operator==(const Segment& a, const Segment& b) {
    return a.start_ == b.start_ && a.end_ == b.end_;
  }

 private:
  double start_;
  double end_;
};

/// Temporal intersection-over-union of two intervals. Symmetric, in [0,1],
/// exactly 1 for identical segments and exactly 0 for disjoint ones.
double tiou(const Segment& a, const Segment& b);

/// Clamps a segment to [0, duration]. Returns nullopt when nothing with
/// positive length remains (caller drops the detection).
std::optional<Segment> clip_segment(const Segment& s, double duration);

/// A ground-truth action: category plus its time span.
struct ActionInstance {
  ActionInstance(int label_id, Segment segment);

  int label_id;
  Segment segment;
};

/// A scored prediction.
struct Detection {
  Detection(int label_id, double score, Segment segment);

  int label_id;
  double score;
  Segment segment;
};

/// One untrimmed video with its ground-truth instances. All instance
/// segments must lie inside [0, duration].
class VideoRecord {
 public:
  VideoRecord(std::string video_id, double duration,
              std::vector<ActionInstance> instances);

  const std::string& video_id() const { return video_id_; }
  double duration() const { return duration_; }
  const std::vector<ActionInstance>& instances() const { return instances_; }

 private:
  std::string video_id_;
  double duration_;
  std::vector<ActionInstance> instances_;
};

}  // namespace talkit
