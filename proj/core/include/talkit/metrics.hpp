// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "talkit/io.hpp"
#include "talkit/types.hpp"

namespace talkit::metrics {

struct EvalConfig {
  std::vector<double> tiou_thresholds = {0.1, 0.2, 0.3, 0.4, 0.5};
  int recall_k = 1;
  double recall_tiou = 0.5;
};

struct EvalReport {
  std::vector<double> tiou_thresholds;
  // class id -> AP at each threshold (classes with >= 1 GT instance only).
  std::map<int, std::vector<double>> per_class_ap;
  std::vector<double> map_per_threshold;
  double average_map = 0.0;
  double recall_at_1x_tiou05 = 0.0;
  std::map<int, long> gt_per_class;
  long detections_used = 0;
  // Classes that appear in detections but have no GT; excluded from mAP.
  std::vector<int> classes_without_gt;
};

/// AP of one class at one tIoU threshold. Detections are pooled across
/// videos and matched greedily in score order (ties: earlier start, then
/// video id); a detection is a true positive when its best-overlap unmatched
/// same-video GT reaches the threshold. Area under the all-point
/// interpolated precision envelope. Classes with zero GT are an error; the
/// report-level driver excludes them instead.
double average_precision(const io::DetectionMap& dets,
                         const std::vector<VideoRecord>& videos, int class_id,
                         double tiou_threshold);

/// Fraction of GT instances matched within the top k*x scored detections of
/// their (video, class), x being that pair's GT count; matching is
/// one-to-one in detection-score order at tIoU >= threshold.
double recall_at_kx(const io::DetectionMap& dets,
                    const std::vector<VideoRecord>& videos, int k,
                    double tiou_threshold);

EvalReport evaluate(const io::DetectionMap& dets, const io::Dataset& dataset,
                    const EvalConfig& cfg = {});

void write_eval_report(const std::filesystem::path& path,
                       const EvalReport& report);

/// Human-readable table; percentages with two decimals.
std::string format_report_table(const EvalReport& report);

}  // namespace talkit::metrics
