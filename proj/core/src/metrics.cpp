// SPDX-License-Identifier: Apache-2.0
#include "talkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "talkit/error.hpp"
#include "json_util.hpp"

namespace talkit::metrics {

namespace {

struct PooledDet {
  double score;
  double start;
  double end;
  std::size_t video;  // index into the video list
  std::string video_id;
};

// Score descending; ties by earlier start, then video id.
bool pooled_before(const PooledDet& a, const PooledDet& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return a.video_id < b.video_id;
}

// All-point interpolated AP. Recall increases by exactly 1/total_gt at each
// true positive, so the area is the sum of the envelope precision at the TP
// positions divided by total_gt; perfect predictions give exactly 1.0.
double envelope_area(const std::vector<double>& precision,
                     const std::vector<char>& is_tp, long total_gt) {
  std::vector<double> env = precision;
  for (std::size_t i = env.size(); i-- > 1;) {
    env[i - 1] = std::max(env[i - 1], env[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) {
    if (is_tp[i]) sum += env[i];
  }
  return sum / static_cast<double>(total_gt);
}

}  // namespace

double average_precision(const io::DetectionMap& dets,
                         const std::vector<VideoRecord>& videos, int class_id,
                         double tiou_threshold) {
  // Per-video GT segments of this class.
  std::vector<std::vector<Segment>> gt(videos.size());
  std::map<std::string, std::size_t> video_index;
  long total_gt = 0;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    video_index[videos[v].video_id()] = v;
    for (const auto& inst : videos[v].instances()) {
      if (inst.label_id == class_id) {
        gt[v].push_back(inst.segment);
        ++total_gt;
      }
    }
  }
  if (total_gt == 0) {
    throw ValidationError("class " + std::to_string(class_id) +
                          " has no ground-truth instances");
  }

  std::vector<PooledDet> pooled;
  for (const auto& [vid, list] : dets) {
    auto it = video_index.find(vid);
    if (it == video_index.end()) continue;
    for (const auto& d : list) {
      if (d.label_id != class_id) continue;
      pooled.push_back({d.score, d.segment.start(), d.segment.end(),
                        it->second, vid});
    }
  }
  if (pooled.empty()) return 0.0;
  std::sort(pooled.begin(), pooled.end(), pooled_before);

  std::vector<std::vector<bool>> used(videos.size());
  for (std::size_t v = 0; v < videos.size(); ++v) {
    used[v].assign(gt[v].size(), false);
  }

  std::vector<double> precision(pooled.size());
  std::vector<char> is_tp(pooled.size(), 0);
  long tp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const auto& d = pooled[i];
    const Segment seg(d.start, d.end);
    double best = 0.0;
    std::size_t best_j = 0;
    bool found = false;
    for (std::size_t j = 0; j < gt[d.video].size(); ++j) {
      if (used[d.video][j]) continue;
      const double o = tiou(seg, gt[d.video][j]);
      if (!found || o > best) {
        best = o;
        best_j = j;
        found = true;
      }
    }
    if (found && best >= tiou_threshold) {
      used[d.video][best_j] = true;
      is_tp[i] = 1;
      ++tp;
    }
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  return envelope_area(precision, is_tp, total_gt);
}

double recall_at_kx(const io::DetectionMap& dets,
                    const std::vector<VideoRecord>& videos, int k,
                    double tiou_threshold) {
  if (k < 1) throw ValidationError("recall k must be >= 1");
  long total_gt = 0;
  long matched = 0;
  for (const auto& video : videos) {
    // GT segments per class in this video.
    std::map<int, std::vector<Segment>> gt_by_class;
    for (const auto& inst : video.instances()) {
      gt_by_class[inst.label_id].push_back(inst.segment);
    }
    if (gt_by_class.empty()) continue;

    std::map<int, std::vector<Detection>> det_by_class;
    auto it = dets.find(video.video_id());
    if (it != dets.end()) {
      for (const auto& d : it->second) {
        det_by_class[d.label_id].push_back(d);
      }
    }

    for (auto& [label, segments] : gt_by_class) {
      const auto x = static_cast<long>(segments.size());
      total_gt += x;
      auto dit = det_by_class.find(label);
      if (dit == det_by_class.end()) continue;
      auto& cands = dit->second;
      std::sort(cands.begin(), cands.end(),
                [](const Detection& a, const Detection& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.segment.start() != b.segment.start())
                    return a.segment.start() < b.segment.start();
                  return a.segment.end() < b.segment.end();
                });
      const auto top = std::min<std::size_t>(
          cands.size(), static_cast<std::size_t>(k) * static_cast<std::size_t>(x));
      std::vector<bool> used(segments.size(), false);
      for (std::size_t i = 0; i < top; ++i) {
        double best = 0.0;
        std::size_t best_j = 0;
        bool found = false;
        for (std::size_t j = 0; j < segments.size(); ++j) {
          if (used[j]) continue;
          const double o = tiou(cands[i].segment, segments[j]);
          if (!found || o > best) {
            best = o;
            best_j = j;
            found = true;
          }
        }
        if (found && best >= tiou_threshold) {
          used[best_j] = true;
          ++matched;
        }
      }
    }
  }
  return total_gt == 0 ? 0.0
                       : static_cast<double>(matched) /
                             static_cast<double>(total_gt);
}

EvalReport evaluate(const io::DetectionMap& dets, const io::Dataset& dataset,
                    const EvalConfig& cfg) {
  EvalReport report;
  report.tiou_thresholds = cfg.tiou_thresholds;

  for (const auto& video : dataset.videos) {
    for (const auto& inst : video.instances()) {
      ++report.gt_per_class[inst.label_id];
    }
  }
  std::map<int, bool> det_classes;
  for (const auto& [vid, list] : dets) {
    report.detections_used += static_cast<long>(list.size());
    for (const auto& d : list) det_classes[d.label_id] = true;
  }
  for (const auto& [label, seen] : det_classes) {
    if (!report.gt_per_class.count(label)) {
      report.classes_without_gt.push_back(label);
    }
  }

  report.map_per_threshold.assign(cfg.tiou_thresholds.size(), 0.0);
  for (const auto& [label, count] : report.gt_per_class) {
    report.per_class_ap[label] = {};
  }
  for (std::size_t ti = 0; ti < cfg.tiou_thresholds.size(); ++ti) {
    double sum = 0.0;
    for (auto& [label, aps] : report.per_class_ap) {
      const double ap = average_precision(dets, dataset.videos, label,
                                          cfg.tiou_thresholds[ti]);
      aps.push_back(ap);
      sum += ap;
    }
    report.map_per_threshold[ti] =
        report.per_class_ap.empty()
            ? 0.0
            : sum / static_cast<double>(report.per_class_ap.size());
  }
  if (!report.map_per_threshold.empty()) {
    double total = 0.0;
    for (double v : report.map_per_threshold) total += v;
    report.average_map =
        total / static_cast<double>(report.map_per_threshold.size());
  }
  report.recall_at_1x_tiou05 =
      recall_at_kx(dets, dataset.videos, cfg.recall_k, cfg.recall_tiou);
  return report;
}

void write_eval_report(const std::filesystem::path& path,
                       const EvalReport& report) {
  nlohmann::ordered_json j;
  j["tiou_thresholds"] = report.tiou_thresholds;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [label, aps] : report.per_class_ap) {
    per_class[std::to_string(label)] = aps;
  }
  j["per_class_ap"] = std::move(per_class);
  j["mAP"] = report.map_per_threshold;
  j["average_mAP"] = report.average_map;
  j["recall_at_1x_tiou05"] = report.recall_at_1x_tiou05;
  nlohmann::ordered_json counts;
  nlohmann::ordered_json gt = nlohmann::ordered_json::object();
  for (const auto& [label, n] : report.gt_per_class) {
    gt[std::to_string(label)] = n;
  }
  counts["gt_per_class"] = std::move(gt);
  counts["detections_used"] = report.detections_used;
  j["counts"] = std::move(counts);
  j["classes_without_gt"] = report.classes_without_gt;

  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for writing");
  }
  out << j.dump(2) << "\n";
}

std::string format_report_table(const EvalReport& report) {
  std::string s;
  char buf[64];
  s += "tIoU     ";
  for (double t : report.tiou_thresholds) {
    std::snprintf(buf, sizeof(buf), "%8.2f", t);
    s += buf;
  }
  s += "     Avg\n";
  s += "mAP (%)  ";
  for (double v : report.map_per_threshold) {
    std::snprintf(buf, sizeof(buf), "%8.2f", 100.0 * v);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "%8.2f\n", 100.0 * report.average_map);
  s += buf;
  std::snprintf(buf, sizeof(buf), "Recall@1x (tIoU=0.5): %.2f\n",
                100.0 * report.recall_at_1x_tiou05);
  s += buf;
  long gt_total = 0;
  for (const auto& [label, n] : report.gt_per_class) gt_total += n;
  std::snprintf(buf, sizeof(buf), "GT instances: %ld in %zu classes; ",
                gt_total, report.gt_per_class.size());
  s += buf;
  std::snprintf(buf, sizeof(buf), "detections evaluated: %ld\n",
                report.detections_used);
  s += buf;
  return s;
}

}  // namespace talkit::metrics
