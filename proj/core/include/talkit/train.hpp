// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "talkit/mat.hpp"
#include "talkit/model.hpp"
#include "talkit/rng.hpp"
#include "talkit/types.hpp"

namespace talkit {

struct TrainConfig {
  int epochs = 15;
  int batch_size = 2;
  double base_lr = 1e-4;
  double warmup_epochs = 5.0;
  double weight_decay = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double center_sampling_radius = 1.5;  // in level strides
  std::uint64_t seed = 1;

  void validate() const;
};

/// Pyramid point layout for one padded sequence: level strides, lengths,
/// validity masks, and the per-level regression ranges (finest-grid steps).
struct PyramidGeometry {
  int num_classes = 0;
  double seconds_per_step = 0.0;
  std::vector<int> strides;
  std::vector<int> lengths;
  std::vector<Mask> valid;
  std::vector<std::pair<double, double>> ranges;

  static PyramidGeometry make(const ModelConfig& cfg, Index valid_steps,
                              double seconds_per_step);
};

struct LevelTargets {
  Mat cls;  // T_l x C, one-vs-rest {0,1}
  Mat reg;  // T_l x 2 (d_start, d_end) in finest-grid steps; valid iff positive
  Mask positive;
};

struct PointTargets {
  std::vector<LevelTargets> levels;
  long num_positive = 0;
  long unassigned_instances = 0;  // instances that won no point anywhere
};

/// A point at center c on level l (stride s) is positive for instance
/// (ts, te), both in finest-grid steps, iff
///   (a) |c - (ts+te)/2| <= radius * s,
///   (b) ts < c < te, and
///   (c) max(c - ts, te - c) lies in level l's regression range.
/// Among matching instances the shortest wins; equal lengths keep the
/// earlier instance. Instances that win no point are counted, not dropped.
PointTargets assign_targets(const VideoRecord& video,
                            const PyramidGeometry& geom,
                            double center_sampling_radius);

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  long num_positive = 0;
};

/// Sigmoid focal loss over all valid points and classes plus 1-D IoU loss
/// over positive points, each normalized by max(1, #positives). Fills
/// `grads` with dL/d(logits) and dL/d(offsets) when given.
LossBreakdown detection_loss(const PyramidOutput& out, const PointTargets& tg,
                             const TrainConfig& cfg,
                             PyramidGrads* grads = nullptr);

/// Linear warmup from 0 to base_lr, then cosine annealing to 0. Warmup
/// length is warmup_epochs converted to steps.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

/// Decoupled weight decay Adam. Decay skips biases and norm parameters.
class AdamW {
 public:
  AdamW(std::vector<nn::ParamRef> params, const TrainConfig& cfg);
  void step(double lr);

 private:
  std::vector<nn::ParamRef> params_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  std::vector<bool> decay_;
  double beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
};

struct TrainSample {
  VideoRecord record;
  std::vector<Mat> sources;  // aligned to the reference grid, unpadded
};

/// Training-time crop: when the sample is longer than max_seq_len steps,
/// takes a random max_seq_len window containing at least one instance and
/// re-clips the instances to it. Shorter samples pass through unchanged.
TrainSample crop_sample(const TrainSample& sample, int max_seq_len,
                        double seconds_per_step, Rng& rng);

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: keep checkpoints off disk
  std::filesystem::path log_path;        // empty: no JSONL log
};

struct TrainReport {
  std::vector<double> step_losses;
  std::vector<std::filesystem::path> checkpoints;  // one per epoch
};

TrainReport train_model(Localizer& model, const std::vector<TrainSample>& data,
                        const TrainConfig& cfg, double seconds_per_step,
                        const TrainOptions& opts = {});

}  // namespace talkit
