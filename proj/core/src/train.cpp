// SPDX-License-Identifier: Apache-2.0
#include "talkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "talkit/error.hpp"
#include "json_util.hpp"

namespace talkit {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (!(base_lr > 0.0)) throw ValidationError("train.base_lr must be > 0");
  if (warmup_epochs < 0.0 || warmup_epochs >= static_cast<double>(epochs)) {
    throw ValidationError("train.warmup_epochs must lie in [0, epochs)");
  }
  if (weight_decay < 0.0) {
    throw ValidationError("train.weight_decay must be >= 0");
  }
  if (!(focal_gamma >= 0.0) || !(focal_alpha > 0.0) || !(focal_alpha < 1.0)) {
    throw ValidationError("train.focal parameters out of range");
  }
  if (!(center_sampling_radius > 0.0)) {
    throw ValidationError("train.center_sampling_radius must be > 0");
  }
}

// ---------------------------------------------------------------------------
// Geometry and target assignment
// ---------------------------------------------------------------------------

PyramidGeometry PyramidGeometry::make(const ModelConfig& cfg,
                                      Index valid_steps,
                                      double seconds_per_step) {
  if (!(seconds_per_step > 0.0)) {
    throw ValidationError("seconds_per_step must be > 0");
  }
  PyramidGeometry g;
  g.num_classes = cfg.num_classes;
  g.seconds_per_step = seconds_per_step;
  g.ranges = cfg.effective_ranges();
  Mask mask(static_cast<std::size_t>(cfg.max_seq_len), 0);
  for (Index t = 0; t < std::min<Index>(valid_steps, cfg.max_seq_len); ++t) {
    mask[static_cast<std::size_t>(t)] = 1;
  }
  for (int l = 0; l < cfg.num_levels; ++l) {
    g.strides.push_back(cfg.level_stride(l));
    g.lengths.push_back(cfg.level_length(l));
    g.valid.push_back(mask);
    mask = nn::downsample_mask(mask, cfg.downsample_stride);
  }
  return g;
}

PointTargets assign_targets(const VideoRecord& video,
                            const PyramidGeometry& geom, double radius) {
  const int levels = static_cast<int>(geom.strides.size());
  const int num_classes = geom.num_classes;
  PointTargets out;
  out.levels.resize(static_cast<std::size_t>(levels));
  std::vector<std::vector<double>> best_len(
      static_cast<std::size_t>(levels));
  std::vector<std::vector<int>> best_inst(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    out.levels[li].cls = Mat::Zero(geom.lengths[li], num_classes);
    out.levels[li].reg = Mat::Zero(geom.lengths[li], 2);
    out.levels[li].positive.assign(
        static_cast<std::size_t>(geom.lengths[li]), 0);
    best_len[li].assign(static_cast<std::size_t>(geom.lengths[li]),
                        std::numeric_limits<double>::infinity());
    best_inst[li].assign(static_cast<std::size_t>(geom.lengths[li]), -1);
  }

  const auto& insts = video.instances();
  std::vector<bool> won(insts.size(), false);
  for (std::size_t k = 0; k < insts.size(); ++k) {
    const double ts = insts[k].segment.start() / geom.seconds_per_step;
    const double te = insts[k].segment.end() / geom.seconds_per_step;
    const double len = te - ts;
    const double mid = 0.5 * (ts + te);
    for (int l = 0; l < levels; ++l) {
      const auto li = static_cast<std::size_t>(l);
      const double s = static_cast<double>(geom.strides[li]);
      const auto [range_lo, range_hi] = geom.ranges[li];
      // Candidate window from the center-sampling condition, padded by one
      // index on each side; every point is re-checked exactly below.
      auto i_lo = static_cast<long>(std::floor((mid - radius * s) / s)) - 1;
      auto i_hi = static_cast<long>(std::ceil((mid + radius * s) / s)) + 1;
      i_lo = std::max<long>(i_lo, 0);
      i_hi = std::min<long>(i_hi, geom.lengths[li] - 1);
      for (long i = i_lo; i <= i_hi; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        if (!geom.valid[li][ii]) continue;
        const double c = static_cast<double>(i) * s;
        if (!(std::abs(c - mid) <= radius * s)) continue;
        if (!(c > ts && c < te)) continue;
        const double dmax = std::max(c - ts, te - c);
        if (!(dmax >= range_lo && dmax < range_hi)) continue;
        if (len < best_len[li][ii]) {
          best_len[li][ii] = len;
          best_inst[li][ii] = static_cast<int>(k);
        }
      }
    }
  }

  for (int l = 0; l < levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const double s = static_cast<double>(geom.strides[li]);
    for (long i = 0; i < geom.lengths[li]; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      const int k = best_inst[li][ii];
      if (k < 0) continue;
      const auto& inst = insts[static_cast<std::size_t>(k)];
      const double ts = inst.segment.start() / geom.seconds_per_step;
      const double te = inst.segment.end() / geom.seconds_per_step;
      const double c = static_cast<double>(i) * s;
      out.levels[li].positive[ii] = 1;
      out.levels[li].cls(i, inst.label_id) = 1.0;
      out.levels[li].reg(i, 0) = c - ts;
      out.levels[li].reg(i, 1) = te - c;
      ++out.num_positive;
      won[static_cast<std::size_t>(k)] = true;
    }
  }
  for (bool w : won) {
    if (!w) ++out.unassigned_instances;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

LossBreakdown detection_loss(const PyramidOutput& out, const PointTargets& tg,
                             const TrainConfig& cfg, PyramidGrads* grads) {
  if (out.levels.size() != tg.levels.size()) {
    throw ValidationError("loss: pyramid and targets disagree on level count");
  }
  long valid_total = 0;
  for (const auto& lvl : out.levels) valid_total += count_valid(lvl.valid);
  if (valid_total == 0) {
    throw TrainingError("loss over an empty batch: no valid points");
  }

  LossBreakdown lb;
  lb.num_positive = tg.num_positive;
  const double norm = static_cast<double>(std::max<long>(1, tg.num_positive));
  const double alpha = cfg.focal_alpha;
  const double gamma = cfg.focal_gamma;

  if (grads) {
    grads->resize(out.levels.size());
    for (std::size_t l = 0; l < out.levels.size(); ++l) {
      (*grads)[l].d_cls = Mat::Zero(out.levels[l].cls_logits.rows(),
                                    out.levels[l].cls_logits.cols());
      (*grads)[l].d_offsets = Mat::Zero(out.levels[l].offsets.rows(), 2);
    }
  }

  double cls_sum = 0.0;
  double reg_sum = 0.0;
  for (std::size_t l = 0; l < out.levels.size(); ++l) {
    const auto& lvl = out.levels[l];
    const auto& tgt = tg.levels[l];
    if (lvl.cls_logits.rows() != tgt.cls.rows() ||
        lvl.cls_logits.cols() != tgt.cls.cols()) {
      throw ValidationError("loss: target shape mismatch at level " +
                            std::to_string(l));
    }
    for (Index t = 0; t < lvl.cls_logits.rows(); ++t) {
      if (!lvl.valid[static_cast<std::size_t>(t)]) continue;
      for (Index c = 0; c < lvl.cls_logits.cols(); ++c) {
        const double z = lvl.cls_logits(t, c);
        const double p = nn::sigmoid(z);
        const double u = nn::sigmoid(-z);
        double term, dz;
        if (tgt.cls(t, c) > 0.5) {
          const double logp = nn::log_sigmoid(z);
          const double ug = std::pow(u, gamma);
          term = -alpha * ug * logp;
          dz = alpha * gamma * p * ug * logp - alpha * ug * u;
        } else {
          const double logu = nn::log_one_minus_sigmoid(z);
          const double pg = std::pow(p, gamma);
          term = -(1.0 - alpha) * pg * logu;
          dz = (1.0 - alpha) * pg * (p - gamma * u * logu);
        }
        cls_sum += term;
        if (grads) (*grads)[l].d_cls(t, c) = dz / norm;
      }

      if (tgt.positive[static_cast<std::size_t>(t)]) {
        const double s = static_cast<double>(lvl.stride);
        const double a = lvl.offsets(t, 0) * s;
        const double b = lvl.offsets(t, 1) * s;
        const double ta = tgt.reg(t, 0);
        const double tb = tgt.reg(t, 1);
        const double inter = std::min(a, ta) + std::min(b, tb);
        const double uni = std::max(a, ta) + std::max(b, tb);
        const double iou = inter / uni;
        reg_sum += 1.0 - iou;
        if (grads) {
          const double inv_u = 1.0 / uni;
          const double d_iou_dI = inv_u;
          const double d_iou_dU = -inter * inv_u * inv_u;
          const double da =
              (a < ta ? d_iou_dI : 0.0) + (a > ta ? d_iou_dU : 0.0);
          const double db =
              (b < tb ? d_iou_dI : 0.0) + (b > tb ? d_iou_dU : 0.0);
          (*grads)[l].d_offsets(t, 0) = -da * s / norm;
          (*grads)[l].d_offsets(t, 1) = -db * s / norm;
        }
      }
    }
  }
  lb.cls = cls_sum / norm;
  lb.reg = reg_sum / norm;
  lb.total = lb.cls + lb.reg;
  return lb;
}

// ---------------------------------------------------------------------------
// Schedule and optimizer
// ---------------------------------------------------------------------------

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0) throw ValidationError("total_steps must be positive");
  if (step < 0 || step >= total_steps) {
    throw ValidationError("lr_at: step " + std::to_string(step) +
                          " outside [0, " + std::to_string(total_steps) + ")");
  }
  const long warmup_steps = std::llround(
      static_cast<double>(total_steps) * cfg.warmup_epochs /
      static_cast<double>(cfg.epochs));
  if (step < warmup_steps) {
    return cfg.base_lr * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  }
  const long denom = total_steps - warmup_steps;
  const double progress =
      denom > 0 ? static_cast<double>(step - warmup_steps) /
                      static_cast<double>(denom)
                : 0.0;
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<nn::ParamRef> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  decay_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    const bool is_bias = p.name.ends_with(".b") ||
                         p.name.ends_with(".gamma") ||
                         p.name.ends_with(".beta");
    decay_.push_back(!is_bias);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Mat& w = *params_[i].value;
    const Mat& g = *params_[i].grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    if (decay_[i] && weight_decay_ > 0.0) {
      w -= lr * weight_decay_ * w;
    }
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    w.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

std::pair<std::vector<Mat>, Mask> pad_to_max(const std::vector<Mat>& sources,
                                             int max_seq_len) {
  if (sources.empty()) throw ValidationError("pad_to_max: no sources");
  const Index t = sources.front().rows();
  for (const auto& s : sources) {
    if (s.rows() != t) {
      throw ValidationError("pad_to_max: sources disagree on T");
    }
  }
  if (t > max_seq_len) {
    throw ValidationError("sequence length " + std::to_string(t) +
                          " exceeds max_seq_len " +
                          std::to_string(max_seq_len));
  }
  std::vector<Mat> padded;
  padded.reserve(sources.size());
  for (const auto& s : sources) {
    Mat p = Mat::Zero(max_seq_len, s.cols());
    p.topRows(t) = s;
    padded.push_back(std::move(p));
  }
  Mask mask(static_cast<std::size_t>(max_seq_len), 0);
  for (Index i = 0; i < t; ++i) mask[static_cast<std::size_t>(i)] = 1;
  return {std::move(padded), std::move(mask)};
}

TrainSample crop_sample(const TrainSample& sample, int max_seq_len,
                        double seconds_per_step, Rng& rng) {
  const Index t = sample.sources.front().rows();
  if (t <= max_seq_len) return sample;

  const Index max_start = t - max_seq_len;
  const double window_sec = max_seq_len * seconds_per_step;
  const auto& insts = sample.record.instances();

  auto window_instances = [&](Index start) {
    const double start_sec = static_cast<double>(start) * seconds_per_step;
    const double duration =
        std::min(window_sec, sample.record.duration() - start_sec);
    std::vector<ActionInstance> kept;
    for (const auto& inst : insts) {
      const Segment shifted(inst.segment.start() - start_sec,
                            inst.segment.end() - start_sec);
      if (auto clipped = clip_segment(shifted, duration)) {
        kept.emplace_back(inst.label_id, *clipped);
      }
    }
    return std::make_pair(duration, std::move(kept));
  };

  Index start = 0;
  std::vector<ActionInstance> kept;
  double duration = 0.0;
  for (int attempt = 0; attempt < 32; ++attempt) {
    start = static_cast<Index>(rng.uniform_int(0, max_start));
    std::tie(duration, kept) = window_instances(start);
    if (!kept.empty() || insts.empty()) break;
  }
  if (kept.empty() && !insts.empty()) {
    // Center the window on a random instance.
    const auto& inst =
        insts[static_cast<std::size_t>(rng.uniform_int(
            0, static_cast<std::int64_t>(insts.size()) - 1))];
    const double mid =
        0.5 * (inst.segment.start() + inst.segment.end()) / seconds_per_step;
    start = static_cast<Index>(std::llround(mid)) - max_seq_len / 2;
    start = std::clamp<Index>(start, 0, max_start);
    std::tie(duration, kept) = window_instances(start);
  }

  TrainSample cropped{
      VideoRecord(sample.record.video_id(), duration, std::move(kept)), {}};
  cropped.sources.reserve(sample.sources.size());
  for (const auto& s : sample.sources) {
    cropped.sources.push_back(s.middleRows(start, max_seq_len));
  }
  return cropped;
}

TrainReport train_model(Localizer& model, const std::vector<TrainSample>& data,
                        const TrainConfig& cfg, double seconds_per_step,
                        const TrainOptions& opts) {
  cfg.validate();
  if (data.empty()) throw TrainingError("training dataset is empty");

  const auto& mcfg = model.config();
  const long n = static_cast<long>(data.size());
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = steps_per_epoch * cfg.epochs;

  AdamW opt(model.params(), cfg);
  Rng rng(derive_seed(cfg.seed, 0x747261696eULL));

  std::ofstream log;
  if (!opts.log_path.empty()) {
    log.open(opts.log_path, std::ios::trunc);
    if (!log) {
      throw std::runtime_error("cannot open training log '" +
                               opts.log_path.string() + "'");
    }
  }
  if (!opts.checkpoint_dir.empty()) {
    std::filesystem::create_directories(opts.checkpoint_dir);
  }

  TrainReport report;
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (long b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const long b1 = std::min<long>(n, b0 + cfg.batch_size);
      const double lr = lr_at(step, total_steps, cfg);
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      model.zero_grad();

      double loss = 0.0, cls = 0.0, reg = 0.0;
      for (long bi = b0; bi < b1; ++bi) {
        const TrainSample s = crop_sample(
            data[static_cast<std::size_t>(order[static_cast<std::size_t>(bi)])],
            mcfg.max_seq_len, seconds_per_step, rng);
        auto [padded, mask] = pad_to_max(s.sources, mcfg.max_seq_len);
        Localizer::Activations acts;
        const PyramidOutput out = model.forward(padded, mask, &acts);
        const auto geom = PyramidGeometry::make(
            mcfg, s.sources.front().rows(), seconds_per_step);
        const PointTargets targets =
            assign_targets(s.record, geom, cfg.center_sampling_radius);
        PyramidGrads grads;
        const LossBreakdown lb = detection_loss(out, targets, cfg, &grads);
        for (auto& g : grads) {
          g.d_cls *= scale;
          g.d_offsets *= scale;
        }
        model.backward(grads, acts);
        loss += lb.total * scale;
        cls += lb.cls * scale;
        reg += lb.reg * scale;
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) +
                            " (epoch " + std::to_string(epoch) + ")");
      }
      opt.step(lr);
      report.step_losses.push_back(loss);
      if (log.is_open()) {
        detail::json line;
        line["step"] = step;
        line["epoch"] = epoch;
        line["lr"] = lr;
        line["loss"] = loss;
        line["cls_loss"] = cls;
        line["reg_loss"] = reg;
        log << line.dump() << "\n";
      }
      ++step;
    }
    if (!opts.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch + 1);
      const auto path = opts.checkpoint_dir / name;
      save_checkpoint(path, model, epoch + 1);
      report.checkpoints.push_back(path);
    }
  }
  return report;
}

}  // namespace talkit
