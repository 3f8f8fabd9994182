// SPDX-License-Identifier: Apache-2.0
#include "talkit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "talkit/error.hpp"
#include "talkit/rng.hpp"

namespace talkit::fusion {

FeatureSequence::FeatureSequence(std::string name, Mat d, int fpc, int stride,
                                 double frames_per_second)
    : source_name(std::move(name)),
      data(std::move(d)),
      frames_per_clip(fpc),
      clip_stride_frames(stride),
      fps(frames_per_second) {
  if (data.rows() <= 0 || data.cols() <= 0) {
    throw ValidationError("source '" + source_name +
                          "': feature matrix must be nonempty");
  }
  if (frames_per_clip <= 0 || clip_stride_frames <= 0 || !(fps > 0.0)) {
    throw ValidationError("source '" + source_name +
                          "': clip geometry must be positive");
  }
}

double FeatureSequence::center_time(Index i) const {
  return (static_cast<double>(i) * clip_stride_frames +
          frames_per_clip / 2.0) /
         fps;
}

std::int64_t FeatureSequence::center_half_frames(Index i) const {
  return 2 * static_cast<std::int64_t>(i) * clip_stride_frames +
         frames_per_clip;
}

int ProjectionSpec::fused_dim() const {
  int total = 0;
  for (const auto& p : per_source) total += static_cast<int>(p.weight.rows());
  return total;
}

ProjectionSpec make_projection_spec(const std::vector<int>& in_dims,
                                    const std::vector<int>& out_dims,
                                    std::uint64_t seed) {
  if (in_dims.size() != out_dims.size()) {
    throw ValidationError("projection spec needs one out_dim per source");
  }
  Rng rng(seed);
  ProjectionSpec spec;
  for (std::size_t k = 0; k < in_dims.size(); ++k) {
    if (in_dims[k] <= 0 || out_dims[k] <= 0) {
      throw ValidationError("projection dims must be positive");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dims[k]));
    SourceProjection p;
    p.weight.resize(out_dims[k], in_dims[k]);
    for (Index r = 0; r < p.weight.rows(); ++r) {
      for (Index c = 0; c < p.weight.cols(); ++c) {
        p.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
    p.bias = Mat::Zero(1, out_dims[k]);
    spec.per_source.push_back(std::move(p));
  }
  return spec;
}

namespace {

// Index of the source row whose center time is nearest the target, ties to
// the lower index. Centers are strictly increasing, so binary search over
// the exact half-frame centers suffices.
Index nearest_row(const FeatureSequence& src, std::int64_t target_half) {
  const Index n = src.data.rows();
  // First i with center(i) >= target.
  Index lo = 0, hi = n;
  while (lo < hi) {
    const Index mid = lo + (hi - lo) / 2;
    if (src.center_half_frames(mid) < target_half) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  if (lo == 0) return 0;
  if (lo >= n) return n - 1;
  const std::int64_t d_lo = target_half - src.center_half_frames(lo - 1);
  const std::int64_t d_hi = src.center_half_frames(lo) - target_half;
  return (d_lo <= d_hi) ? lo - 1 : lo;  // tie -> lower index
}

}  // namespace

std::vector<FeatureSequence> align_sources(
    const std::vector<FeatureSequence>& sources, const std::string& reference,
    AlignMode mode) {
  if (sources.empty()) throw ValidationError("align_sources: no sources");
  const FeatureSequence* ref = nullptr;
  for (const auto& s : sources) {
    if (s.source_name == reference) ref = &s;
  }
  if (ref == nullptr) {
    throw ValidationError("align_sources: reference source '" + reference +
                          "' not present");
  }
  for (const auto& s : sources) {
    if (s.fps != ref->fps) {
      throw ValidationError("align_sources: source '" + s.source_name +
                            "' fps " + std::to_string(s.fps) +
                            " differs from reference fps " +
                            std::to_string(ref->fps));
    }
  }

  const Index t_ref = ref->data.rows();
  std::vector<FeatureSequence> out;
  out.reserve(sources.size());
  for (const auto& s : sources) {
    Mat resampled(t_ref, s.data.cols());
    for (Index j = 0; j < t_ref; ++j) {
      const std::int64_t target = ref->center_half_frames(j);
      if (mode == AlignMode::kNearest) {
        resampled.row(j) = s.data.row(nearest_row(s, target));
        continue;
      }
      // Linear: interpolate between the bracketing rows, clamped at the ends.
      const Index n = s.data.rows();
      Index hi = 0;
      while (hi < n && s.center_half_frames(hi) < target) ++hi;
      if (hi == 0) {
        resampled.row(j) = s.data.row(0);
      } else if (hi >= n) {
        resampled.row(j) = s.data.row(n - 1);
      } else {
        const double c0 = static_cast<double>(s.center_half_frames(hi - 1));
        const double c1 = static_cast<double>(s.center_half_frames(hi));
        const double w = (static_cast<double>(target) - c0) / (c1 - c0);
        resampled.row(j) = (1.0 - w) * s.data.row(hi - 1) + w * s.data.row(hi);
      }
    }
    // The resampled sequence lives on the reference grid.
    out.emplace_back(s.source_name, std::move(resampled),
                     ref->frames_per_clip, ref->clip_stride_frames, ref->fps);
  }
  return out;
}

namespace {

void check_same_grid(const std::vector<FeatureSequence>& aligned) {
  if (aligned.empty()) throw ValidationError("fusion: no sources");
  for (const auto& s : aligned) {
    if (s.data.rows() != aligned.front().data.rows()) {
      throw ValidationError("fusion: source '" + s.source_name +
                            "' is not on the shared grid (T = " +
                            std::to_string(s.data.rows()) + " vs " +
                            std::to_string(aligned.front().data.rows()) + ")");
    }
  }
}

}  // namespace

Mat fuse_proj_cat(const std::vector<FeatureSequence>& aligned,
                  const ProjectionSpec& spec) {
  check_same_grid(aligned);
  if (spec.per_source.size() != aligned.size()) {
    throw ValidationError("fusion: spec has " +
                          std::to_string(spec.per_source.size()) +
                          " projections for " + std::to_string(aligned.size()) +
                          " sources");
  }
  const Index t = aligned.front().data.rows();
  Mat fused(t, spec.fused_dim());
  Index col = 0;
  for (std::size_t k = 0; k < aligned.size(); ++k) {
    const auto& proj = spec.per_source[k];
    const auto& src = aligned[k];
    if (proj.weight.cols() != src.data.cols()) {
      throw ValidationError("fusion: source '" + src.source_name +
                            "' has dim " + std::to_string(src.data.cols()) +
                            " but projection expects " +
                            std::to_string(proj.weight.cols()));
    }
    const Index out_dim = proj.weight.rows();
    fused.middleCols(col, out_dim).noalias() =
        src.data * proj.weight.transpose();
    fused.middleCols(col, out_dim).rowwise() += proj.bias.row(0);
    col += out_dim;
  }
  return fused;
}

Mat fuse_naive_cat(const std::vector<FeatureSequence>& aligned) {
  check_same_grid(aligned);
  const Index t = aligned.front().data.rows();
  Index width = 0;
  for (const auto& s : aligned) width += s.data.cols();
  Mat fused(t, width);
  Index col = 0;
  for (const auto& s : aligned) {
    fused.middleCols(col, s.data.cols()) = s.data;
    col += s.data.cols();
  }
  return fused;
}

}  // namespace talkit::fusion
