// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "talkit/error.hpp"
#include "talkit/mat.hpp"
#include "talkit/rng.hpp"

namespace talkit::fusion {

/// One feature source: a T x D matrix of clip-level vectors plus the clip
/// geometry that places row i at center time
/// (i * clip_stride_frames + frames_per_clip / 2) / fps seconds.
struct FeatureSequence {
  FeatureSequence(std::string source_name, Mat data, int frames_per_clip,
                  int clip_stride_frames, double fps);

  double center_time(Index i) const;
  // Center time in half-frame units; exact integer arithmetic, used for
  // tie-free nearest-neighbor alignment.
  std::int64_t center_half_frames(Index i) const;

  std::string source_name;
  Mat data;
  int frames_per_clip;
  int clip_stride_frames;
  double fps;
};

/// Per-source affine map. weight is out_dim x in_dim, bias has out_dim
/// entries (stored 1 x out_dim).
struct SourceProjection {
  Mat weight;
  Mat bias;
};

struct ProjectionSpec {
  std::vector<SourceProjection> per_source;
  int fused_dim() const;
};

/// Fan-in scaled uniform init: entries ~ U(-1/sqrt(in_dim), 1/sqrt(in_dim)),
/// zero bias. Keeps fused blocks comparable in magnitude across sources.
ProjectionSpec make_projection_spec(const std::vector<int>& in_dims,
                                    const std::vector<int>& out_dims,
                                    std::uint64_t seed);

enum class AlignMode { kNearest, kLinear };

/// Resamples every source onto the reference source's clip grid. In nearest
/// mode row j of a source is its row whose clip center time is closest to
/// the reference center time of j; exact ties resolve to the lower index.
/// Linear mode interpolates between the two bracketing rows instead.
std::vector<FeatureSequence> align_sources(
    const std::vector<FeatureSequence>& sources, const std::string& reference,
    AlignMode mode = AlignMode::kNearest);

/// Projects each aligned source with its affine map and concatenates the
/// results in declared source order.
Mat fuse_proj_cat(const std::vector<FeatureSequence>& aligned,
                  const ProjectionSpec& spec);

/// Raw concatenation in declared source order.
Mat fuse_naive_cat(const std::vector<FeatureSequence>& aligned);

}  // namespace talkit::fusion
