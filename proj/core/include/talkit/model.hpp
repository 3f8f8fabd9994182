// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "talkit/mat.hpp"
#include "talkit/nn.hpp"

namespace talkit {

enum class FusionMode { kCat, kProjCat };
enum class DownsampleMode { kConv, kMaxPool };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

/// How the per-source inputs become the localizer's fused input row.
struct FusionPlan {
  FusionMode mode = FusionMode::kProjCat;
  std::vector<int> source_dims;
  std::vector<int> projection_dims;  // used when mode == kProjCat

  int input_width() const;
  void validate() const;
};

struct ModelConfig {
  int num_classes = 110;
  int max_seq_len = 1024;
  int num_levels = 6;
  int embed_dim = 1024;
  int num_heads = 16;
  int attention_window = 19;
  int downsample_stride = 2;
  DownsampleMode downsample_mode = DownsampleMode::kConv;
  int num_embed_convs = 2;
  int num_head_convs = 3;
  int head_kernel = 3;
  // Per-level [lo, hi) bounds on max(d_start, d_end) in finest-grid steps;
  // empty selects the defaults below.
  std::vector<std::pair<double, double>> regression_ranges;

  void validate() const;
  int level_stride(int level) const;
  int level_length(int level) const;
  // Default: [0,4), [4,8), [8,16), ... doubling with the strides, last
  // level unbounded.
  std::vector<std::pair<double, double>> effective_ranges() const;
};

/// Per-level localizer outputs. `offsets` holds the regression head's raw
/// nonnegative (d_start, d_end) in units of that level's stride; decoding
/// multiplies by the stride to reach finest-grid steps.
struct LevelOutput {
  int stride = 1;
  Mat cls_logits;  // T_l x C
  Mat offsets;     // T_l x 2
  Mask valid;
};

struct PyramidOutput {
  std::vector<LevelOutput> levels;
};

struct LevelGrads {
  Mat d_cls;      // dL/d cls_logits
  Mat d_offsets;  // dL/d offsets (post-softplus)
};
using PyramidGrads = std::vector<LevelGrads>;

/// The anchor-free localizer: per-source projection (Proj+Cat mode),
/// convolutional embedding, a local-attention transformer pyramid, and
/// classification/regression heads shared across levels.
class Localizer {
 public:
  Localizer(ModelConfig cfg, FusionPlan fusion, std::uint64_t seed);

  struct Activations {
    std::vector<Mat> sources;  // padded inputs, kept for projection backward
    Mat fused;
    Mat embed_in;  // fused with padded rows zeroed
    nn::ConvHead::Cache embed;
    std::vector<nn::TransformerBlock::Cache> blocks;
    std::vector<Mat> down_in;
    std::vector<Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic,
                              Eigen::RowMajor>>
        pool_arg;
    std::vector<Mat> level_feats;
    std::vector<Mask> level_masks;
    std::vector<nn::ConvHead::Cache> cls_heads, reg_heads;
    std::vector<Mat> reg_pre;  // pre-softplus regression outputs
  };

  /// sources[k] must be padded to max_seq_len rows; mask marks real steps.
  PyramidOutput forward(const std::vector<Mat>& sources, const Mask& mask,
                        Activations* acts = nullptr) const;
  /// Accumulates parameter gradients for the forward pass recorded in acts.
  void backward(const PyramidGrads& grads, Activations& acts);

  // Stage entry points (forward-only, self-contained caches).
  Mat fuse_sources(const std::vector<Mat>& sources) const;
  Mat run_embed(const Mat& fused, const Mask& mask) const;
  std::vector<Mat> run_pyramid(const Mat& embedded, const Mask& mask,
                               std::vector<Mask>* level_masks = nullptr) const;
  PyramidOutput run_heads(const std::vector<Mat>& feats,
                          const std::vector<Mask>& masks) const;

  /// Stable, documented parameter order; also the checkpoint tensor order.
  std::vector<nn::ParamRef> params();
  void zero_grad();

  const ModelConfig& config() const { return cfg_; }
  const FusionPlan& fusion_plan() const { return fusion_; }
  std::uint64_t init_seed() const { return seed_; }

 private:
  Mat downsample_forward(int transition, const Mat& x, Activations& acts) const;
  Mat downsample_backward(int transition, const Mat& dy, Activations& acts);

  ModelConfig cfg_;
  FusionPlan fusion_;
  std::uint64_t seed_;
  std::vector<nn::Linear> projections_;
  nn::ConvHead embed_;
  std::vector<nn::TransformerBlock> blocks_;
  std::vector<nn::DepthwiseConv1d> downs_;
  nn::ConvHead cls_head_;
  nn::ConvHead reg_head_;
};

/// Zero-pads every source to max_seq_len rows and returns the validity mask.
/// Sequences longer than max_seq_len are an error; training crops first.
std::pair<std::vector<Mat>, Mask> pad_to_max(const std::vector<Mat>& sources,
                                             int max_seq_len);

// ---------------------------------------------------------------------------
// Checkpoints: 8-byte little-endian JSON length, JSON metadata (format tag,
// epoch, seed, model + fusion configs, tensor index with byte offsets), then
// one feature-file blob per parameter tensor in params() order.
// ---------------------------------------------------------------------------

struct Checkpoint {
  Localizer model;
  int epoch = 0;
  std::uint64_t seed = 0;
};

/// Atomic: writes to a temp file and renames into place.
void save_checkpoint(const std::filesystem::path& path, Localizer& model,
                     int epoch);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace talkit
