// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "talkit/mat.hpp"
#include "talkit/rng.hpp"

// Minimal dense layers with explicit forward/backward passes, double
// precision throughout. Layers are stateless w.r.t. activations: every
// forward writes its intermediates into a caller-owned cache so one layer
// instance can be applied at several places (the prediction heads are shared
// across pyramid levels) and still backpropagate correctly.
namespace talkit::nn {

struct ParamRef {
  std::string name;
  Mat* value;
  Mat* grad;
};

// ---------------------------------------------------------------------------
// Elementwise helpers
// ---------------------------------------------------------------------------

Mat relu(const Mat& x);
Mat relu_backward(const Mat& dy, const Mat& x_pre);
Mat softplus(const Mat& x);
Mat softplus_backward(const Mat& dy, const Mat& x_pre);
double sigmoid(double z);
// log(sigmoid(z)) and log(1 - sigmoid(z)), overflow-safe.
double log_sigmoid(double z);
double log_one_minus_sigmoid(double z);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Linear {
  Mat w;  // out x in
  Mat b;  // 1 x out
  Mat gw;
  Mat gb;

  void init(int in_dim, int out_dim, Rng& rng);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat forward(const Mat& x) const;
  // Accumulates gw/gb, returns dx. x is the forward input.
  Mat backward(const Mat& x, const Mat& dy);
};

/// 1-D convolution over time with odd kernel, same padding (zeros).
struct Conv1d {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  Mat w;  // out_ch x (in_ch * kernel), tap-major blocks
  Mat b;  // 1 x out_ch
  Mat gw;
  Mat gb;

  void init(int in_channels, int out_channels, int kernel_size, Rng& rng);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat forward(const Mat& x) const;
  Mat backward(const Mat& x, const Mat& dy);
};

/// Per-channel kernel-3 convolution with stride > 1; the pyramid downsampler.
struct DepthwiseConv1d {
  int channels = 0;
  int stride = 2;
  Mat w;  // 3 x channels
  Mat b;  // 1 x channels
  Mat gw;
  Mat gb;

  void init(int num_channels, int stride_steps, Rng& rng);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat forward(const Mat& x) const;
  Mat backward(const Mat& x, const Mat& dy);
};

struct LayerNorm {
  Mat gamma;  // 1 x dim
  Mat beta;   // 1 x dim
  Mat ggamma;
  Mat gbeta;
  double eps = 1e-5;

  struct Cache {
    Mat xhat;
    Vec inv_std;
  };

  void init(int dim);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache);
};

/// Multi-head self-attention where query t attends to keys in
/// [t - half, t + half], half = (window - 1) / 2, intersected with the valid
/// range. Invalid keys are excluded from the softmax; invalid queries emit
/// zero rows.
struct LocalAttention {
  int dim = 0;
  int heads = 0;
  int window = 0;
  Linear wq, wk, wv, wo;

  struct Cache {
    Mat x;       // attention input (already normalized by the block)
    Mat q, k, v;
    Mat probs;   // T x (heads * window)
    Mat concat;  // T x dim, pre-output-projection
  };

  void init(int model_dim, int num_heads, int window_size, Rng& rng);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat forward(const Mat& x, const Mask& valid, Cache& cache) const;
  Mat backward(const Mat& dy, const Mask& valid, Cache& cache);
};

/// Pre-normalization transformer block:
///   y1 = x + attn(ln1(x));  y = y1 + fc2(relu(fc1(ln2(y1))))
/// with invalid rows forced to zero on exit.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  LocalAttention attn;
  Linear fc1, fc2;  // dim -> 4*dim -> dim

  struct Cache {
    LayerNorm::Cache ln1c, ln2c;
    LocalAttention::Cache attnc;
    Mat x, y1, ffn_in, fc1_pre, fc1_act;
  };

  void init(int dim, int num_heads, int window_size, Rng& rng);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat forward(const Mat& x, const Mask& valid, Cache& cache) const;
  Mat backward(const Mat& dy, const Mask& valid, Cache& cache);
};

/// Stack of same-padding convolutions with ReLU between (none after the
/// last). Invalid rows are zeroed after every conv; the input must already
/// be zero at invalid rows (the convolutions read neighboring time steps).
/// Shared across levels.
struct ConvHead {
  std::vector<Conv1d> convs;

  struct Cache {
    std::vector<Mat> inputs;  // input to each conv
    std::vector<Mat> pre;     // pre-activation of each hidden conv
  };

  void init(int in_dim, int hidden_dim, int out_dim, int num_convs,
            int kernel_size, Rng& rng);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Mat forward(const Mat& x, const Mask& valid, Cache& cache) const;
  Mat backward(const Mat& dy, const Mask& valid, Cache& cache);
};

// Downsamples a mask by keeping every stride-th entry (the anchor row of the
// corresponding output position).
Mask downsample_mask(const Mask& mask, int stride);

}  // namespace talkit::nn
