// SPDX-License-Identifier: Apache-2.0
#include "talkit/nn.hpp"

#include <algorithm>
#include <cmath>

#include "talkit/error.hpp"

namespace talkit::nn {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

Mat relu_backward(const Mat& dy, const Mat& x_pre) {
  return (x_pre.array() > 0.0).select(dy, Mat::Zero(dy.rows(), dy.cols()));
}

Mat softplus(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) {
      const double v = x(r, c);
      y(r, c) = v > 30.0 ? v : std::log1p(std::exp(v));
    }
  }
  return y;
}

Mat softplus_backward(const Mat& dy, const Mat& x_pre) {
  Mat dx(dy.rows(), dy.cols());
  for (Index r = 0; r < dy.rows(); ++r) {
    for (Index c = 0; c < dy.cols(); ++c) {
      dx(r, c) = dy(r, c) * sigmoid(x_pre(r, c));
    }
  }
  return dx;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  // -softplus(-z)
  return z > 30.0 ? 0.0 : (z < -30.0 ? z : -std::log1p(std::exp(-z)));
}

double log_one_minus_sigmoid(double z) { return log_sigmoid(-z); }

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

void Linear::init(int in_dim, int out_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  w.resize(out_dim, in_dim);
  for (Index r = 0; r < w.rows(); ++r) {
    for (Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
  }
  b = Mat::Zero(1, out_dim);
  zero_grad();
}

void Linear::zero_grad() {
  gw = Mat::Zero(w.rows(), w.cols());
  gb = Mat::Zero(1, b.cols());
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w, &gw});
  out.push_back({prefix + ".b", &b, &gb});
}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  gw.noalias() += dy.transpose() * x;
  gb += dy.colwise().sum();
  return dy * w;
}

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------

void Conv1d::init(int in_channels, int out_channels, int kernel_size,
                  Rng& rng) {
  if (kernel_size % 2 == 0) {
    throw ValidationError("Conv1d kernel must be odd");
  }
  in_ch = in_channels;
  out_ch = out_channels;
  kernel = kernel_size;
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel));
  w.resize(out_ch, in_ch * kernel);
  for (Index r = 0; r < w.rows(); ++r) {
    for (Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
  }
  b = Mat::Zero(1, out_ch);
  zero_grad();
}

void Conv1d::zero_grad() {
  gw = Mat::Zero(w.rows(), w.cols());
  gb = Mat::Zero(1, b.cols());
}

void Conv1d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w, &gw});
  out.push_back({prefix + ".b", &b, &gb});
}

Mat Conv1d::forward(const Mat& x) const {
  const Index t = x.rows();
  Mat y = b.replicate(t, 1);
  const int half = (kernel - 1) / 2;
  for (int j = 0; j < kernel; ++j) {
    const int off = j - half;
    const Index t0 = std::max<Index>(0, -off);
    const Index t1 = std::min<Index>(t, t - off);
    if (t1 <= t0) continue;
    const Index n = t1 - t0;
    y.middleRows(t0, n).noalias() +=
        x.middleRows(t0 + off, n) *
        w.middleCols(static_cast<Index>(j) * in_ch, in_ch).transpose();
  }
  return y;
}

Mat Conv1d::backward(const Mat& x, const Mat& dy) {
  const Index t = x.rows();
  Mat dx = Mat::Zero(t, in_ch);
  gb += dy.colwise().sum();
  const int half = (kernel - 1) / 2;
  for (int j = 0; j < kernel; ++j) {
    const int off = j - half;
    const Index t0 = std::max<Index>(0, -off);
    const Index t1 = std::min<Index>(t, t - off);
    if (t1 <= t0) continue;
    const Index n = t1 - t0;
    gw.middleCols(static_cast<Index>(j) * in_ch, in_ch).noalias() +=
        dy.middleRows(t0, n).transpose() * x.middleRows(t0 + off, n);
    dx.middleRows(t0 + off, n).noalias() +=
        dy.middleRows(t0, n) *
        w.middleCols(static_cast<Index>(j) * in_ch, in_ch);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// DepthwiseConv1d
// ---------------------------------------------------------------------------

void DepthwiseConv1d::init(int num_channels, int stride_steps, Rng& rng) {
  channels = num_channels;
  stride = stride_steps;
  if (stride < 2) throw ValidationError("downsampler stride must be >= 2");
  const double bound = 1.0 / std::sqrt(3.0);
  w.resize(3, channels);
  for (Index r = 0; r < 3; ++r) {
    for (Index c = 0; c < channels; ++c) w(r, c) = rng.uniform(-bound, bound);
  }
  b = Mat::Zero(1, channels);
  zero_grad();
}

void DepthwiseConv1d::zero_grad() {
  gw = Mat::Zero(3, channels);
  gb = Mat::Zero(1, channels);
}

void DepthwiseConv1d::collect(const std::string& prefix,
                              std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w, &gw});
  out.push_back({prefix + ".b", &b, &gb});
}

Mat DepthwiseConv1d::forward(const Mat& x) const {
  const Index t = x.rows();
  if (t % stride != 0) {
    throw ValidationError("downsampler input length must be divisible by "
                          "the stride");
  }
  const Index to = t / stride;
  Mat y = b.replicate(to, 1);
  for (Index i = 0; i < to; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Index src = i * stride + j - 1;
      if (src < 0 || src >= t) continue;
      y.row(i) += x.row(src).cwiseProduct(w.row(j));
    }
  }
  return y;
}

Mat DepthwiseConv1d::backward(const Mat& x, const Mat& dy) {
  const Index t = x.rows();
  const Index to = dy.rows();
  Mat dx = Mat::Zero(t, channels);
  gb += dy.colwise().sum();
  for (Index i = 0; i < to; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Index src = i * stride + j - 1;
      if (src < 0 || src >= t) continue;
      gw.row(j) += dy.row(i).cwiseProduct(x.row(src));
      dx.row(src) += dy.row(i).cwiseProduct(w.row(j));
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

void LayerNorm::init(int dim) {
  gamma = Mat::Ones(1, dim);
  beta = Mat::Zero(1, dim);
  zero_grad();
}

void LayerNorm::zero_grad() {
  ggamma = Mat::Zero(1, gamma.cols());
  gbeta = Mat::Zero(1, beta.cols());
}

void LayerNorm::collect(const std::string& prefix,
                        std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &ggamma});
  out.push_back({prefix + ".beta", &beta, &gbeta});
}

Mat LayerNorm::forward(const Mat& x, Cache& cache) const {
  const Index t = x.rows();
  const Index d = x.cols();
  cache.xhat.resize(t, d);
  cache.inv_std.resize(t);
  Mat y(t, d);
  for (Index r = 0; r < t; ++r) {
    const double mu = x.row(r).mean();
    const Eigen::RowVectorXd centered = x.row(r).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std(r) = inv;
    cache.xhat.row(r) = centered * inv;
    y.row(r) =
        cache.xhat.row(r).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const Cache& cache) {
  const Index t = dy.rows();
  const Index d = dy.cols();
  Mat dx(t, d);
  for (Index r = 0; r < t; ++r) {
    const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(gamma.row(0));
    const double sum_dxhat = dxhat.sum();
    const double sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(r)).sum();
    dx.row(r) = cache.inv_std(r) / static_cast<double>(d) *
                (static_cast<double>(d) * dxhat.array() - sum_dxhat -
                 cache.xhat.row(r).array() * sum_dxhat_xhat);
    ggamma += dy.row(r).cwiseProduct(cache.xhat.row(r));
    gbeta += dy.row(r);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// LocalAttention
// ---------------------------------------------------------------------------

void LocalAttention::init(int model_dim, int num_heads, int window_size,
                          Rng& rng) {
  dim = model_dim;
  heads = num_heads;
  window = window_size;
  if (dim % heads != 0) {
    throw ValidationError("attention dim must be divisible by heads");
  }
  if (window % 2 == 0) throw ValidationError("attention window must be odd");
  wq.init(dim, dim, rng);
  wk.init(dim, dim, rng);
  wv.init(dim, dim, rng);
  wo.init(dim, dim, rng);
}

void LocalAttention::zero_grad() {
  wq.zero_grad();
  wk.zero_grad();
  wv.zero_grad();
  wo.zero_grad();
}

void LocalAttention::collect(const std::string& prefix,
                             std::vector<ParamRef>& out) {
  wq.collect(prefix + ".wq", out);
  wk.collect(prefix + ".wk", out);
  wv.collect(prefix + ".wv", out);
  wo.collect(prefix + ".wo", out);
}

Mat LocalAttention::forward(const Mat& x, const Mask& valid,
                            Cache& cache) const {
  const Index t = x.rows();
  const int hd = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const int half = (window - 1) / 2;

  cache.x = x;
  cache.q = wq.forward(x);
  cache.k = wk.forward(x);
  cache.v = wv.forward(x);
  cache.probs = Mat::Zero(t, static_cast<Index>(heads) * window);
  cache.concat = Mat::Zero(t, dim);

  std::vector<double> scores(static_cast<std::size_t>(window));
  for (Index q = 0; q < t; ++q) {
    if (!valid[static_cast<std::size_t>(q)]) continue;
    const Index u0 = std::max<Index>(0, q - half);
    const Index u1 = std::min<Index>(t - 1, q + half);
    for (int h = 0; h < heads; ++h) {
      const Index hc = static_cast<Index>(h) * hd;
      double max_score = -std::numeric_limits<double>::infinity();
      for (Index u = u0; u <= u1; ++u) {
        double s = -std::numeric_limits<double>::infinity();
        if (valid[static_cast<std::size_t>(u)]) {
          s = scale * cache.q.row(q).segment(hc, hd).dot(
                          cache.k.row(u).segment(hc, hd));
        }
        scores[static_cast<std::size_t>(u - u0)] = s;
        max_score = std::max(max_score, s);
      }
      double denom = 0.0;
      for (Index u = u0; u <= u1; ++u) {
        double& s = scores[static_cast<std::size_t>(u - u0)];
        s = std::isinf(s) ? 0.0 : std::exp(s - max_score);
        denom += s;
      }
      auto out_seg = cache.concat.row(q).segment(hc, hd);
      for (Index u = u0; u <= u1; ++u) {
        const double p = scores[static_cast<std::size_t>(u - u0)] / denom;
        if (p == 0.0) continue;
        cache.probs(q, static_cast<Index>(h) * window + (u - q + half)) = p;
        out_seg += p * cache.v.row(u).segment(hc, hd);
      }
    }
  }
  Mat y = wo.forward(cache.concat);
  zero_invalid_rows(y, valid);
  return y;
}

Mat LocalAttention::backward(const Mat& dy_in, const Mask& valid,
                             Cache& cache) {
  const Index t = cache.x.rows();
  const int hd = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const int half = (window - 1) / 2;

  Mat dy = dy_in;
  zero_invalid_rows(dy, valid);
  Mat dconcat = wo.backward(cache.concat, dy);

  Mat dq = Mat::Zero(t, dim);
  Mat dk = Mat::Zero(t, dim);
  Mat dv = Mat::Zero(t, dim);

  std::vector<double> dp(static_cast<std::size_t>(window));
  for (Index q = 0; q < t; ++q) {
    if (!valid[static_cast<std::size_t>(q)]) continue;
    const Index u0 = std::max<Index>(0, q - half);
    const Index u1 = std::min<Index>(t - 1, q + half);
    for (int h = 0; h < heads; ++h) {
      const Index hc = static_cast<Index>(h) * hd;
      const auto dout = dconcat.row(q).segment(hc, hd);
      // dv and dp over the window, then softmax backward.
      double dot_p_dp = 0.0;
      for (Index u = u0; u <= u1; ++u) {
        const double p =
            cache.probs(q, static_cast<Index>(h) * window + (u - q + half));
        const double g = dout.dot(cache.v.row(u).segment(hc, hd));
        dp[static_cast<std::size_t>(u - u0)] = g;
        dot_p_dp += p * g;
        if (p != 0.0) dv.row(u).segment(hc, hd) += p * dout;
      }
      for (Index u = u0; u <= u1; ++u) {
        const double p =
            cache.probs(q, static_cast<Index>(h) * window + (u - q + half));
        if (p == 0.0) continue;
        const double ds =
            p * (dp[static_cast<std::size_t>(u - u0)] - dot_p_dp) * scale;
        dq.row(q).segment(hc, hd) += ds * cache.k.row(u).segment(hc, hd);
        dk.row(u).segment(hc, hd) += ds * cache.q.row(q).segment(hc, hd);
      }
    }
  }

  Mat dx = wq.backward(cache.x, dq);
  dx += wk.backward(cache.x, dk);
  dx += wv.backward(cache.x, dv);
  return dx;
}

// ---------------------------------------------------------------------------
// TransformerBlock
// ---------------------------------------------------------------------------

void TransformerBlock::init(int dim, int num_heads, int window_size,
                            Rng& rng) {
  ln1.init(dim);
  ln2.init(dim);
  attn.init(dim, num_heads, window_size, rng);
  fc1.init(dim, 4 * dim, rng);
  fc2.init(4 * dim, dim, rng);
}

void TransformerBlock::zero_grad() {
  ln1.zero_grad();
  ln2.zero_grad();
  attn.zero_grad();
  fc1.zero_grad();
  fc2.zero_grad();
}

void TransformerBlock::collect(const std::string& prefix,
                               std::vector<ParamRef>& out) {
  ln1.collect(prefix + ".ln1", out);
  attn.collect(prefix + ".attn", out);
  ln2.collect(prefix + ".ln2", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Mat TransformerBlock::forward(const Mat& x, const Mask& valid,
                              Cache& cache) const {
  cache.x = x;
  const Mat n1 = ln1.forward(x, cache.ln1c);
  const Mat a = attn.forward(n1, valid, cache.attnc);
  cache.y1 = x + a;
  cache.ffn_in = ln2.forward(cache.y1, cache.ln2c);
  cache.fc1_pre = fc1.forward(cache.ffn_in);
  cache.fc1_act = relu(cache.fc1_pre);
  Mat y = cache.y1 + fc2.forward(cache.fc1_act);
  zero_invalid_rows(y, valid);
  return y;
}

Mat TransformerBlock::backward(const Mat& dy_in, const Mask& valid,
                               Cache& cache) {
  Mat dy = dy_in;
  zero_invalid_rows(dy, valid);
  // FFN branch
  Mat dact = fc2.backward(cache.fc1_act, dy);
  Mat dpre = relu_backward(dact, cache.fc1_pre);
  Mat dffn_in = fc1.backward(cache.ffn_in, dpre);
  Mat dy1 = dy + ln2.backward(dffn_in, cache.ln2c);
  // Attention branch
  Mat dn1 = attn.backward(dy1, valid, cache.attnc);
  Mat dx = dy1 + ln1.backward(dn1, cache.ln1c);
  return dx;
}

// ---------------------------------------------------------------------------
// ConvHead
// ---------------------------------------------------------------------------

void ConvHead::init(int in_dim, int hidden_dim, int out_dim, int num_convs,
                    int kernel_size, Rng& rng) {
  if (num_convs < 1) throw ValidationError("head needs at least one conv");
  convs.resize(static_cast<std::size_t>(num_convs));
  for (int i = 0; i < num_convs; ++i) {
    const int in = (i == 0) ? in_dim : hidden_dim;
    const int out = (i == num_convs - 1) ? out_dim : hidden_dim;
    convs[static_cast<std::size_t>(i)].init(in, out, kernel_size, rng);
  }
}

void ConvHead::zero_grad() {
  for (auto& c : convs) c.zero_grad();
}

void ConvHead::collect(const std::string& prefix,
                       std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    convs[i].collect(prefix + ".conv" + std::to_string(i), out);
  }
}

Mat ConvHead::forward(const Mat& x, const Mask& valid, Cache& cache) const {
  cache.inputs.clear();
  cache.pre.clear();
  Mat h = x;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    cache.inputs.push_back(h);
    Mat y = convs[i].forward(h);
    zero_invalid_rows(y, valid);
    if (i + 1 < convs.size()) {
      cache.pre.push_back(y);
      h = relu(y);
    } else {
      h = std::move(y);
    }
  }
  return h;
}

Mat ConvHead::backward(const Mat& dy_in, const Mask& valid, Cache& cache) {
  Mat dy = dy_in;
  for (std::size_t i = convs.size(); i-- > 0;) {
    if (i + 1 < convs.size()) {
      dy = relu_backward(dy, cache.pre[i]);
    }
    zero_invalid_rows(dy, valid);
    dy = convs[i].backward(cache.inputs[i], dy);
  }
  return dy;
}

Mask downsample_mask(const Mask& mask, int stride) {
  Mask out;
  out.reserve(mask.size() / static_cast<std::size_t>(stride));
  for (std::size_t i = 0; i * static_cast<std::size_t>(stride) < mask.size();
       ++i) {
    out.push_back(mask[i * static_cast<std::size_t>(stride)]);
  }
  return out;
}

}  // namespace talkit::nn
