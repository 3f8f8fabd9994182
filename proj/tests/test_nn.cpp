// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <functional>

#include "oracles.hpp"
#include "talkit/nn.hpp"
#include "talkit/rng.hpp"

using namespace talkit;

namespace {

Mat random_mat(Index t, Index d, Rng& rng) {
  Mat m(t, d);
  for (Index r = 0; r < t; ++r) {
    for (Index c = 0; c < d; ++c) m(r, c) = rng.normal();
  }
  return m;
}

// Central-difference check of every parameter against its accumulated
// analytic gradient. `loss` must recompute the forward pass from current
// parameter values.
double max_grad_error(const std::vector<nn::ParamRef>& refs,
                      const std::function<double()>& loss) {
  double worst = 0.0;
  for (const auto& r : refs) {
    Mat& w = *r.value;
    const Mat& g = *r.grad;
    for (Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      const double h = 1e-5 * std::max(1.0, std::abs(orig));
      w.data()[i] = orig + h;
      const double lp = loss();
      w.data()[i] = orig - h;
      const double lm = loss();
      w.data()[i] = orig;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = g.data()[i];
      const double denom = std::max({1e-4, std::abs(num), std::abs(ana)});
      worst = std::max(worst, std::abs(num - ana) / denom);
    }
  }
  return worst;
}

// Numerical check of the input gradient returned by backward.
double max_input_grad_error(Mat& x, const Mat& dx,
                            const std::function<double()>& loss) {
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    const double h = 1e-5 * std::max(1.0, std::abs(orig));
    x.data()[i] = orig + h;
    const double lp = loss();
    x.data()[i] = orig - h;
    const double lm = loss();
    x.data()[i] = orig;
    const double num = (lp - lm) / (2.0 * h);
    const double denom = std::max({1e-6, std::abs(num), std::abs(dx.data()[i])});
    worst = std::max(worst, std::abs(num - dx.data()[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("activation helpers") {
  CHECK(nn::sigmoid(0.0) == 0.5);
  CHECK(nn::sigmoid(100.0) == doctest::Approx(1.0));
  CHECK(nn::sigmoid(-100.0) == doctest::Approx(0.0));
  CHECK(nn::log_sigmoid(0.0) == doctest::Approx(std::log(0.5)));
  CHECK(nn::log_one_minus_sigmoid(0.0) == doctest::Approx(std::log(0.5)));
  // large |z| stays finite
  CHECK(std::isfinite(nn::log_sigmoid(-500.0)));
  CHECK(std::isfinite(nn::log_one_minus_sigmoid(500.0)));
  Mat x(1, 3);
  x << -2.0, 0.0, 3.0;
  const Mat sp = nn::softplus(x);
  CHECK(sp(0, 0) == doctest::Approx(std::log1p(std::exp(-2.0))));
  CHECK(sp(0, 2) == doctest::Approx(std::log1p(std::exp(3.0))));
  CHECK(sp.minCoeff() > 0.0);
}

TEST_CASE("linear gradcheck") {
  Rng rng(21);
  nn::Linear lin;
  lin.init(5, 3, rng);
  Mat x = random_mat(7, 5, rng);
  const Mat probe = random_mat(7, 3, rng);
  auto loss = [&] { return lin.forward(x).cwiseProduct(probe).sum(); };
  lin.zero_grad();
  const Mat dx = lin.backward(x, probe);
  std::vector<nn::ParamRef> refs;
  lin.collect("lin", refs);
  CHECK(max_grad_error(refs, loss) < 1e-6);
  CHECK(max_input_grad_error(x, dx, loss) < 1e-6);
}

TEST_CASE("conv1d matches direct summation and gradchecks") {
  Rng rng(22);
  nn::Conv1d conv;
  conv.init(3, 4, 5, rng);
  Mat x = random_mat(9, 3, rng);
  const Mat y = conv.forward(x);
  REQUIRE(y.rows() == 9);
  REQUIRE(y.cols() == 4);
  // direct evaluation at a few positions
  for (Index t : {Index(0), Index(4), Index(8)}) {
    for (Index o = 0; o < 4; ++o) {
      double acc = conv.b(0, o);
      for (int j = 0; j < 5; ++j) {
        const Index src = t + j - 2;
        if (src < 0 || src >= 9) continue;
        for (Index c = 0; c < 3; ++c) {
          acc += conv.w(o, j * 3 + c) * x(src, c);
        }
      }
      CHECK(y(t, o) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
  const Mat probe = random_mat(9, 4, rng);
  auto loss = [&] { return conv.forward(x).cwiseProduct(probe).sum(); };
  conv.zero_grad();
  const Mat dx = conv.backward(x, probe);
  std::vector<nn::ParamRef> refs;
  conv.collect("conv", refs);
  CHECK(max_grad_error(refs, loss) < 1e-6);
  CHECK(max_input_grad_error(x, dx, loss) < 1e-6);
}

TEST_CASE("depthwise downsampler halves length and gradchecks") {
  Rng rng(23);
  nn::DepthwiseConv1d down;
  down.init(4, 2, rng);
  Mat x = random_mat(10, 4, rng);
  const Mat y = down.forward(x);
  REQUIRE(y.rows() == 5);
  const Mat probe = random_mat(5, 4, rng);
  auto loss = [&] { return down.forward(x).cwiseProduct(probe).sum(); };
  down.zero_grad();
  const Mat dx = down.backward(x, probe);
  std::vector<nn::ParamRef> refs;
  down.collect("down", refs);
  CHECK(max_grad_error(refs, loss) < 1e-6);
  CHECK(max_input_grad_error(x, dx, loss) < 1e-6);
}

TEST_CASE("layernorm normalizes rows and gradchecks") {
  Rng rng(24);
  nn::LayerNorm ln;
  ln.init(6);
  Mat x = 3.0 * random_mat(5, 6, rng);
  nn::LayerNorm::Cache cache;
  const Mat y = ln.forward(x, cache);
  for (Index r = 0; r < y.rows(); ++r) {
    CHECK(y.row(r).mean() == doctest::Approx(0.0).epsilon(1e-10));
  }
  const Mat probe = random_mat(5, 6, rng);
  auto loss = [&] {
    nn::LayerNorm::Cache c;
    return ln.forward(x, c).cwiseProduct(probe).sum();
  };
  ln.zero_grad();
  const Mat dx = ln.backward(probe, cache);
  std::vector<nn::ParamRef> refs;
  ln.collect("ln", refs);
  CHECK(max_grad_error(refs, loss) < 1e-6);
  CHECK(max_input_grad_error(x, dx, loss) < 1e-5);
}

TEST_CASE("local attention gradcheck with padding") {
  Rng rng(25);
  nn::LocalAttention attn;
  attn.init(8, 2, 5, rng);
  Mat x = random_mat(10, 8, rng);
  Mask mask(10, 1);
  mask[8] = mask[9] = 0;
  zero_invalid_rows(x, mask);
  const Mat probe = random_mat(10, 8, rng);
  auto loss = [&] {
    nn::LocalAttention::Cache c;
    return attn.forward(x, mask, c).cwiseProduct(probe).sum();
  };
  nn::LocalAttention::Cache cache;
  attn.forward(x, mask, cache);
  attn.zero_grad();
  const Mat dx = attn.backward(probe, mask, cache);
  std::vector<nn::ParamRef> refs;
  attn.collect("attn", refs);
  CHECK(max_grad_error(refs, loss) < 1e-5);
  CHECK(max_input_grad_error(x, dx, loss) < 1e-5);
}

TEST_CASE("degenerate window reproduces dense attention") {
  Rng rng(26);
  const Index t = 12;
  nn::LocalAttention attn;
  attn.init(8, 2, 2 * static_cast<int>(t) - 1, rng);
  Mat x = random_mat(t, 8, rng);
  const Mask mask = full_mask(t);
  nn::LocalAttention::Cache cache;
  const Mat windowed = attn.forward(x, mask, cache);
  const Mat dense = testing::dense_attention(attn, x);
  CHECK((windowed - dense).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("transformer block gradcheck") {
  Rng rng(27);
  nn::TransformerBlock block;
  block.init(8, 2, 5, rng);
  Mat x = random_mat(12, 8, rng);
  Mask mask(12, 1);
  mask[10] = mask[11] = 0;
  zero_invalid_rows(x, mask);
  const Mat probe = random_mat(12, 8, rng);
  auto loss = [&] {
    nn::TransformerBlock::Cache c;
    return block.forward(x, mask, c).cwiseProduct(probe).sum();
  };
  nn::TransformerBlock::Cache cache;
  block.forward(x, mask, cache);
  block.zero_grad();
  const Mat dx = block.backward(probe, mask, cache);
  std::vector<nn::ParamRef> refs;
  block.collect("block", refs);
  CHECK(max_grad_error(refs, loss) < 1e-5);
  CHECK(max_input_grad_error(x, dx, loss) < 1e-5);
}

TEST_CASE("single block receptive field is the attention window") {
  Rng rng(28);
  const int window = 5;  // half = 2
  nn::TransformerBlock block;
  block.init(8, 2, window, rng);
  const Index t = 32;
  Mat x = random_mat(t, 8, rng);
  const Mask mask = full_mask(t);
  nn::TransformerBlock::Cache c1, c2;
  const Mat y1 = block.forward(x, mask, c1);

  Mat x2 = x;
  const Index hit = 20;
  x2.row(hit).setConstant(17.0);
  const Mat y2 = block.forward(x2, mask, c2);
  for (Index r = 0; r < t; ++r) {
    if (std::abs(static_cast<long>(r - hit)) > (window - 1) / 2) {
      CHECK(y1.row(r) == y2.row(r));  // bitwise
    }
  }
  // the perturbation does reach its own window
  CHECK(y1.row(hit) != y2.row(hit));
}

TEST_CASE("k stacked blocks reach at most k*(W-1)+1 positions") {
  Rng rng(29);
  const int window = 5;
  nn::TransformerBlock b1, b2;
  b1.init(8, 2, window, rng);
  b2.init(8, 2, window, rng);
  const Index t = 40;
  Mat x = random_mat(t, 8, rng);
  const Mask mask = full_mask(t);
  nn::TransformerBlock::Cache c;
  const Mat y1 = b2.forward(b1.forward(x, mask, c), mask, c);
  Mat x2 = x;
  const Index hit = 20;
  x2.row(hit).setConstant(-9.0);
  const Mat y2 = b2.forward(b1.forward(x2, mask, c), mask, c);
  const long reach = 2 * (window - 1) / 2;  // k=2 blocks, half-window each
  for (Index r = 0; r < t; ++r) {
    if (std::abs(static_cast<long>(r - hit)) > reach) {
      CHECK(y1.row(r) == y2.row(r));
    }
  }
}

TEST_CASE("mask soundness: padded garbage never leaks into valid outputs") {
  Rng rng(30);
  nn::TransformerBlock block;
  block.init(8, 2, 7, rng);
  const Index t = 24;
  Mask mask(t, 1);
  for (Index r = 16; r < t; ++r) mask[static_cast<std::size_t>(r)] = 0;
  Mat x = random_mat(t, 8, rng);
  zero_invalid_rows(x, mask);
  nn::TransformerBlock::Cache c;
  const Mat y1 = block.forward(x, mask, c);

  Mat x2 = x;
  for (Index r = 16; r < t; ++r) x2.row(r).setConstant(1e6);
  const Mat y2 = block.forward(x2, mask, c);
  for (Index r = 0; r < 16; ++r) {
    CHECK(y1.row(r) == y2.row(r));  // bitwise at float64
  }
  for (Index r = 16; r < t; ++r) {
    CHECK(y2.row(r).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("conv head stack gradcheck") {
  Rng rng(31);
  nn::ConvHead head;
  head.init(6, 6, 3, 3, 3, rng);
  Mat x = random_mat(10, 6, rng);
  Mask mask(10, 1);
  mask[9] = 0;
  zero_invalid_rows(x, mask);
  const Mat probe = random_mat(10, 3, rng);
  auto loss = [&] {
    nn::ConvHead::Cache c;
    return head.forward(x, mask, c).cwiseProduct(probe).sum();
  };
  nn::ConvHead::Cache cache;
  head.forward(x, mask, cache);
  head.zero_grad();
  const Mat dx = head.backward(probe, mask, cache);
  std::vector<nn::ParamRef> refs;
  head.collect("head", refs);
  CHECK(max_grad_error(refs, loss) < 1e-5);
  CHECK(max_input_grad_error(x, dx, loss) < 1e-5);
}

TEST_CASE("mask downsampling keeps anchor entries") {
  const Mask m = {1, 1, 1, 1, 1, 0, 0, 0};
  const Mask d = nn::downsample_mask(m, 2);
  CHECK(d == Mask{1, 1, 1, 0});
  CHECK(nn::downsample_mask(d, 2) == Mask{1, 1});
}

}  // TEST_SUITE
