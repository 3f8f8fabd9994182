// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>

#include "talkit/model.hpp"
#include "talkit/rng.hpp"
#include "talkit/train.hpp"

using namespace talkit;

namespace {

ModelConfig tiny_config(int max_seq_len, int levels, int dim, int heads,
                        int classes) {
  ModelConfig cfg;
  cfg.num_classes = classes;
  cfg.max_seq_len = max_seq_len;
  cfg.num_levels = levels;
  cfg.embed_dim = dim;
  cfg.num_heads = heads;
  cfg.attention_window = 5;
  return cfg;
}

FusionPlan cat_plan(std::vector<int> dims) {
  FusionPlan plan;
  plan.mode = FusionMode::kCat;
  plan.source_dims = std::move(dims);
  return plan;
}

std::vector<Mat> random_sources(const std::vector<int>& dims, Index t,
                                Rng& rng) {
  std::vector<Mat> out;
  for (int d : dims) {
    Mat m(t, d);
    for (Index r = 0; r < t; ++r) {
      for (Index c = 0; c < d; ++c) m(r, c) = rng.normal();
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config invariants") {
  ModelConfig cfg;  // paper-scale defaults
  cfg.validate();
  CHECK(cfg.level_length(5) == 32);
  CHECK(cfg.level_stride(5) == 32);
  const auto ranges = cfg.effective_ranges();
  REQUIRE(ranges.size() == 6);
  CHECK(ranges[0] == std::pair<double, double>(0.0, 4.0));
  CHECK(ranges[1] == std::pair<double, double>(4.0, 8.0));
  CHECK(ranges[4] == std::pair<double, double>(32.0, 64.0));
  CHECK(ranges[5].first == 64.0);
  CHECK(std::isinf(ranges[5].second));

  ModelConfig bad = cfg;
  bad.embed_dim = 100;  // not divisible by 16 heads
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.attention_window = 8;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.max_seq_len = 1000;  // not divisible by 2^5
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("pyramid level lengths halve per level") {
  const auto cfg = tiny_config(64, 4, 8, 2, 3);
  Localizer model(cfg, cat_plan({5}), 1);
  Rng rng(2);
  auto sources = random_sources({5}, 64, rng);
  const auto out = model.forward(sources, full_mask(64));
  REQUIRE(out.levels.size() == 4);
  const int want_len[] = {64, 32, 16, 8};
  const int want_stride[] = {1, 2, 4, 8};
  for (int l = 0; l < 4; ++l) {
    CHECK(out.levels[l].cls_logits.rows() == want_len[l]);
    CHECK(out.levels[l].cls_logits.cols() == 3);
    CHECK(out.levels[l].offsets.rows() == want_len[l]);
    CHECK(out.levels[l].offsets.cols() == 2);
    CHECK(out.levels[l].stride == want_stride[l]);
  }
}

TEST_CASE("offsets are nonnegative for any input") {
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto cfg = tiny_config(32, 3, 8, 2, 4);
    Localizer model(cfg, cat_plan({6}), seed);
    auto sources = random_sources({6}, 32, rng);
    const auto out = model.forward(sources, full_mask(32));
    for (const auto& lvl : out.levels) {
      CHECK(lvl.offsets.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("heads share parameters across levels") {
  const auto cfg = tiny_config(32, 2, 8, 2, 5);
  Localizer model(cfg, cat_plan({4}), 7);
  Rng rng(4);
  Mat feat(16, 8);
  for (Index r = 0; r < 16; ++r) {
    for (Index c = 0; c < 8; ++c) feat(r, c) = rng.normal();
  }
  const Mask mask = full_mask(16);
  const auto out = model.run_heads({feat, feat}, {mask, mask});
  CHECK(out.levels[0].cls_logits == out.levels[1].cls_logits);
  CHECK(out.levels[0].offsets == out.levels[1].offsets);
}

TEST_CASE("embed masking contract") {
  const auto cfg = tiny_config(16, 2, 8, 2, 2);
  Localizer model(cfg, cat_plan({4}), 9);
  Mask mask(16, 1);
  for (Index r = 10; r < 16; ++r) mask[static_cast<std::size_t>(r)] = 0;

  SUBCASE("all-zero input keeps masked rows zero") {
    const Mat zero = Mat::Zero(16, 4);
    const Mat e = model.run_embed(zero, mask);
    for (Index r = 10; r < 16; ++r) {
      CHECK(e.row(r).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("garbage at masked positions cannot reach valid outputs") {
    Rng rng(5);
    Mat x(16, 4);
    for (Index r = 0; r < 16; ++r) {
      for (Index c = 0; c < 4; ++c) x(r, c) = rng.normal();
    }
    const Mat e1 = model.run_embed(x, mask);
    Mat x2 = x;
    x2.row(12).setConstant(1e9);
    const Mat e2 = model.run_embed(x2, mask);
    for (Index r = 0; r < 10; ++r) {
      CHECK(e1.row(r) == e2.row(r));
    }
  }
  SUBCASE("overlong input is rejected") {
    CHECK_THROWS_AS(model.run_embed(Mat::Zero(17, 4), full_mask(17)),
                    ValidationError);
  }
}

TEST_CASE("padded-region perturbation leaves the whole pyramid unchanged") {
  const auto cfg = tiny_config(32, 3, 8, 2, 3);
  Localizer model(cfg, cat_plan({5}), 11);
  Rng rng(6);
  auto sources = random_sources({5}, 20, rng);
  auto [padded, mask] = pad_to_max(sources, 32);
  const auto out1 = model.forward(padded, mask);

  auto garbled = padded;
  for (Index r = 20; r < 32; ++r) garbled[0].row(r).setConstant(123.0);
  const auto out2 = model.forward(garbled, mask);
  for (std::size_t l = 0; l < out1.levels.size(); ++l) {
    for (Index t = 0; t < out1.levels[l].cls_logits.rows(); ++t) {
      if (!out1.levels[l].valid[static_cast<std::size_t>(t)]) continue;
      CHECK(out1.levels[l].cls_logits.row(t) ==
            out2.levels[l].cls_logits.row(t));
      CHECK(out1.levels[l].offsets.row(t) == out2.levels[l].offsets.row(t));
    }
  }
}

TEST_CASE("fixed seed gives identical parameters and outputs") {
  const auto cfg = tiny_config(32, 3, 8, 2, 3);
  FusionPlan plan;
  plan.mode = FusionMode::kProjCat;
  plan.source_dims = {6, 4};
  plan.projection_dims = {4, 4};
  Localizer a(cfg, plan, 42);
  Localizer b(cfg, plan, 42);
  auto ra = a.params();
  auto rb = b.params();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].name == rb[i].name);
    CHECK(*ra[i].value == *rb[i].value);
  }
  Rng rng(7);
  auto sources = random_sources({6, 4}, 32, rng);
  const auto out_a = a.forward(sources, full_mask(32));
  const auto out_b = b.forward(sources, full_mask(32));
  for (std::size_t l = 0; l < out_a.levels.size(); ++l) {
    CHECK(out_a.levels[l].cls_logits == out_b.levels[l].cls_logits);
    CHECK(out_a.levels[l].offsets == out_b.levels[l].offsets);
  }
}

TEST_CASE("maxpool downsampling mode works end to end") {
  auto cfg = tiny_config(32, 3, 8, 2, 3);
  cfg.downsample_mode = DownsampleMode::kMaxPool;
  Localizer model(cfg, cat_plan({5}), 13);
  Rng rng(8);
  auto sources = random_sources({5}, 32, rng);
  const auto out = model.forward(sources, full_mask(32));
  CHECK(out.levels[2].cls_logits.rows() == 8);
}

TEST_CASE("checkpoint round trip restores float32-rounded parameters") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "talkit_model_tests";
  fs::create_directories(dir);
  const auto path = dir / "model.ckpt";

  const auto cfg = tiny_config(32, 3, 8, 2, 3);
  FusionPlan plan;
  plan.mode = FusionMode::kProjCat;
  plan.source_dims = {6};
  plan.projection_dims = {8};
  Localizer model(cfg, plan, 77);
  save_checkpoint(path, model, 4);

  auto ck = load_checkpoint(path);
  CHECK(ck.epoch == 4);
  CHECK(ck.seed == 77);
  CHECK(ck.model.config().num_levels == 3);
  CHECK(ck.model.fusion_plan().mode == FusionMode::kProjCat);
  auto orig = model.params();
  auto back = ck.model.params();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].name == back[i].name);
    for (Index k = 0; k < orig[i].value->size(); ++k) {
      const double rounded = static_cast<double>(
          static_cast<float>(orig[i].value->data()[k]));
      CHECK(back[i].value->data()[k] == rounded);
    }
  }
  // a second save of the loaded model is byte-stable
  const auto path2 = dir / "model2.ckpt";
  save_checkpoint(path2, ck.model, 4);
  auto ck2 = load_checkpoint(path2);
  auto again = ck2.model.params();
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(*again[i].value == *back[i].value);
  }
}

TEST_CASE("full-model gradcheck on a miniature config") {
  const auto cfg = tiny_config(16, 2, 8, 2, 2);
  FusionPlan plan;
  plan.mode = FusionMode::kProjCat;
  plan.source_dims = {5};
  plan.projection_dims = {8};
  Localizer model(cfg, plan, 3);

  Rng rng(9);
  auto sources = random_sources({5}, 12, rng);
  auto [padded, mask] = pad_to_max(sources, 16);

  const VideoRecord video(
      "v", 12.0,
      {ActionInstance(0, Segment(2.0, 5.0)), ActionInstance(1, Segment(7.0, 11.0))});
  TrainConfig tcfg;
  const auto geom = PyramidGeometry::make(cfg, 12, 1.0);
  const auto targets = assign_targets(video, geom, tcfg.center_sampling_radius);
  REQUIRE(targets.num_positive > 0);

  auto loss_value = [&] {
    const auto out = model.forward(padded, mask);
    return detection_loss(out, targets, tcfg).total;
  };

  Localizer::Activations acts;
  const auto out = model.forward(padded, mask, &acts);
  PyramidGrads grads;
  detection_loss(out, targets, tcfg, &grads);
  model.zero_grad();
  model.backward(grads, acts);

  double worst = 0.0;
  for (auto& ref : model.params()) {
    Mat& w = *ref.value;
    const Mat& g = *ref.grad;
    for (Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      const double h = 1e-6 * std::max(1.0, std::abs(orig));
      w.data()[i] = orig + h;
      const double lp = loss_value();
      w.data()[i] = orig - h;
      const double lm = loss_value();
      w.data()[i] = orig;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = g.data()[i];
      const double denom = std::max({1e-4, std::abs(num), std::abs(ana)});
      worst = std::max(worst, std::abs(num - ana) / denom);
    }
  }
  CHECK(worst < 1e-4);
}

}  // TEST_SUITE
