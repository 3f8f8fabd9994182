// SPDX-License-Identifier: Apache-2.0
#include "talkit/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "talkit/error.hpp"
#include "talkit/io.hpp"
#include "json_util.hpp"

namespace talkit {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "cat") return FusionMode::kCat;
  if (s == "proj_cat") return FusionMode::kProjCat;
  throw ConfigError("fusion.mode must be 'cat' or 'proj_cat', got '" + s +
                    "'");
}

std::string to_string(FusionMode m) {
  return m == FusionMode::kCat ? "cat" : "proj_cat";
}

int FusionPlan::input_width() const {
  int total = 0;
  if (mode == FusionMode::kProjCat) {
    for (int d : projection_dims) total += d;
  } else {
    for (int d : source_dims) total += d;
  }
  return total;
}

void FusionPlan::validate() const {
  if (source_dims.empty()) {
    throw ValidationError("fusion plan has no sources");
  }
  for (int d : source_dims) {
    if (d <= 0) throw ValidationError("source dims must be positive");
  }
  if (mode == FusionMode::kProjCat) {
    if (projection_dims.size() != source_dims.size()) {
      throw ValidationError("fusion plan needs one projection dim per source "
                            "(got " + std::to_string(projection_dims.size()) +
                            " for " + std::to_string(source_dims.size()) +
                            " sources)");
    }
    for (int d : projection_dims) {
      if (d <= 0) throw ValidationError("projection dims must be positive");
    }
  }
}

void ModelConfig::validate() const {
  if (num_classes <= 0) throw ValidationError("num_classes must be positive");
  if (max_seq_len <= 0) throw ValidationError("max_seq_len must be positive");
  if (num_levels < 1) throw ValidationError("num_levels must be >= 1");
  if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
    throw ValidationError("embed_dim must be a positive multiple of "
                          "num_heads");
  }
  if (attention_window < 1 || attention_window % 2 == 0) {
    throw ValidationError("attention_window must be odd and positive");
  }
  if (downsample_stride < 2) {
    throw ValidationError("downsample_stride must be >= 2");
  }
  long len = max_seq_len;
  for (int l = 1; l < num_levels; ++l) {
    if (len % downsample_stride != 0) {
      throw ValidationError("max_seq_len must be divisible by "
                            "downsample_stride^(num_levels-1)");
    }
    len /= downsample_stride;
  }
  if (num_embed_convs < 1 || num_head_convs < 1) {
    throw ValidationError("conv stack sizes must be >= 1");
  }
  if (head_kernel < 1 || head_kernel % 2 == 0) {
    throw ValidationError("head_kernel must be odd and positive");
  }
  if (!regression_ranges.empty()) {
    if (static_cast<int>(regression_ranges.size()) != num_levels) {
      throw ValidationError("regression_ranges must have one [lo,hi) pair "
                            "per level");
    }
    for (const auto& [lo, hi] : regression_ranges) {
      if (!(lo >= 0.0) || !(hi > lo)) {
        throw ValidationError("regression ranges must satisfy 0 <= lo < hi");
      }
    }
  }
}

int ModelConfig::level_stride(int level) const {
  int s = 1;
  for (int l = 0; l < level; ++l) s *= downsample_stride;
  return s;
}

int ModelConfig::level_length(int level) const {
  return max_seq_len / level_stride(level);
}

std::vector<std::pair<double, double>> ModelConfig::effective_ranges() const {
  if (!regression_ranges.empty()) return regression_ranges;
  std::vector<std::pair<double, double>> ranges;
  ranges.reserve(static_cast<std::size_t>(num_levels));
  double lo = 0.0;
  for (int l = 0; l < num_levels; ++l) {
    const double hi =
        (l == num_levels - 1)
            ? std::numeric_limits<double>::infinity()
            : 4.0 * static_cast<double>(level_stride(l));
    ranges.emplace_back(lo, hi);
    lo = hi;
  }
  return ranges;
}

// ---------------------------------------------------------------------------
// Localizer
// ---------------------------------------------------------------------------

Localizer::Localizer(ModelConfig cfg, FusionPlan fusion, std::uint64_t seed)
    : cfg_(std::move(cfg)), fusion_(std::move(fusion)), seed_(seed) {
  cfg_.validate();
  fusion_.validate();
  Rng rng(derive_seed(seed_, 0x6d6f64656cULL));  // "model" stream

  if (fusion_.mode == FusionMode::kProjCat) {
    projections_.resize(fusion_.source_dims.size());
    for (std::size_t k = 0; k < projections_.size(); ++k) {
      projections_[k].init(fusion_.source_dims[k], fusion_.projection_dims[k],
                           rng);
    }
  }
  embed_.init(fusion_.input_width(), cfg_.embed_dim, cfg_.embed_dim,
              cfg_.num_embed_convs, 3, rng);
  blocks_.resize(static_cast<std::size_t>(cfg_.num_levels));
  for (auto& b : blocks_) {
    b.init(cfg_.embed_dim, cfg_.num_heads, cfg_.attention_window, rng);
  }
  if (cfg_.downsample_mode == DownsampleMode::kConv) {
    downs_.resize(static_cast<std::size_t>(cfg_.num_levels - 1));
    for (auto& d : downs_) {
      d.init(cfg_.embed_dim, cfg_.downsample_stride, rng);
    }
  }
  cls_head_.init(cfg_.embed_dim, cfg_.embed_dim, cfg_.num_classes,
                 cfg_.num_head_convs, cfg_.head_kernel, rng);
  reg_head_.init(cfg_.embed_dim, cfg_.embed_dim, 2, cfg_.num_head_convs,
                 cfg_.head_kernel, rng);
}

Mat Localizer::fuse_sources(const std::vector<Mat>& sources) const {
  if (sources.size() != fusion_.source_dims.size()) {
    throw ValidationError("expected " +
                          std::to_string(fusion_.source_dims.size()) +
                          " sources, got " + std::to_string(sources.size()));
  }
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (sources[k].cols() != fusion_.source_dims[k]) {
      throw ValidationError("source " + std::to_string(k) + " has dim " +
                            std::to_string(sources[k].cols()) +
                            ", expected " +
                            std::to_string(fusion_.source_dims[k]));
    }
    if (sources[k].rows() != cfg_.max_seq_len) {
      throw ValidationError("source " + std::to_string(k) + " has " +
                            std::to_string(sources[k].rows()) +
                            " rows; inputs must be padded to max_seq_len = " +
                            std::to_string(cfg_.max_seq_len));
    }
  }
  const Index t = sources.front().rows();
  Mat fused(t, fusion_.input_width());
  Index col = 0;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (fusion_.mode == FusionMode::kProjCat) {
      const Index out = projections_[k].w.rows();
      fused.middleCols(col, out) = projections_[k].forward(sources[k]);
      col += out;
    } else {
      fused.middleCols(col, sources[k].cols()) = sources[k];
      col += sources[k].cols();
    }
  }
  return fused;
}

PyramidOutput Localizer::forward(const std::vector<Mat>& sources,
                                 const Mask& mask, Activations* acts) const {
  if (static_cast<Index>(mask.size()) != cfg_.max_seq_len) {
    throw ValidationError("mask length must equal max_seq_len");
  }
  Activations local;
  Activations& a = acts ? *acts : local;
  a.sources = sources;
  a.fused = fuse_sources(sources);

  a.embed_in = a.fused;
  zero_invalid_rows(a.embed_in, mask);
  Mat e = embed_.forward(a.embed_in, mask, a.embed);

  const int levels = cfg_.num_levels;
  a.blocks.resize(static_cast<std::size_t>(levels));
  a.down_in.assign(static_cast<std::size_t>(levels - 1), Mat());
  a.pool_arg.clear();
  a.pool_arg.resize(static_cast<std::size_t>(levels - 1));
  a.level_feats.resize(static_cast<std::size_t>(levels));
  a.level_masks.resize(static_cast<std::size_t>(levels));
  a.cls_heads.resize(static_cast<std::size_t>(levels));
  a.reg_heads.resize(static_cast<std::size_t>(levels));
  a.reg_pre.resize(static_cast<std::size_t>(levels));

  a.level_masks[0] = mask;
  a.level_feats[0] = blocks_[0].forward(e, mask, a.blocks[0]);
  for (int l = 1; l < levels; ++l) {
    Mat d = downsample_forward(l - 1, a.level_feats[static_cast<std::size_t>(l - 1)], a);
    a.level_masks[static_cast<std::size_t>(l)] = nn::downsample_mask(
        a.level_masks[static_cast<std::size_t>(l - 1)], cfg_.downsample_stride);
    zero_invalid_rows(d, a.level_masks[static_cast<std::size_t>(l)]);
    a.level_feats[static_cast<std::size_t>(l)] = blocks_[static_cast<std::size_t>(l)]
        .forward(d, a.level_masks[static_cast<std::size_t>(l)],
                 a.blocks[static_cast<std::size_t>(l)]);
  }

  PyramidOutput out;
  out.levels.resize(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    auto& lvl = out.levels[li];
    lvl.stride = cfg_.level_stride(l);
    lvl.valid = a.level_masks[li];
    lvl.cls_logits =
        cls_head_.forward(a.level_feats[li], a.level_masks[li], a.cls_heads[li]);
    a.reg_pre[li] =
        reg_head_.forward(a.level_feats[li], a.level_masks[li], a.reg_heads[li]);
    lvl.offsets = nn::softplus(a.reg_pre[li]);
    zero_invalid_rows(lvl.offsets, lvl.valid);
  }
  return out;
}

void Localizer::backward(const PyramidGrads& grads, Activations& a) {
  const int levels = cfg_.num_levels;
  if (static_cast<int>(grads.size()) != levels) {
    throw ValidationError("gradient pyramid has wrong level count");
  }
  std::vector<Mat> dfeat(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    Mat d_pre = nn::softplus_backward(grads[li].d_offsets, a.reg_pre[li]);
    zero_invalid_rows(d_pre, a.level_masks[li]);
    dfeat[li] =
        cls_head_.backward(grads[li].d_cls, a.level_masks[li], a.cls_heads[li]);
    dfeat[li] +=
        reg_head_.backward(d_pre, a.level_masks[li], a.reg_heads[li]);
  }

  Mat g = dfeat[static_cast<std::size_t>(levels - 1)];
  for (int l = levels - 1; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l);
    g = blocks_[li].backward(g, a.level_masks[li], a.blocks[li]);
    g = downsample_backward(l - 1, g, a);
    g += dfeat[li - 1];
  }
  g = blocks_[0].backward(g, a.level_masks[0], a.blocks[0]);

  Mat dfused = embed_.backward(g, a.level_masks[0], a.embed);
  zero_invalid_rows(dfused, a.level_masks[0]);  // backward of input masking

  if (fusion_.mode == FusionMode::kProjCat) {
    Index col = 0;
    for (std::size_t k = 0; k < projections_.size(); ++k) {
      const Index out = projections_[k].w.rows();
      projections_[k].backward(a.sources[k], dfused.middleCols(col, out));
      col += out;
    }
  }
}

Mat Localizer::downsample_forward(int transition, const Mat& x,
                                  Activations& acts) const {
  const auto ti = static_cast<std::size_t>(transition);
  acts.down_in[ti] = x;
  if (cfg_.downsample_mode == DownsampleMode::kConv) {
    return downs_[ti].forward(x);
  }
  const int stride = cfg_.downsample_stride;
  const Index to = x.rows() / stride;
  Mat y(to, x.cols());
  auto& arg = acts.pool_arg[ti];
  arg.resize(to, x.cols());
  for (Index i = 0; i < to; ++i) {
    for (Index c = 0; c < x.cols(); ++c) {
      Index best = i * stride;
      for (int j = 1; j < stride; ++j) {
        const Index r = i * stride + j;
        if (x(r, c) > x(best, c)) best = r;
      }
      arg(i, c) = best;
      y(i, c) = x(best, c);
    }
  }
  return y;
}

Mat Localizer::downsample_backward(int transition, const Mat& dy,
                                   Activations& acts) {
  const auto ti = static_cast<std::size_t>(transition);
  if (cfg_.downsample_mode == DownsampleMode::kConv) {
    return downs_[ti].backward(acts.down_in[ti], dy);
  }
  const Mat& x = acts.down_in[ti];
  Mat dx = Mat::Zero(x.rows(), x.cols());
  const auto& arg = acts.pool_arg[ti];
  for (Index i = 0; i < dy.rows(); ++i) {
    for (Index c = 0; c < dy.cols(); ++c) {
      dx(arg(i, c), c) += dy(i, c);
    }
  }
  return dx;
}

Mat Localizer::run_embed(const Mat& fused, const Mask& mask) const {
  if (fused.rows() > cfg_.max_seq_len) {
    throw ValidationError("sequence length " + std::to_string(fused.rows()) +
                          " exceeds max_seq_len " +
                          std::to_string(cfg_.max_seq_len));
  }
  Mat x = fused;
  zero_invalid_rows(x, mask);
  nn::ConvHead::Cache cache;
  return embed_.forward(x, mask, cache);
}

std::vector<Mat> Localizer::run_pyramid(const Mat& embedded, const Mask& mask,
                                        std::vector<Mask>* level_masks) const {
  Activations a;
  a.down_in.assign(static_cast<std::size_t>(cfg_.num_levels - 1), Mat());
  a.pool_arg.resize(static_cast<std::size_t>(cfg_.num_levels - 1));
  a.blocks.resize(static_cast<std::size_t>(cfg_.num_levels));
  std::vector<Mat> feats(static_cast<std::size_t>(cfg_.num_levels));
  std::vector<Mask> masks(static_cast<std::size_t>(cfg_.num_levels));
  masks[0] = mask;
  feats[0] = blocks_[0].forward(embedded, mask, a.blocks[0]);
  for (int l = 1; l < cfg_.num_levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    Mat d = downsample_forward(l - 1, feats[li - 1], a);
    masks[li] = nn::downsample_mask(masks[li - 1], cfg_.downsample_stride);
    zero_invalid_rows(d, masks[li]);
    feats[li] = blocks_[li].forward(d, masks[li], a.blocks[li]);
  }
  if (level_masks) *level_masks = masks;
  return feats;
}

PyramidOutput Localizer::run_heads(const std::vector<Mat>& feats,
                                   const std::vector<Mask>& masks) const {
  PyramidOutput out;
  out.levels.resize(feats.size());
  nn::ConvHead::Cache scratch;
  for (std::size_t l = 0; l < feats.size(); ++l) {
    auto& lvl = out.levels[l];
    lvl.stride = cfg_.level_stride(static_cast<int>(l));
    lvl.valid = masks[l];
    lvl.cls_logits = cls_head_.forward(feats[l], masks[l], scratch);
    Mat pre = reg_head_.forward(feats[l], masks[l], scratch);
    lvl.offsets = nn::softplus(pre);
    zero_invalid_rows(lvl.offsets, lvl.valid);
  }
  return out;
}

std::vector<nn::ParamRef> Localizer::params() {
  std::vector<nn::ParamRef> refs;
  for (std::size_t k = 0; k < projections_.size(); ++k) {
    projections_[k].collect("proj" + std::to_string(k), refs);
  }
  embed_.collect("embed", refs);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l].collect("level" + std::to_string(l), refs);
  }
  for (std::size_t d = 0; d < downs_.size(); ++d) {
    downs_[d].collect("down" + std::to_string(d), refs);
  }
  cls_head_.collect("cls_head", refs);
  reg_head_.collect("reg_head", refs);
  return refs;
}

void Localizer::zero_grad() {
  for (auto& p : projections_) p.zero_grad();
  embed_.zero_grad();
  for (auto& b : blocks_) b.zero_grad();
  for (auto& d : downs_) d.zero_grad();
  cls_head_.zero_grad();
  reg_head_.zero_grad();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::string u64_le_bytes(std::uint64_t v) {
  std::string s(8, '\0');
  for (int i = 0; i < 8; ++i) s[static_cast<std::size_t>(i)] =
      static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::uint64_t u64_from_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Localizer& model,
                     int epoch) {
  auto refs = model.params();
  detail::json tensors = detail::json::array();
  std::string blob;
  for (const auto& r : refs) {
    tensors.push_back({{"name", r.name},
                       {"rows", r.value->rows()},
                       {"cols", r.value->cols()},
                       {"offset", blob.size()}});
    blob += io::encode_feature_blob(*r.value);
  }
  detail::json meta;
  meta["format"] = "talkit.checkpoint";
  meta["version"] = 1;
  meta["epoch"] = epoch;
  meta["seed"] = model.init_seed();
  meta["model"] = detail::model_config_to_json(model.config());
  meta["fusion"] = detail::fusion_plan_to_json(model.fusion_plan());
  meta["tensors"] = std::move(tensors);
  const std::string header = meta.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    const std::string len = u64_le_bytes(header.size());
    out.write(len.data(), static_cast<std::streamsize>(len.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = std::move(ss).str();
  const std::string ctx = "checkpoint '" + path.string() + "'";
  if (bytes.size() < 8) throw FormatError(ctx + ": truncated length prefix");
  const std::uint64_t hlen =
      u64_from_le(reinterpret_cast<const unsigned char*>(bytes.data()));
  if (bytes.size() < 8 + hlen) throw FormatError(ctx + ": truncated metadata");
  detail::json meta = detail::json::parse(bytes.substr(8, hlen), nullptr, false);
  if (meta.is_discarded()) throw FormatError(ctx + ": metadata is not JSON");
  if (detail::get_or<std::string>(meta, "format", "", ctx) !=
      "talkit.checkpoint") {
    throw FormatError(ctx + ": not a talkit checkpoint");
  }
  const ModelConfig cfg =
      detail::model_config_from_json(meta.at("model"), ctx + ".model");
  const FusionPlan plan =
      detail::fusion_plan_from_json(meta.at("fusion"), ctx + ".fusion");
  const auto seed = detail::get_field<std::uint64_t>(meta, "seed", ctx);
  const int epoch = detail::get_field<int>(meta, "epoch", ctx);

  Checkpoint ck{Localizer(cfg, plan, seed), epoch, seed};
  auto refs = ck.model.params();
  const auto& tensors = meta.at("tensors");
  if (!tensors.is_array() || tensors.size() != refs.size()) {
    throw FormatError(ctx + ": tensor index has " +
                      std::to_string(tensors.size()) + " entries, expected " +
                      std::to_string(refs.size()));
  }
  const std::string blob = bytes.substr(8 + hlen);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = tensors[i];
    const auto name = detail::get_field<std::string>(t, "name", ctx);
    if (name != refs[i].name) {
      throw FormatError(ctx + ": tensor " + std::to_string(i) + " is '" +
                        name + "', expected '" + refs[i].name + "'");
    }
    const auto offset = detail::get_field<std::uint64_t>(t, "offset", ctx);
    const auto rows = detail::get_field<Index>(t, "rows", ctx);
    const auto cols = detail::get_field<Index>(t, "cols", ctx);
    const std::uint64_t blen =
        16 + static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 4;
    if (offset + blen > blob.size()) {
      throw FormatError(ctx + ": tensor '" + name + "' overruns the file");
    }
    Mat m = io::decode_feature_blob(blob.substr(offset, blen),
                                    ctx + " tensor '" + name + "'");
    if (m.rows() != refs[i].value->rows() || m.cols() != refs[i].value->cols()) {
      throw FormatError(ctx + ": tensor '" + name + "' has shape " +
                        std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected " +
                        std::to_string(refs[i].value->rows()) + "x" +
                        std::to_string(refs[i].value->cols()));
    }
    *refs[i].value = std::move(m);
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Config <-> JSON (shared with runconfig)
// ---------------------------------------------------------------------------

namespace detail {

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["num_classes"] = cfg.num_classes;
  j["max_seq_len"] = cfg.max_seq_len;
  j["num_levels"] = cfg.num_levels;
  j["embed_dim"] = cfg.embed_dim;
  j["num_heads"] = cfg.num_heads;
  j["attention_window"] = cfg.attention_window;
  j["downsample_stride"] = cfg.downsample_stride;
  j["downsample_mode"] =
      cfg.downsample_mode == DownsampleMode::kConv ? "conv" : "maxpool";
  j["num_embed_convs"] = cfg.num_embed_convs;
  j["num_head_convs"] = cfg.num_head_convs;
  j["head_kernel"] = cfg.head_kernel;
  if (!cfg.regression_ranges.empty()) {
    json ranges = json::array();
    for (const auto& [lo, hi] : cfg.regression_ranges) {
      if (std::isinf(hi)) {
        ranges.push_back({lo, nullptr});
      } else {
        ranges.push_back({lo, hi});
      }
    }
    j["regression_ranges"] = std::move(ranges);
  }
  return j;
}

ModelConfig model_config_from_json(const json& j, const std::string& ctx) {
  ModelConfig cfg;
  cfg.num_classes = get_or(j, "num_classes", cfg.num_classes, ctx);
  cfg.max_seq_len = get_or(j, "max_seq_len", cfg.max_seq_len, ctx);
  cfg.num_levels = get_or(j, "num_levels", cfg.num_levels, ctx);
  cfg.embed_dim = get_or(j, "embed_dim", cfg.embed_dim, ctx);
  cfg.num_heads = get_or(j, "num_heads", cfg.num_heads, ctx);
  cfg.attention_window =
      get_or(j, "attention_window", cfg.attention_window, ctx);
  cfg.downsample_stride =
      get_or(j, "downsample_stride", cfg.downsample_stride, ctx);
  const std::string mode = get_or<std::string>(j, "downsample_mode", "conv", ctx);
  if (mode == "conv") {
    cfg.downsample_mode = DownsampleMode::kConv;
  } else if (mode == "maxpool") {
    cfg.downsample_mode = DownsampleMode::kMaxPool;
  } else {
    throw ConfigError(ctx + ".downsample_mode must be 'conv' or 'maxpool'");
  }
  cfg.num_embed_convs = get_or(j, "num_embed_convs", cfg.num_embed_convs, ctx);
  cfg.num_head_convs = get_or(j, "num_head_convs", cfg.num_head_convs, ctx);
  cfg.head_kernel = get_or(j, "head_kernel", cfg.head_kernel, ctx);
  if (j.contains("regression_ranges")) {
    const auto& ranges = j.at("regression_ranges");
    if (!ranges.is_array()) {
      throw ConfigError(ctx + ".regression_ranges must be a list of [lo,hi]");
    }
    for (const auto& r : ranges) {
      if (!r.is_array() || r.size() != 2 || !r[0].is_number()) {
        throw ConfigError(ctx + ".regression_ranges entries must be [lo,hi]");
      }
      const double lo = r[0].get<double>();
      const double hi = r[1].is_null()
                            ? std::numeric_limits<double>::infinity()
                            : r[1].get<double>();
      cfg.regression_ranges.emplace_back(lo, hi);
    }
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  return cfg;
}

json fusion_plan_to_json(const FusionPlan& plan) {
  json j;
  j["mode"] = to_string(plan.mode);
  j["source_dims"] = plan.source_dims;
  j["projection_dims"] = plan.projection_dims;
  return j;
}

FusionPlan fusion_plan_from_json(const json& j, const std::string& ctx) {
  FusionPlan plan;
  plan.mode = fusion_mode_from_string(
      get_or<std::string>(j, "mode", "proj_cat", ctx));
  plan.source_dims = get_field<std::vector<int>>(j, "source_dims", ctx);
  plan.projection_dims =
      get_or<std::vector<int>>(j, "projection_dims", {}, ctx);
  try {
    plan.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  return plan;
}

}  // namespace detail

}  // namespace talkit
