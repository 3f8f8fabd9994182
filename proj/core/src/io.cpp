// SPDX-License-Identifier: Apache-2.0
#include "talkit/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace talkit::io {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kHeaderBytes = 16;
constexpr char kMagic[4] = {'T', 'K', 'F', '1'};

void append_u32_le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() +
                                     "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json parse_json_file(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  json j = json::parse(bytes, nullptr, false);
  if (j.is_discarded()) {
    throw FormatError("'" + path.string() + "' is not valid JSON");
  }
  return j;
}

const json& require_field(const json& j, const char* key,
                          const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(ctx + ": missing field '" + key + "'");
  return *it;
}

double require_number(const json& j, const char* key, const std::string& ctx) {
  const json& f = require_field(j, key, ctx);
  if (!f.is_number()) throw FormatError(ctx + ": field '" + key +
                                        "' must be a number");
  return f.get<double>();
}

int require_int(const json& j, const char* key, const std::string& ctx) {
  const json& f = require_field(j, key, ctx);
  if (!f.is_number_integer()) throw FormatError(ctx + ": field '" + key +
                                                "' must be an integer");
  return f.get<int>();
}

std::string require_string(const json& j, const char* key,
                           const std::string& ctx) {
  const json& f = require_field(j, key, ctx);
  if (!f.is_string()) throw FormatError(ctx + ": field '" + key +
                                        "' must be a string");
  return f.get<std::string>();
}

struct FeatureHeader {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

FeatureHeader parse_feature_header(const std::string& bytes,
                                   const std::string& ctx) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError(ctx + ": truncated header (" +
                      std::to_string(bytes.size()) + " bytes)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kMagic, 4) != 0) {
    throw FormatError(ctx + ": bad magic, expected TKF1");
  }
  if (p[4] != kDtypeFloat32LE) {
    throw FormatError(ctx + ": unsupported dtype_code " +
                      std::to_string(static_cast<int>(p[4])));
  }
  FeatureHeader h;
  h.rows = read_u32_le(p + 5);
  h.cols = read_u32_le(p + 9);
  if (h.rows == 0 || h.cols == 0) {
    throw FormatError(ctx + ": T and D must be positive");
  }
  return h;
}

// Shared ordering for serialized detection lists: score descending, then
// earlier start, then smaller label, then earlier end.
bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start() != b.segment.start())
    return a.segment.start() < b.segment.start();
  if (a.label_id != b.label_id) return a.label_id < b.label_id;
  return a.segment.end() < b.segment.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

std::string encode_feature_blob(const Mat& m) {
  if (m.rows() <= 0 || m.cols() <= 0) {
    throw ValidationError("feature matrix must be nonempty");
  }
  if (!m.allFinite()) {
    throw ValidationError("feature matrix contains non-finite values");
  }
  std::string buf;
  buf.reserve(kHeaderBytes +
              static_cast<std::size_t>(m.size()) * sizeof(float));
  buf.append(kMagic, 4);
  buf.push_back(static_cast<char>(kDtypeFloat32LE));
  append_u32_le(buf, static_cast<std::uint32_t>(m.rows()));
  append_u32_le(buf, static_cast<std::uint32_t>(m.cols()));
  buf.append(3, '\0');
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(
          static_cast<float>(m(r, c)));
      append_u32_le(buf, bits);
    }
  }
  return buf;
}

Mat decode_feature_blob(const std::string& bytes, const std::string& ctx) {
  const FeatureHeader h = parse_feature_header(bytes, ctx);
  const std::uint64_t expected =
      kHeaderBytes + std::uint64_t{h.rows} * h.cols * sizeof(float);
  if (bytes.size() != expected) {
    throw FormatError(ctx + ": payload length " +
                      std::to_string(bytes.size() - kHeaderBytes) +
                      " does not match T*D*4 = " +
                      std::to_string(expected - kHeaderBytes));
  }
  Mat m(static_cast<Index>(h.rows), static_cast<Index>(h.cols));
  const auto* p =
      reinterpret_cast<const unsigned char*>(bytes.data()) + kHeaderBytes;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<double>(
          std::bit_cast<float>(read_u32_le(p)));
      p += 4;
    }
  }
  return m;
}

void write_feature_file(const fs::path& path, const Mat& m) {
  write_file_bytes(path, encode_feature_blob(m));
}

Mat read_feature_file(const fs::path& path) {
  return decode_feature_blob(read_file_bytes(path), "'" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

Dataset read_annotations(const fs::path& path) {
  const json j = parse_json_file(path);
  const std::string ctx = "'" + path.string() + "'";
  Dataset ds;
  ds.num_classes = require_int(j, "num_classes", ctx);
  if (ds.num_classes <= 0) {
    throw ValidationError(ctx + ": num_classes must be positive");
  }
  const json& videos = require_field(j, "videos", ctx);
  if (!videos.is_array()) throw FormatError(ctx + ": 'videos' must be a list");
  for (const auto& v : videos) {
    const std::string vid = require_string(v, "video_id", ctx);
    const std::string vctx = ctx + " video '" + vid + "'";
    const double duration = require_number(v, "duration", vctx);
    const json& insts = require_field(v, "instances", vctx);
    if (!insts.is_array()) {
      throw FormatError(vctx + ": 'instances' must be a list");
    }
    std::vector<ActionInstance> instances;
    instances.reserve(insts.size());
    for (std::size_t i = 0; i < insts.size(); ++i) {
      const std::string ictx = vctx + " instance " + std::to_string(i);
      const int label = require_int(insts[i], "label_id", ictx);
      if (label < 0 || label >= ds.num_classes) {
        throw ValidationError(ictx + ": label_id " + std::to_string(label) +
                              " out of range [0, " +
                              std::to_string(ds.num_classes) + ")");
      }
      const double start = require_number(insts[i], "start", ictx);
      const double end = require_number(insts[i], "end", ictx);
      try {
        instances.emplace_back(label, Segment(start, end));
      } catch (const ValidationError& e) {
        throw ValidationError(ictx + ": " + e.what());
      }
    }
    try {
      ds.videos.emplace_back(vid, duration, std::move(instances));
    } catch (const ValidationError& e) {
      throw ValidationError(ctx + ": " + e.what());
    }
  }
  return ds;
}

void write_annotations(const fs::path& path, const Dataset& ds) {
  ordered_json root;
  ordered_json videos = ordered_json::array();
  for (const auto& v : ds.videos) {
    ordered_json insts = ordered_json::array();
    for (const auto& inst : v.instances()) {
      insts.push_back({{"label_id", inst.label_id},
                       {"start", inst.segment.start()},
                       {"end", inst.segment.end()}});
    }
    videos.push_back({{"video_id", v.video_id()},
                      {"duration", v.duration()},
                      {"instances", std::move(insts)}});
  }
  root["videos"] = std::move(videos);
  root["num_classes"] = ds.num_classes;
  write_file_bytes(path, root.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

void write_detections(const fs::path& path, const DetectionMap& results,
                      int prediction_cap) {
  ordered_json root;
  root["version"] = "1.0";
  ordered_json body = ordered_json::object();
  for (const auto& [vid, dets] : results) {
    if (static_cast<int>(dets.size()) > prediction_cap) {
      throw ValidationError("video '" + vid + "': " +
                            std::to_string(dets.size()) +
                            " detections exceed the prediction cap of " +
                            std::to_string(prediction_cap));
    }
    std::vector<Detection> sorted = dets;
    std::sort(sorted.begin(), sorted.end(), detection_before);
    ordered_json list = ordered_json::array();
    for (const auto& d : sorted) {
      list.push_back({{"label_id", d.label_id},
                      {"score", d.score},
                      {"segment", {d.segment.start(), d.segment.end()}}});
    }
    body[vid] = std::move(list);
  }
  root["detect_results"] = std::move(body);
  write_file_bytes(path, root.dump(2) + "\n");
}

DetectionMap read_detections(const fs::path& path, int prediction_cap) {
  const json j = parse_json_file(path);
  const std::string ctx = "'" + path.string() + "'";
  const std::string version = require_string(j, "version", ctx);
  if (version != "1.0") {
    throw FormatError(ctx + ": unsupported version '" + version + "'");
  }
  const json& body = require_field(j, "detect_results", ctx);
  if (!body.is_object()) {
    throw FormatError(ctx + ": 'detect_results' must be an object");
  }
  DetectionMap out;
  for (const auto& [vid, list] : body.items()) {
    const std::string vctx = ctx + " video '" + vid + "'";
    if (!list.is_array()) throw FormatError(vctx + ": expected a list");
    if (static_cast<int>(list.size()) > prediction_cap) {
      throw ValidationError(vctx + ": " + std::to_string(list.size()) +
                            " detections exceed the prediction cap of " +
                            std::to_string(prediction_cap));
    }
    std::vector<Detection> dets;
    dets.reserve(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string ictx = vctx + " entry " + std::to_string(i);
      const int label = require_int(list[i], "label_id", ictx);
      const double score = require_number(list[i], "score", ictx);
      const json& seg = require_field(list[i], "segment", ictx);
      if (!seg.is_array() || seg.size() != 2 || !seg[0].is_number() ||
          !seg[1].is_number()) {
        throw FormatError(ictx + ": 'segment' must be [start, end]");
      }
      try {
        dets.emplace_back(label, score,
                          Segment(seg[0].get<double>(), seg[1].get<double>()));
      } catch (const ValidationError& e) {
        throw ValidationError(ictx + ": " + e.what());
      }
    }
    out.emplace(vid, std::move(dets));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

long expected_num_clips(double duration, double fps, int frames_per_clip,
                        int clip_stride_frames) {
  if (!(duration > 0.0) || !(fps > 0.0) || frames_per_clip <= 0 ||
      clip_stride_frames <= 0) {
    throw ValidationError("clip geometry requires positive duration, fps, "
                          "frames_per_clip and clip_stride_frames");
  }
  const long frames = std::lround(duration * fps);
  if (frames < frames_per_clip) {
    throw ValidationError("video too short for a single clip: " +
                          std::to_string(frames) + " frames < " +
                          std::to_string(frames_per_clip));
  }
  return (frames - frames_per_clip) / clip_stride_frames + 1;
}

Manifest read_manifest(const fs::path& path, bool verify_features) {
  const json j = parse_json_file(path);
  const std::string ctx = "'" + path.string() + "'";
  const json& videos = require_field(j, "videos", ctx);
  if (!videos.is_array()) throw FormatError(ctx + ": 'videos' must be a list");
  Manifest m;
  for (const auto& v : videos) {
    ManifestVideo mv;
    mv.video_id = require_string(v, "video_id", ctx);
    const std::string vctx = ctx + " video '" + mv.video_id + "'";
    mv.duration = require_number(v, "duration", vctx);
    mv.fps = require_number(v, "fps", vctx);
    if (!(mv.duration > 0.0) || !(mv.fps > 0.0)) {
      throw ValidationError(vctx + ": duration and fps must be positive");
    }
    const json& sources = require_field(v, "sources", vctx);
    if (!sources.is_array() || sources.empty()) {
      throw FormatError(vctx + ": 'sources' must be a nonempty list");
    }
    for (const auto& s : sources) {
      ManifestSource ms;
      ms.name = require_string(s, "name", vctx);
      const std::string sctx = vctx + " source '" + ms.name + "'";
      ms.path = require_string(s, "path", sctx);
      ms.frames_per_clip = require_int(s, "frames_per_clip", sctx);
      ms.clip_stride_frames = require_int(s, "clip_stride_frames", sctx);
      ms.dim = require_int(s, "dim", sctx);
      if (ms.frames_per_clip <= 0 || ms.clip_stride_frames <= 0 ||
          ms.dim <= 0) {
        throw ValidationError(sctx + ": geometry fields must be positive");
      }
      if (verify_features) {
        const fs::path fpath = path.parent_path() / ms.path;
        const std::string bytes = read_file_bytes(fpath);
        const FeatureHeader h =
            parse_feature_header(bytes, "'" + fpath.string() + "'");
        if (static_cast<int>(h.cols) != ms.dim) {
          throw ValidationError(sctx + ": declared dim " +
                                std::to_string(ms.dim) +
                                " does not match file D " +
                                std::to_string(h.cols));
        }
        const long want = expected_num_clips(mv.duration, mv.fps,
                                             ms.frames_per_clip,
                                             ms.clip_stride_frames);
        if (static_cast<long>(h.rows) != want) {
          throw ValidationError(sctx + ": geometry implies T = " +
                                std::to_string(want) + " but file has T = " +
                                std::to_string(h.rows));
        }
      }
      mv.sources.push_back(std::move(ms));
    }
    m.videos.push_back(std::move(mv));
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  ordered_json videos = ordered_json::array();
  for (const auto& v : m.videos) {
    ordered_json sources = ordered_json::array();
    for (const auto& s : v.sources) {
      sources.push_back({{"name", s.name},
                         {"path", s.path},
                         {"frames_per_clip", s.frames_per_clip},
                         {"clip_stride_frames", s.clip_stride_frames},
                         {"dim", s.dim}});
    }
    videos.push_back({{"video_id", v.video_id},
                      {"duration", v.duration},
                      {"fps", v.fps},
                      {"sources", std::move(sources)}});
  }
  ordered_json root;
  root["videos"] = std::move(videos);
  write_file_bytes(path, root.dump(2) + "\n");
}

}  // namespace talkit::io
