// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "talkit/io.hpp"
#include "talkit/rng.hpp"

using namespace talkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "talkit_io_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Mat random_matrix(Index rows, Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      // float32-representable so the round trip is exact
      m(r, c) = static_cast<double>(static_cast<float>(rng.normal()));
    }
  }
  return m;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("feature file round trip") {
  Rng rng(3);
  const auto path = temp_dir() / "roundtrip.tkf";
  const Mat m = random_matrix(7, 3, rng);
  io::write_feature_file(path, m);
  const Mat back = io::read_feature_file(path);
  REQUIRE(back.rows() == 7);
  REQUIRE(back.cols() == 3);
  CHECK(back == m);
}

TEST_CASE("hand-built feature file decodes as written") {
  // header: TKF1, dtype 0, T=2, D=2, 3 pad bytes; payload 1,2,3,4 (f32 LE)
  std::string bytes = "TKF1";
  bytes.push_back('\0');
  const auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u32(2);
  put_u32(2);
  bytes.append(3, '\0');
  for (float f : {1.0f, 2.0f, 3.0f, 4.0f}) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(bits);
  }
  const auto path = temp_dir() / "hand.tkf";
  spit(path, bytes);
  const Mat m = io::read_feature_file(path);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 1) == 2.0);
  CHECK(m(1, 0) == 3.0);
  CHECK(m(1, 1) == 4.0);
}

TEST_CASE("feature reader rejects malformed files") {
  Rng rng(4);
  const auto dir = temp_dir();
  const auto good = dir / "good.tkf";
  io::write_feature_file(good, random_matrix(3, 2, rng));
  const std::string bytes = slurp(good);

  SUBCASE("truncated payload") {
    spit(dir / "bad.tkf", bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(io::read_feature_file(dir / "bad.tkf"), FormatError);
  }
  SUBCASE("header-only file with declared payload") {
    spit(dir / "bad.tkf", bytes.substr(0, 16));
    CHECK_THROWS_AS(io::read_feature_file(dir / "bad.tkf"), FormatError);
  }
  SUBCASE("trailing bytes") {
    spit(dir / "bad.tkf", bytes + "xx");
    CHECK_THROWS_AS(io::read_feature_file(dir / "bad.tkf"), FormatError);
  }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    spit(dir / "bad.tkf", b);
    CHECK_THROWS_AS(io::read_feature_file(dir / "bad.tkf"), FormatError);
  }
  SUBCASE("unknown dtype") {
    std::string b = bytes;
    b[4] = 1;
    spit(dir / "bad.tkf", b);
    CHECK_THROWS_AS(io::read_feature_file(dir / "bad.tkf"), FormatError);
  }
  SUBCASE("zero dimension") {
    std::string b = bytes;
    b[5] = b[6] = b[7] = b[8] = 0;  // T = 0
    spit(dir / "bad.tkf", b);
    CHECK_THROWS_AS(io::read_feature_file(dir / "bad.tkf"), FormatError);
  }
}

TEST_CASE("annotations round trip and validation") {
  const auto dir = temp_dir();
  SUBCASE("empty videos list") {
    spit(dir / "a.json", R"({"videos": [], "num_classes": 4})");
    const auto ds = io::read_annotations(dir / "a.json");
    CHECK(ds.videos.empty());
    CHECK(ds.num_classes == 4);
  }
  SUBCASE("one video, one instance") {
    spit(dir / "a.json",
         R"({"videos": [{"video_id": "v1", "duration": 10.0,
             "instances": [{"label_id": 0, "start": 1.0, "end": 2.5}]}],
             "num_classes": 1})");
    const auto ds = io::read_annotations(dir / "a.json");
    REQUIRE(ds.videos.size() == 1);
    CHECK(ds.videos[0].video_id() == "v1");
    CHECK(ds.videos[0].instances()[0].segment == Segment(1.0, 2.5));
  }
  SUBCASE("zero-length instance is rejected") {
    spit(dir / "a.json",
         R"({"videos": [{"video_id": "v1", "duration": 10.0,
             "instances": [{"label_id": 0, "start": 2.0, "end": 2.0}]}],
             "num_classes": 1})");
    CHECK_THROWS_AS(io::read_annotations(dir / "a.json"), ValidationError);
  }
  SUBCASE("out-of-range label is rejected with context") {
    spit(dir / "a.json",
         R"({"videos": [{"video_id": "v9", "duration": 10.0,
             "instances": [{"label_id": 3, "start": 1.0, "end": 2.0}]}],
             "num_classes": 3})");
    try {
      io::read_annotations(dir / "a.json");
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("v9") != std::string::npos);
      CHECK(msg.find("instance 0") != std::string::npos);
    }
  }
  SUBCASE("instance outside the video is rejected") {
    spit(dir / "a.json",
         R"({"videos": [{"video_id": "v1", "duration": 2.0,
             "instances": [{"label_id": 0, "start": 1.0, "end": 3.0}]}],
             "num_classes": 1})");
    CHECK_THROWS_AS(io::read_annotations(dir / "a.json"), ValidationError);
  }
  SUBCASE("write then read") {
    io::Dataset ds;
    ds.num_classes = 2;
    ds.videos.emplace_back(
        "w", 8.0,
        std::vector<ActionInstance>{ActionInstance(1, Segment(0.5, 2.0)),
                                    ActionInstance(0, Segment(3.0, 8.0))});
    io::write_annotations(dir / "w.json", ds);
    const auto back = io::read_annotations(dir / "w.json");
    REQUIRE(back.videos.size() == 1);
    CHECK(back.num_classes == 2);
    CHECK(back.videos[0].duration() == 8.0);
    CHECK(back.videos[0].instances()[1].segment == Segment(3.0, 8.0));
  }
}

TEST_CASE("detections format") {
  const auto dir = temp_dir();
  SUBCASE("empty map serializes to the literal empty document") {
    io::write_detections(dir / "d.json", {});
    CHECK(slurp(dir / "d.json") ==
          "{\n  \"version\": \"1.0\",\n  \"detect_results\": {}\n}\n");
  }
  SUBCASE("single detection document") {
    io::DetectionMap m;
    m["v"].emplace_back(3, 0.5, Segment(1.0, 2.0));
    io::write_detections(dir / "d.json", m);
    const auto back = io::read_detections(dir / "d.json");
    REQUIRE(back.at("v").size() == 1);
    CHECK(back.at("v")[0].label_id == 3);
    CHECK(back.at("v")[0].score == 0.5);
    CHECK(back.at("v")[0].segment == Segment(1.0, 2.0));
  }
  SUBCASE("cap is enforced on write") {
    io::DetectionMap m;
    for (int i = 0; i < 2001; ++i) {
      m["v"].emplace_back(0, 0.5, Segment(i, i + 1.0));
    }
    CHECK_THROWS_AS(io::write_detections(dir / "d.json", m), ValidationError);
    m["v"].pop_back();
    io::write_detections(dir / "d.json", m);  // exactly 2000 is fine
  }
  SUBCASE("deterministic bytes and score-sorted lists") {
    io::DetectionMap m;
    m["b"].emplace_back(1, 0.2, Segment(0.0, 1.0));
    m["b"].emplace_back(0, 0.9, Segment(2.0, 3.0));
    m["a"].emplace_back(2, 0.5, Segment(1.0, 4.0));
    io::write_detections(dir / "d1.json", m);
    io::write_detections(dir / "d2.json", m);
    CHECK(slurp(dir / "d1.json") == slurp(dir / "d2.json"));
    const auto back = io::read_detections(dir / "d1.json");
    CHECK(back.at("b")[0].score == 0.9);  // sorted descending
  }
  SUBCASE("score round-trips at full precision") {
    io::DetectionMap m;
    m["v"].emplace_back(0, 0.12345678901234567, Segment(0.0, 1.0));
    io::write_detections(dir / "d.json", m);
    const auto back = io::read_detections(dir / "d.json");
    CHECK(back.at("v")[0].score == 0.12345678901234567);
  }
  SUBCASE("reader rejects invalid content") {
    spit(dir / "d.json", R"({"version": "2.0", "detect_results": {}})");
    CHECK_THROWS_AS(io::read_detections(dir / "d.json"), FormatError);
    spit(dir / "d.json",
         R"({"version": "1.0", "detect_results":
            {"v": [{"label_id": 0, "score": 1.5, "segment": [0, 1]}]}})");
    CHECK_THROWS_AS(io::read_detections(dir / "d.json"), ValidationError);
    spit(dir / "d.json",
         R"({"version": "1.0", "detect_results":
            {"v": [{"label_id": 0, "score": 0.5, "segment": [2, 1]}]}})");
    CHECK_THROWS_AS(io::read_detections(dir / "d.json"), ValidationError);
  }
}

TEST_CASE("round-trip fuzz across the three formats") {
  Rng rng(99);
  const auto dir = temp_dir();
  for (int iter = 0; iter < 60; ++iter) {
    // features
    const Mat m = random_matrix(1 + rng.uniform_int(0, 8),
                                1 + rng.uniform_int(0, 5), rng);
    io::write_feature_file(dir / "f.tkf", m);
    CHECK(io::read_feature_file(dir / "f.tkf") == m);

    // annotations
    io::Dataset ds;
    ds.num_classes = 1 + static_cast<int>(rng.uniform_int(0, 4));
    const int n_videos = static_cast<int>(rng.uniform_int(0, 3));
    for (int v = 0; v < n_videos; ++v) {
      const double dur = rng.uniform(5.0, 30.0);
      std::vector<ActionInstance> insts;
      const int n = static_cast<int>(rng.uniform_int(0, 4));
      for (int i = 0; i < n; ++i) {
        const double s = rng.uniform(0.0, dur - 1.0);
        const double e = s + rng.uniform(0.1, dur - s);
        insts.emplace_back(
            static_cast<int>(rng.uniform_int(0, ds.num_classes - 1)),
            Segment(s, std::min(e, dur)));
      }
      ds.videos.emplace_back("v" + std::to_string(v), dur, std::move(insts));
    }
    io::write_annotations(dir / "a.json", ds);
    const auto ds2 = io::read_annotations(dir / "a.json");
    REQUIRE(ds2.videos.size() == ds.videos.size());
    for (std::size_t v = 0; v < ds.videos.size(); ++v) {
      CHECK(ds2.videos[v].duration() == ds.videos[v].duration());
      REQUIRE(ds2.videos[v].instances().size() ==
              ds.videos[v].instances().size());
      for (std::size_t i = 0; i < ds.videos[v].instances().size(); ++i) {
        CHECK(ds2.videos[v].instances()[i].segment ==
              ds.videos[v].instances()[i].segment);
      }
    }

    // detections
    io::DetectionMap dm;
    const int n_lists = static_cast<int>(rng.uniform_int(0, 3));
    for (int v = 0; v < n_lists; ++v) {
      auto& list = dm["v" + std::to_string(v)];
      const int n = static_cast<int>(rng.uniform_int(0, 6));
      for (int i = 0; i < n; ++i) {
        const double s = rng.uniform(0.0, 20.0);
        list.emplace_back(static_cast<int>(rng.uniform_int(0, 9)),
                          rng.uniform(), Segment(s, s + rng.uniform(0.1, 5.0)));
      }
    }
    io::write_detections(dir / "d.json", dm);
    const auto dm2 = io::read_detections(dir / "d.json");
    REQUIRE(dm2.size() == dm.size());
    for (auto& [vid, list] : dm) {
      auto sorted = list;
      std::sort(sorted.begin(), sorted.end(),
                [](const Detection& a, const Detection& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.segment.start() != b.segment.start())
                    return a.segment.start() < b.segment.start();
                  if (a.label_id != b.label_id) return a.label_id < b.label_id;
                  return a.segment.end() < b.segment.end();
                });
      REQUIRE(dm2.at(vid).size() == sorted.size());
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        CHECK(dm2.at(vid)[i].score == sorted[i].score);
        CHECK(dm2.at(vid)[i].label_id == sorted[i].label_id);
        CHECK(dm2.at(vid)[i].segment == sorted[i].segment);
      }
    }
  }
}

TEST_CASE("manifest geometry validation") {
  Rng rng(5);
  const auto dir = temp_dir() / "manifest";
  fs::create_directories(dir);
  // 10 s at 30 fps = 300 frames; 32-frame clips, stride 16 -> 17 clips
  CHECK(io::expected_num_clips(10.0, 30.0, 32, 16) == 17);
  // 4-frame non-overlapping clips -> 75
  CHECK(io::expected_num_clips(10.0, 30.0, 4, 4) == 75);

  io::write_feature_file(dir / "x.tkf", random_matrix(17, 6, rng));
  io::Manifest m;
  io::ManifestVideo v;
  v.video_id = "x";
  v.duration = 10.0;
  v.fps = 30.0;
  v.sources.push_back({"s", "x.tkf", 32, 16, 6});
  m.videos.push_back(v);
  io::write_manifest(dir / "m.json", m);
  const auto back = io::read_manifest(dir / "m.json");
  REQUIRE(back.videos.size() == 1);
  CHECK(back.videos[0].sources[0].dim == 6);

  SUBCASE("dim mismatch") {
    m.videos[0].sources[0].dim = 7;
    io::write_manifest(dir / "m.json", m);
    CHECK_THROWS_AS(io::read_manifest(dir / "m.json"), ValidationError);
  }
  SUBCASE("geometry mismatch") {
    m.videos[0].sources[0].clip_stride_frames = 8;
    io::write_manifest(dir / "m.json", m);
    CHECK_THROWS_AS(io::read_manifest(dir / "m.json"), ValidationError);
  }
}

}  // TEST_SUITE
