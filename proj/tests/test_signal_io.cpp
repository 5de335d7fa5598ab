#include "cmckit/signal_io.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace cmckit;
using testutil::TempDir;

TEST_CASE("load echoes dimensions for a 9-channel hour-of-work recording") {
  TempDir dir;
  std::mt19937_64 rng(11);
  Recording rec = testutil::random_recording(rng, 8, 1, 61440, 1024.0);
  rec.markers.push_back({"trenching", 0, 30000});
  rec.markers.push_back({"trench_finding", 30000, 61440});
  save_recording(rec, dir.file("m.json"), dir.file("d.csv"));

  const Recording loaded = load_recording(dir.file("m.json"), dir.file("d.csv"));
  CHECK(loaded.n_channels() == 9);
  CHECK(loaded.n_samples() == 61440);
  CHECK(loaded.sample_rate_hz == doctest::Approx(1024.0));
  CHECK(loaded.channels[0].name == "Fpz");
  CHECK(loaded.channels[8].kind == ChannelKind::EMG);
  CHECK(loaded.markers.size() == 2);
}

TEST_CASE("header order must match metadata channel order") {
  TempDir dir;
  std::mt19937_64 rng(12);
  Recording rec = testutil::random_recording(rng, 2, 0, 4, 256.0);  // Fpz, Fz
  save_recording(rec, dir.file("m.json"), dir.file("d.csv"));

  // Swap the two header names.
  std::string text = testutil::read_file(dir.file("d.csv"));
  text.replace(0, text.find('\n'), "Fz,Fpz");
  std::ofstream(dir.file("d.csv"), std::ios::binary) << text;

  CHECK_THROWS_AS(load_recording(dir.file("m.json"), dir.file("d.csv")), SchemaError);
}

TEST_CASE("malformed inputs carry useful errors") {
  TempDir dir;
  std::mt19937_64 rng(13);
  Recording rec = testutil::random_recording(rng, 1, 1, 3, 100.0);
  save_recording(rec, dir.file("m.json"), dir.file("d.csv"));

  SUBCASE("broken JSON reports the line") {
    std::ofstream(dir.file("bad.json"), std::ios::binary) << "{\n  \"version\": 1,\n  oops\n}";
    try {
      load_recording(dir.file("bad.json"), dir.file("d.csv"));
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.line() >= 3);
    }
  }
  SUBCASE("non-numeric cell is a format error with line number") {
    std::string text = testutil::read_file(dir.file("d.csv"));
    const auto pos = text.find('\n') + 1;
    text.replace(pos, text.find(',', pos) - pos, "abc");
    std::ofstream(dir.file("d.csv"), std::ios::binary) << text;
    CHECK_THROWS_AS(load_recording(dir.file("m.json"), dir.file("d.csv")), FormatError);
  }
  SUBCASE("non-finite value is a data error") {
    std::string text = testutil::read_file(dir.file("d.csv"));
    const auto pos = text.find('\n') + 1;
    text.replace(pos, text.find(',', pos) - pos, "inf");
    std::ofstream(dir.file("d.csv"), std::ios::binary) << text;
    CHECK_THROWS_AS(load_recording(dir.file("m.json"), dir.file("d.csv")), DataError);
  }
  SUBCASE("missing file is an IO error") {
    CHECK_THROWS_AS(load_recording(dir.file("absent.json"), dir.file("d.csv")), IoError);
  }
}

TEST_CASE("save writes the documented shapes") {
  TempDir dir;
  Recording rec;
  rec.sample_rate_hz = 10.0;
  rec.channels = {{"C3", ChannelKind::EEG, standard_electrode_position("C3")},
                  {"EMG1", ChannelKind::EMG, {}}};
  rec.samples.resize(3, 2);
  rec.samples << 1.5f, -2.0f, 0.25f, 3.0f, -0.5f, 7.0f;
  save_recording(rec, dir.file("m.json"), dir.file("d.csv"));

  const std::string csv = testutil::read_file(dir.file("d.csv"));
  CHECK(csv == "C3,EMG1\n1.5,-2\n0.25,3\n-0.5,7\n");

  const std::string meta = testutil::read_file(dir.file("m.json"));
  CHECK(meta.find("\"markers\": []") != std::string::npos);
  CHECK(meta.find("\"version\": 1") != std::string::npos);
}

TEST_CASE("round trip is bit identical and byte deterministic") {
  TempDir dir;
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 20; ++trial) {
    Recording rec = testutil::random_recording(rng, 1 + static_cast<int>(rng() % 8),
                                               static_cast<int>(rng() % 2), 64, 256.0);
    if (trial % 2) rec.markers.push_back({"rest", 5, 40});
    save_recording(rec, dir.file("m.json"), dir.file("d.csv"));
    const Recording back = load_recording(dir.file("m.json"), dir.file("d.csv"));

    REQUIRE(back.n_samples() == rec.n_samples());
    REQUIRE(back.n_channels() == rec.n_channels());
    CHECK(back.samples == rec.samples);  // float32 survives 9 significant digits exactly
    CHECK(back.sample_rate_hz == rec.sample_rate_hz);
    CHECK(back.markers.size() == rec.markers.size());
    for (size_t c = 0; c < rec.channels.size(); ++c) {
      CHECK(back.channels[c].name == rec.channels[c].name);
      CHECK(back.channels[c].kind == rec.channels[c].kind);
      if (rec.channels[c].position) {
        CHECK((*back.channels[c].position - *rec.channels[c].position).norm() < 1e-12);
      }
    }

    save_recording(back, dir.file("m2.json"), dir.file("d2.csv"));
    CHECK(testutil::read_file(dir.file("d.csv")) == testutil::read_file(dir.file("d2.csv")));
    CHECK(testutil::read_file(dir.file("m.json")) == testutil::read_file(dir.file("m2.json")));
  }
}

TEST_CASE("slice_by_marker") {
  std::mt19937_64 rng(99);
  Recording rec = testutil::random_recording(rng, 2, 1, 1000, 250.0);
  rec.markers.push_back({"all", 0, 1000});
  rec.markers.push_back({"mid", 100, 200});
  rec.markers.push_back({"tail", 150, 900});

  SUBCASE("whole-recording marker is the identity") {
    const Recording s = slice_by_marker(rec, "all");
    CHECK(s.samples == rec.samples);
    CHECK(s.sample_rate_hz == rec.sample_rate_hz);
    CHECK(s.channels.size() == rec.channels.size());
  }
  SUBCASE("interval extraction and marker rebasing") {
    const Recording s = slice_by_marker(rec, "mid");
    CHECK(s.n_samples() == 100);
    CHECK(s.samples == rec.samples.middleRows(100, 100));
    // "tail" intersects [100, 200) as [150, 200) -> rebased to [50, 100).
    bool found = false;
    for (const auto& m : s.markers) {
      if (m.name == "tail") {
        found = true;
        CHECK(m.start_sample == 50);
        CHECK(m.end_sample == 100);
      }
    }
    CHECK(found);
  }
  SUBCASE("unknown name") {
    CHECK_THROWS_AS(slice_by_marker(rec, "nope"), NotFoundError);
  }
  SUBCASE("duplicate names are ambiguous") {
    rec.markers.push_back({"mid", 300, 400});
    CHECK_THROWS_AS(slice_by_marker(rec, "mid"), AmbiguityError);
  }
  SUBCASE("slice of slice equals slice of the composed range") {
    std::mt19937_64 rng2(7);
    for (int trial = 0; trial < 25; ++trial) {
      const auto a = static_cast<Eigen::Index>(rng2() % 800);
      const auto b = a + 2 + static_cast<Eigen::Index>(rng2() % (1000 - a - 2));
      const auto inner_lo = static_cast<Eigen::Index>(rng2() % (b - a - 1));
      const auto inner_hi = inner_lo + 1 + static_cast<Eigen::Index>(rng2() % (b - a - inner_lo - 1));
      Recording base = rec;
      base.markers = {{"outer", a, b}};
      Recording once = slice_by_marker(base, "outer");
      once.markers.push_back({"inner", inner_lo, inner_hi});
      const Recording twice = slice_by_marker(once, "inner");

      Recording direct_base = rec;
      direct_base.markers = {{"direct", a + inner_lo, a + inner_hi}};
      const Recording direct = slice_by_marker(direct_base, "direct");
      CHECK(twice.samples == direct.samples);
    }
  }
}
