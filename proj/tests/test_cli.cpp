#include "cmckit/cli.hpp"

#include "cmckit/feature_table.hpp"
#include "cmckit/signal_io.hpp"
#include "cmckit/state_engine.hpp"
#include "cmckit/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace cmckit;
using testutil::TempDir;

namespace {

int cli(std::initializer_list<std::string> args) {
  std::vector<std::string> storage{"cmckit"};
  storage.insert(storage.end(), args);
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("help exits 0, bad usage exits 1") {
  CHECK(cli({"--help"}) == 0);
  for (const char* sub : {"synth", "preprocess", "psd", "cmc", "stats", "topomap", "train",
                          "classify", "simulate", "pipeline"}) {
    CHECK(cli({sub, "--help"}) == 0);
  }
  CHECK(cli({"does-not-exist"}) == 1);
  CHECK(cli({"cmc", "--nope"}) == 1);
  CHECK(cli({}) == 1);
}

TEST_CASE("synth requires an explicit seed") {
  TempDir dir;
  CHECK(cli({"synth", "--output", dir.file("pair"), "--duration", "2"}) == 1);
  CHECK(cli({"synth", "--output", dir.file("pair"), "--duration", "2", "--seed", "7"}) == 0);
  const Recording rec = load_recording(dir.file("pair.json"), dir.file("pair.csv"));
  CHECK(rec.n_channels() == 2);
  CHECK(rec.n_samples() == 512);
}

TEST_CASE("synth then cmc reproduces the coupling through the file format") {
  TempDir dir;
  REQUIRE(cli({"synth", "--output", dir.file("pair"), "--duration", "30", "--band", "15:30",
               "--snr1", "1", "--snr2", "1", "--seed", "7"}) == 0);
  REQUIRE(cli({"cmc", "--metadata", dir.file("pair.json"), "--input", dir.file("pair.csv"),
               "--eeg", "C3", "--emg", "EMG1", "--band", "15:30", "--alpha", "0.05",
               "--output", dir.file("cmc.csv")}) == 0);

  const std::string csv = testutil::read_file(dir.file("cmc.csv"));
  CHECK(csv.find("eeg,emg,band,lo_hz,hi_hz,n_segments,threshold,n_significant_bins,"
                 "significant_area,mean_coherence") == 0);
  // mean coherence sits in the last column; at snr 1 it hovers near 0.25
  const auto last_comma = csv.rfind(',');
  const double mean_coh = std::stod(csv.substr(last_comma + 1));
  CHECK(mean_coh > 0.1);
  CHECK(mean_coh < 0.45);
  CHECK(csv.find("C3,EMG1,15:30,15,30,15,") != std::string::npos);
}

TEST_CASE("validation failures leave no partial outputs") {
  TempDir dir;
  REQUIRE(cli({"synth", "--output", dir.file("pair"), "--duration", "2", "--seed", "7"}) == 0);
  // Unknown channel: fails after load, before any write.
  CHECK(cli({"cmc", "--metadata", dir.file("pair.json"), "--input", dir.file("pair.csv"),
             "--eeg", "Oz", "--emg", "EMG1", "--output", dir.file("out.csv")}) == 1);
  CHECK_FALSE(std::filesystem::exists(dir.file("out.csv")));
  // Bad band text.
  CHECK(cli({"cmc", "--metadata", dir.file("pair.json"), "--input", dir.file("pair.csv"),
             "--eeg", "C3", "--emg", "EMG1", "--band", "wat", "--output",
             dir.file("out2.csv")}) == 1);
  CHECK_FALSE(std::filesystem::exists(dir.file("out2.csv")));
  // Missing input file is an I/O error.
  CHECK(cli({"psd", "--metadata", dir.file("absent.json"), "--input", dir.file("absent.csv"),
             "--output", dir.file("psd.csv")}) == 2);
}

TEST_CASE("preprocess and psd run end to end") {
  TempDir dir;
  REQUIRE(cli({"synth", "--output", dir.file("pair"), "--duration", "10", "--seed", "3"}) == 0);
  CHECK(cli({"preprocess", "--metadata", dir.file("pair.json"), "--input",
             dir.file("pair.csv"), "--output", dir.file("clean"), "--band", "1:40",
             "--notch", "0"}) == 0);
  CHECK(std::filesystem::exists(dir.file("clean.json")));
  CHECK(std::filesystem::exists(dir.file("clean.csv")));
  CHECK(std::filesystem::exists(dir.file("clean.mask.csv")));

  CHECK(cli({"psd", "--metadata", dir.file("clean.json"), "--input", dir.file("clean.csv"),
             "--output", dir.file("psd.csv")}) == 0);
  const std::string psd = testutil::read_file(dir.file("psd.csv"));
  CHECK(psd.find("freq_hz,C3,EMG1") == 0);
}

TEST_CASE("train, classify and simulate round trip through files") {
  TempDir dir;
  FeatureSchema schema;
  schema.eeg_channels = {"Fpz", "Fz", "F3", "F4", "C3", "Cz", "C4", "Pz"};

  auto to_table = [&](const std::vector<FeatureVector>& intu,
                      const std::vector<FeatureVector>& intl, bool labeled) {
    FeatureTable t;
    t.columns = schema.keys();
    t.values.resize(static_cast<Eigen::Index>(intu.size() + intl.size()), schema.size());
    Eigen::Index r = 0;
    for (const auto& fv : intu) {
      t.values.row(r++) = fv.values.transpose();
      if (labeled) t.row_labels.push_back("Intuitive");
    }
    for (const auto& fv : intl) {
      t.values.row(r++) = fv.values.transpose();
      if (labeled) t.row_labels.push_back("Intellectual");
    }
    return t;
  };

  const auto train_i = gen_state_features(State::Intuitive, 80, 4.0, 101, schema);
  const auto train_l = gen_state_features(State::Intellectual, 80, 4.0, 102, schema);
  write_feature_table(to_table(train_i, train_l, true), dir.file("train.csv"));

  const auto test_i = gen_state_features(State::Intuitive, 40, 4.0, 103, schema);
  const auto test_l = gen_state_features(State::Intellectual, 40, 4.0, 104, schema);
  write_feature_table(to_table(test_i, test_l, false), dir.file("test.csv"));

  REQUIRE(cli({"train", "--input", dir.file("train.csv"), "--output", dir.file("tree.json"),
               "--depth", "3", "--seed", "5"}) == 0);
  REQUIRE(cli({"classify", "--input", dir.file("test.csv"), "--model", dir.file("tree.json"),
               "--output", dir.file("labels.csv")}) == 0);

  const std::string labels = testutil::read_file(dir.file("labels.csv"));
  CHECK(labels.find("row,label,confidence") == 0);
  size_t correct = 0;
  size_t row = 0;
  std::istringstream in(labels);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const bool expect_intuitive = row < 40;
    if (expect_intuitive && line.find(",Intuitive,") != std::string::npos) ++correct;
    if (!expect_intuitive && line.find(",Intellectual,") != std::string::npos) ++correct;
    ++row;
  }
  CHECK(row == 80);
  CHECK(static_cast<double>(correct) / static_cast<double>(row) >= 0.9);

  // Rule-based classification against a calibration table.
  const auto calib_i = gen_state_features(State::Intuitive, 30, 0.0, 105, schema);
  const auto calib_l = gen_state_features(State::Intellectual, 30, 0.0, 106, schema);
  write_feature_table(to_table(calib_i, calib_l, false), dir.file("calib.csv"));
  REQUIRE(cli({"classify", "--input", dir.file("test.csv"), "--calibration",
               dir.file("calib.csv"), "--output", dir.file("rule_labels.csv")}) == 0);
  CHECK(testutil::read_file(dir.file("rule_labels.csv")).find("row,label,confidence") == 0);

  // Feature-stream simulation over the same files.
  REQUIRE(cli({"simulate", "--features", dir.file("test.csv"), "--calibration",
               dir.file("calib.csv"), "--output", dir.file("log.ndjson"),
               "--hysteresis-k", "5"}) == 0);
  const std::string log = testutil::read_file(dir.file("log.ndjson"));
  CHECK(log.find("{\"t_s\": 0, \"label\": ") == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 80);
}

TEST_CASE("config file seeds defaults and flags override") {
  TempDir dir;
  std::ofstream(dir.file("cfg.json")) << R"({"seed": 11, "alpha": 0.01})";
  // Seed comes from the config, so --seed is not required.
  CHECK(cli({"synth", "--config", dir.file("cfg.json"), "--output", dir.file("a"),
             "--duration", "2"}) == 0);
  // A flag must beat the config: different seeds give different bytes.
  CHECK(cli({"synth", "--config", dir.file("cfg.json"), "--output", dir.file("b"),
             "--duration", "2", "--seed", "12"}) == 0);
  CHECK(cli({"synth", "--output", dir.file("c"), "--duration", "2", "--seed", "11"}) == 0);
  const std::string a = testutil::read_file(dir.file("a.csv"));
  CHECK(a != testutil::read_file(dir.file("b.csv")));
  CHECK(a == testutil::read_file(dir.file("c.csv")));

  std::ofstream(dir.file("bad.json")) << R"({"alpha": 1.5})";
  CHECK(cli({"synth", "--config", dir.file("bad.json"), "--output", dir.file("d"),
             "--duration", "2", "--seed", "1"}) == 1);
  std::ofstream(dir.file("unknown.json")) << R"({"alpa": 0.05})";
  CHECK(cli({"synth", "--config", dir.file("unknown.json"), "--output", dir.file("e"),
             "--duration", "2", "--seed", "1"}) == 1);
}

TEST_CASE("topomap subcommand renders grid and image") {
  TempDir dir;
  std::mt19937_64 rng(107);
  Recording rec = testutil::random_recording(rng, 8, 1, 256 * 8, 256.0);
  save_recording(rec, dir.file("rec.json"), dir.file("rec.csv"));
  REQUIRE(cli({"topomap", "--metadata", dir.file("rec.json"), "--input", dir.file("rec.csv"),
               "--band", "alpha", "--output", dir.file("map"), "--resolution", "32"}) == 0);
  CHECK(testutil::read_file(dir.file("map.ppm")).substr(0, 3) == "P6\n");
  const std::string grid = testutil::read_file(dir.file("map.csv"));
  CHECK(std::count(grid.begin(), grid.end(), '\n') == 32);
}

TEST_CASE("pipeline runs twice byte-identically") {
  TempDir dir;
  std::mt19937_64 rng(108);
  std::vector<std::string> entries;
  for (int i = 0; i < 4; ++i) {
    Recording rec = testutil::random_recording(rng, 8, 1, 256 * 12, 256.0);
    const std::string stem = dir.file("rec" + std::to_string(i));
    save_recording(rec, stem + ".json", stem + ".csv");
    const std::string group = i < 2 ? "expert" : "novice";
    entries.push_back("{\"metadata\": \"" + stem + ".json\", \"data\": \"" + stem +
                      ".csv\", \"group\": \"" + group + "\"}");
  }

  auto config_for = [&](const std::string& out_dir) {
    std::string cfg = R"({
      "bandpass_lo_hz": 1.0, "bandpass_hi_hz": 40.0, "notch_hz": 0.0,
      "window_s": 1.0, "step_s": 0.5, "calibration_s": 4.0,
      "pipeline": { "output_dir": ")" + out_dir + R"(", "recordings": [)";
    for (size_t i = 0; i < entries.size(); ++i) {
      if (i) cfg += ',';
      cfg += entries[i];
    }
    cfg += "] } }";
    return cfg;
  };
  std::ofstream(dir.file("p1.json")) << config_for(dir.file("out1"));
  std::ofstream(dir.file("p2.json")) << config_for(dir.file("out2"));

  REQUIRE(cli({"pipeline", "--config", dir.file("p1.json")}) == 0);
  REQUIRE(cli({"pipeline", "--config", dir.file("p2.json")}) == 0);

  namespace fs = std::filesystem;
  size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir.file("out1"))) {
    const auto name = entry.path().filename().string();
    CHECK(testutil::read_file(entry.path().string()) ==
          testutil::read_file((fs::path(dir.file("out2")) / name).string()));
    ++compared;
  }
  CHECK(compared >= 11);  // 2 tables + comparison + 4 maps x2 + 4 sim logs
  CHECK(fs::exists(fs::path(dir.file("out1")) / "comparison.csv"));
  CHECK(fs::exists(fs::path(dir.file("out1")) / "topomap_expert_alpha.ppm"));
}
