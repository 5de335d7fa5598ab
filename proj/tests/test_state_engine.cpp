#include "cmckit/state_engine.hpp"

#include "cmckit/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace cmckit;

namespace {

FeatureSchema paper_schema() {
  FeatureSchema schema;
  schema.eeg_channels = {"Fpz", "Fz", "F3", "F4", "C3", "Cz", "C4", "Pz"};
  return schema;
}

// Baseline with all medians at `level` and unit scale.
Baseline flat_baseline(const FeatureSchema& schema, double level) {
  Baseline base;
  base.median = Eigen::VectorXd::Constant(schema.size(), level);
  base.scale = Eigen::VectorXd::Constant(schema.size(), 1.0);
  base.usable = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(schema.size(), true);
  return base;
}

// Feature vector with the four signature groups offset from `level` by the
// given deltas (alpha, beta, beta-cmc, gamma-cmc), uniformly per channel.
FeatureVector signature_vector(const FeatureSchema& schema, double level, double d_alpha,
                               double d_beta, double d_cmcb, double d_cmcg) {
  FeatureVector fv;
  fv.values.resize(schema.size());
  for (Eigen::Index c = 0; c < schema.n_channels(); ++c) {
    fv.values[schema.power_index(c, false)] = level + d_alpha;
    fv.values[schema.power_index(c, true)] = level + d_beta;
    fv.values[schema.cmc_index(c, false)] = level + d_cmcb;
    fv.values[schema.cmc_index(c, true)] = level + d_cmcg;
  }
  return fv;
}

Epoch epoch_of(const Eigen::MatrixXd& samples, double fs, Eigen::Index start = 0) {
  Epoch e;
  e.start_sample = start;
  e.sample_rate_hz = fs;
  e.samples = samples;
  return e;
}

}  // namespace

TEST_CASE("extract_features") {
  FeatureSchema schema;
  schema.eeg_channels = {"C3"};
  const double fs = 256.0;

  SUBCASE("zero windows give all-zero features") {
    const FeatureVector fv = extract_features(epoch_of(Eigen::MatrixXd::Zero(512, 1), fs),
                                              epoch_of(Eigen::MatrixXd::Zero(512, 1), fs),
                                              schema);
    CHECK(fv.values.size() == 4);
    CHECK(fv.values.lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("schema length is 4 features per EEG channel") {
    const FeatureSchema full = paper_schema();
    CHECK(full.size() == 32);
    CHECK(full.keys().size() == 32);
    CHECK(full.keys()[0].column_name() == "Fpz:alpha:band_power");
    CHECK(full.keys()[16].column_name() == "Fpz:beta:cmc_area");
  }
  SUBCASE("a strongly coupled beta source shows up as significant area") {
    SharedSourceSpec spec;
    spec.duration_s = 8.0;
    spec.sample_rate_hz = fs;
    spec.band = beta_band();
    spec.snr1 = spec.snr2 = 50.0;
    spec.seed = 21;
    const SharedSourcePair pair = gen_shared_source(spec);
    const FeatureVector fv =
        extract_features(epoch_of(pair.x, fs), epoch_of(pair.y, fs), schema);
    CHECK(fv.values[schema.cmc_index(0, false)] > 0.0);
    CHECK(fv.values[schema.power_index(0, true)] > 0.0);
  }
  SUBCASE("misaligned windows are rejected") {
    CHECK_THROWS_AS(extract_features(epoch_of(Eigen::MatrixXd::Zero(512, 1), fs, 0),
                                     epoch_of(Eigen::MatrixXd::Zero(512, 1), fs, 5), schema),
                    ArgumentError);
    CHECK_THROWS_AS(extract_features(epoch_of(Eigen::MatrixXd::Zero(512, 1), fs),
                                     epoch_of(Eigen::MatrixXd::Zero(256, 1), fs), schema),
                    ArgumentError);
  }
}

TEST_CASE("fit_baseline") {
  const FeatureSchema schema = paper_schema();

  SUBCASE("needs five vectors") {
    std::vector<FeatureVector> few(4, signature_vector(schema, 1.0, 0, 0, 0, 0));
    CHECK_THROWS_AS(fit_baseline(few), ArgumentError);
  }
  SUBCASE("identical vectors degenerate every feature") {
    std::vector<FeatureVector> same(6, signature_vector(schema, 2.0, 0, 0, 0, 0));
    const Baseline base = fit_baseline(same);
    CHECK(base.n_degenerate() == schema.size());
    CHECK(base.median[0] == 2.0);
  }
  SUBCASE("offset equivariance and permutation invariance") {
    std::mt19937_64 rng(51);
    std::vector<FeatureVector> calib;
    for (int i = 0; i < 9; ++i) {
      FeatureVector fv;
      fv.values = Eigen::VectorXd::Random(schema.size());
      calib.push_back(fv);
    }
    const Baseline base = fit_baseline(calib);
    auto shifted = calib;
    for (auto& fv : shifted) fv.values.array() += 3.5;
    const Baseline moved = fit_baseline(shifted);
    CHECK((moved.median.array() - base.median.array() - 3.5).abs().maxCoeff() < 1e-12);
    CHECK((moved.scale - base.scale).lpNorm<Eigen::Infinity>() < 1e-12);

    std::shuffle(shifted.begin(), shifted.end(), rng);
    const Baseline permuted = fit_baseline(shifted);
    CHECK(permuted.median == moved.median);
    CHECK(permuted.scale == moved.scale);
  }
}

TEST_CASE("rule_classify votes the four signatures") {
  const FeatureSchema schema = paper_schema();
  const Baseline base = flat_baseline(schema, 10.0);

  SUBCASE("intuitive direction on every signature") {
    const StateLabel label =
        rule_classify(signature_vector(schema, 10.0, 2, -2, 2, 2), schema, base);
    CHECK(label.state == State::Intuitive);
    CHECK(label.confidence == 1.0);
  }
  SUBCASE("intellectual direction on every signature") {
    const StateLabel label =
        rule_classify(signature_vector(schema, 10.0, -2, 2, -2, -2), schema, base);
    CHECK(label.state == State::Intellectual);
    CHECK(label.confidence == 1.0);
  }
  SUBCASE("a 2-2 split is Unknown with zero confidence") {
    // alpha up (+), beta up (miss), beta-cmc up (+), gamma-cmc down (miss)
    const StateLabel label =
        rule_classify(signature_vector(schema, 10.0, 2, 2, 2, -2), schema, base);
    CHECK(label.state == State::Unknown);
    CHECK(label.confidence == 0.0);
  }
  SUBCASE("three votes decide with half confidence") {
    const StateLabel label =
        rule_classify(signature_vector(schema, 10.0, 2, -2, 2, -2), schema, base);
    CHECK(label.state == State::Intuitive);
    CHECK(label.confidence == 0.5);
  }
  SUBCASE("schema mismatch") {
    FeatureVector tiny;
    tiny.values = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(rule_classify(tiny, schema, base), ArgumentError);
  }
  SUBCASE("invariant under per-feature strictly increasing maps") {
    std::mt19937_64 rng(52);
    std::normal_distribution<double> dist(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      FeatureVector fv;
      fv.values.resize(schema.size());
      for (Eigen::Index i = 0; i < schema.size(); ++i) fv.values[i] = 10.0 + dist(rng);
      const StateLabel before = rule_classify(fv, schema, base);

      auto monotone = [](double x) { return x * x * x + 2.0 * x; };
      FeatureVector mapped;
      mapped.values.resize(schema.size());
      Baseline mapped_base = base;
      for (Eigen::Index i = 0; i < schema.size(); ++i) {
        mapped.values[i] = monotone(fv.values[i]);
        mapped_base.median[i] = monotone(base.median[i]);
        mapped_base.scale[i] = 0.1 + static_cast<double>(i);  // any positive rescale
      }
      const StateLabel after = rule_classify(mapped, schema, mapped_base);
      CHECK(before.state == after.state);
      CHECK(before.confidence == after.confidence);
    }
  }
}

TEST_CASE("train_tree and tree_classify") {
  const FeatureSchema schema = paper_schema();

  SUBCASE("linearly separable single feature trains a perfect stump") {
    std::vector<FeatureVector> xs;
    std::vector<State> ys;
    for (int i = 0; i < 20; ++i) {
      FeatureVector fv;
      fv.values = Eigen::VectorXd::Zero(3);
      fv.values[1] = i < 10 ? static_cast<double>(i) : static_cast<double>(i) + 5.0;
      xs.push_back(fv);
      ys.push_back(i < 10 ? State::Intuitive : State::Intellectual);
    }
    const TreeModel model = train_tree(xs, ys, 4, 1);
    CHECK(model.nodes.size() == 3);  // one split, two leaves
    CHECK(model.nodes[0].feature == 1);
    for (size_t i = 0; i < xs.size(); ++i) {
      const StateLabel label = tree_classify(model, xs[i]);
      CHECK(label.state == ys[i]);
      CHECK(label.confidence == 1.0);
    }
  }
  SUBCASE("single-class dataset collapses to one leaf") {
    std::vector<FeatureVector> xs(5, signature_vector(schema, 1.0, 0, 0, 0, 0));
    const TreeModel model = train_tree(xs, std::vector<State>(5, State::Intellectual), 3, 1);
    CHECK(model.nodes.size() == 1);
    CHECK(tree_classify(model, xs[0]).state == State::Intellectual);
  }
  SUBCASE("xor layout is beyond any depth-1 stump") {
    std::vector<FeatureVector> xs;
    std::vector<State> ys;
    for (int rep = 0; rep < 5; ++rep) {
      for (const auto& [a, b, cls] :
           {std::tuple{0.0, 0.0, State::Intuitive}, {1.0, 1.0, State::Intuitive},
            {0.0, 1.0, State::Intellectual}, {1.0, 0.0, State::Intellectual}}) {
        FeatureVector fv;
        fv.values = Eigen::Vector2d(a, b);
        xs.push_back(fv);
        ys.push_back(cls);
      }
    }
    const TreeModel stump = train_tree(xs, ys, 1, 1);
    int correct = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      correct += tree_classify(stump, xs[i]).state == ys[i];
    }
    // No axis-aligned stump beats chance here; greedy splitting needs a
    // strict impurity decrease, so the root stays a leaf.
    CHECK(static_cast<double>(correct) / static_cast<double>(xs.size()) <= 0.75);
  }
  SUBCASE("training is deterministic and serialization survives a round trip") {
    const auto intu = gen_state_features(State::Intuitive, 60, 1.5, 61, schema);
    const auto intl = gen_state_features(State::Intellectual, 60, 1.5, 62, schema);
    std::vector<FeatureVector> xs;
    std::vector<State> ys;
    for (int i = 0; i < 60; ++i) {
      xs.push_back(intu[static_cast<size_t>(i)]);
      ys.push_back(State::Intuitive);
      xs.push_back(intl[static_cast<size_t>(i)]);
      ys.push_back(State::Intellectual);
    }
    const TreeModel a = train_tree(xs, ys, 3, 5);
    const TreeModel b = train_tree(xs, ys, 3, 5);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (size_t i = 0; i < a.nodes.size(); ++i) {
      CHECK(a.nodes[i].feature == b.nodes[i].feature);
      CHECK(a.nodes[i].threshold == b.nodes[i].threshold);
    }

    testutil::TempDir dir;
    save_tree(a, dir.file("tree.json"));
    const TreeModel loaded = load_tree(dir.file("tree.json"));
    CHECK(loaded.max_depth == a.max_depth);
    CHECK(loaded.seed == a.seed);
    for (const auto& fv : xs) {
      const StateLabel la = tree_classify(a, fv);
      const StateLabel lb = tree_classify(loaded, fv);
      CHECK(la.state == lb.state);
      CHECK(la.confidence == lb.confidence);
    }
  }
  SUBCASE("held-out accuracy on separated classes") {
    const auto intu = gen_state_features(State::Intuitive, 200, 4.0, 71, schema);
    const auto intl = gen_state_features(State::Intellectual, 200, 4.0, 72, schema);
    std::vector<FeatureVector> train_x, test_x;
    std::vector<State> train_y, test_y;
    for (int i = 0; i < 200; ++i) {
      auto& xs = i % 4 == 0 ? test_x : train_x;
      auto& ys = i % 4 == 0 ? test_y : train_y;
      xs.push_back(intu[static_cast<size_t>(i)]);
      ys.push_back(State::Intuitive);
      xs.push_back(intl[static_cast<size_t>(i)]);
      ys.push_back(State::Intellectual);
    }
    const TreeModel model = train_tree(train_x, train_y, 3, 9);
    int correct = 0;
    for (size_t i = 0; i < test_x.size(); ++i) {
      correct += tree_classify(model, test_x[i]).state == test_y[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(test_x.size()) >= 0.9);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(train_tree({}, {}, 3, 1), ArgumentError);
    std::vector<FeatureVector> xs(3, signature_vector(schema, 1.0, 0, 0, 0, 0));
    CHECK_THROWS_AS(train_tree(xs, std::vector<State>(3, State::Unknown), 3, 1),
                    ArgumentError);
    CHECK_THROWS_AS(train_tree(xs, std::vector<State>(2, State::Intuitive), 3, 1),
                    ArgumentError);
    CHECK_THROWS_AS(train_tree(xs, std::vector<State>(3, State::Intuitive), 0, 1),
                    ArgumentError);
  }
}

TEST_CASE("step_controller hysteresis") {
  ControllerState st;
  st.hysteresis_k = 3;

  SUBCASE("three contradictions flip the mode") {
    std::vector<AssistanceMode> modes;
    for (int i = 0; i < 3; ++i) {
      auto [next, mode] = step_controller(st, {State::Intellectual, 1.0});
      st = next;
      modes.push_back(mode);
    }
    CHECK(modes[0] == AssistanceMode::Minimal);
    CHECK(modes[1] == AssistanceMode::Minimal);
    CHECK(modes[2] == AssistanceMode::DecisionSupport);
    CHECK(st.streak == 0);
  }
  SUBCASE("alternating labels never switch") {
    for (int i = 0; i < 50; ++i) {
      const State s = i % 2 ? State::Intellectual : State::Intuitive;
      auto [next, mode] = step_controller(st, {s, 1.0});
      st = next;
      CHECK(mode == AssistanceMode::Minimal);
      CHECK(st.streak >= 0);
      CHECK(st.streak < st.hysteresis_k);
    }
  }
  SUBCASE("unknown labels are inert") {
    st.streak = 2;
    for (int i = 0; i < 10; ++i) {
      auto [next, mode] = step_controller(st, {State::Unknown, 0.0});
      CHECK(mode == AssistanceMode::Minimal);
      CHECK(next.streak == 2);  // neither advances nor resets
      st = next;
    }
    // The preserved streak still counts toward the next contradiction.
    auto [next, mode] = step_controller(st, {State::Intellectual, 1.0});
    CHECK(mode == AssistanceMode::DecisionSupport);
  }
  SUBCASE("invalid hysteresis") {
    st.hysteresis_k = 0;
    CHECK_THROWS_AS(step_controller(st, {State::Intuitive, 1.0}), ArgumentError);
  }
  SUBCASE("switch count is bounded by len / k on any label stream") {
    std::mt19937_64 rng(61);
    for (const int k : {1, 2, 5}) {
      ControllerState ctl;
      ctl.hysteresis_k = k;
      const int len = 300;
      int switches = 0;
      for (int i = 0; i < len; ++i) {
        const State s = static_cast<State>(rng() % 3);
        const AssistanceMode before = ctl.current_mode;
        auto [next, mode] = step_controller(ctl, {s, 1.0});
        ctl = next;
        switches += mode != before;
        CHECK(ctl.streak >= 0);
        CHECK(ctl.streak < k);
      }
      CHECK(switches <= len / k);
    }
  }
}

TEST_CASE("run_simulation on a feature stream") {
  const FeatureSchema schema = paper_schema();
  std::vector<FeatureVector> calib;
  for (const auto& fv : gen_state_features(State::Intuitive, 50, 0.0, 81, schema)) {
    calib.push_back(fv);
  }
  const Baseline baseline = fit_baseline(calib);

  SimConfig cfg;
  cfg.hysteresis_k = 5;

  SUBCASE("profile switch at 30 s produces exactly one mode switch") {
    auto stream = gen_state_features(State::Intuitive, 1500, 4.0, 82, schema);
    const auto second = gen_state_features(State::Intellectual, 1500, 4.0, 83, schema);
    stream.insert(stream.end(), second.begin(), second.end());
    for (size_t i = 0; i < stream.size(); ++i) {
      stream[i].window_start_s = 0.02 * static_cast<double>(i);
    }
    const SimulationLog log = run_simulation(stream, schema, baseline, cfg);
    REQUIRE(log.records.size() == 3000);
    CHECK(log.count_switches() == 1);
    for (size_t i = 0; i < log.records.size(); ++i) {
      if (log.records[i].mode == AssistanceMode::DecisionSupport) {
        CHECK(i >= 1500);
        CHECK(i <= 1500 + 5);
        break;
      }
    }
  }
  SUBCASE("an unknown-only stream never leaves the initial mode") {
    // alpha up, beta up, beta-cmc up, gamma-cmc down: a 2-2 vote split
    std::vector<FeatureVector> stream(200, signature_vector(schema, 10.0, 2, 2, 2, -2));
    Baseline base = flat_baseline(schema, 10.0);
    const SimulationLog log = run_simulation(stream, schema, base, cfg);
    for (const auto& rec : log.records) {
      CHECK(rec.label.state == State::Unknown);
      CHECK(rec.mode == AssistanceMode::Minimal);
    }
    CHECK(log.count_switches() == 0);
  }
  SUBCASE("identical streams produce byte-identical logs") {
    const auto stream = gen_state_features(State::Intellectual, 300, 2.0, 84, schema);
    const SimulationLog a = run_simulation(stream, schema, baseline, cfg);
    const SimulationLog b = run_simulation(stream, schema, baseline, cfg);
    std::ostringstream sa, sb;
    write_simulation_ndjson(a, sa);
    write_simulation_ndjson(b, sb);
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().find("{\"t_s\": 0, \"label\": ") == 0);
  }
}

TEST_CASE("run_simulation on a recording") {
  std::mt19937_64 rng(91);
  Recording rec = testutil::random_recording(rng, 2, 1, 256 * 12, 256.0);

  SimConfig cfg;
  cfg.window_s = 1.0;
  cfg.step_s = 0.25;
  cfg.calibration_s = 4.0;

  const SimulationLog log = run_simulation(rec, cfg);
  const auto expected_windows = (rec.n_samples() - 256) / 64 + 1;
  CHECK(log.records.size() == static_cast<size_t>(expected_windows));
  CHECK(log.records[1].t_s == doctest::Approx(0.25));

  const SimulationLog again = run_simulation(rec, cfg);
  std::ostringstream sa, sb;
  write_simulation_ndjson(log, sa);
  write_simulation_ndjson(again, sb);
  CHECK(sa.str() == sb.str());

  SUBCASE("too short for one window") {
    Recording tiny = rec;
    tiny.samples = rec.samples.topRows(100);
    CHECK_THROWS_AS(run_simulation(tiny, cfg), ArgumentError);
  }
  SUBCASE("needs both signal kinds") {
    Recording eeg_only = rec;
    eeg_only.channels.pop_back();
    eeg_only.samples = rec.samples.leftCols(2);
    CHECK_THROWS_AS(run_simulation(eeg_only, cfg), ArgumentError);
  }
}
