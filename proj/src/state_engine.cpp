#include "cmckit/state_engine.hpp"

#include "cmckit/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

namespace cmckit {

std::string to_string(State s) {
  switch (s) {
    case State::Intuitive: return "Intuitive";
    case State::Intellectual: return "Intellectual";
    default: return "Unknown";
  }
}

State state_from_string(const std::string& s) {
  if (s == "Intuitive") return State::Intuitive;
  if (s == "Intellectual") return State::Intellectual;
  if (s == "Unknown") return State::Unknown;
  throw SchemaError("unknown state label '" + s + "'");
}

std::string to_string(AssistanceMode m) {
  return m == AssistanceMode::Minimal ? "Minimal" : "DecisionSupport";
}

std::vector<FeatureKey> FeatureSchema::keys() const {
  std::vector<FeatureKey> out;
  out.reserve(static_cast<size_t>(size()));
  for (const auto& ch : eeg_channels) {
    out.push_back({ch, "alpha", "band_power"});
    out.push_back({ch, "beta", "band_power"});
  }
  for (const auto& ch : eeg_channels) {
    out.push_back({ch, "beta", "cmc_area"});
    out.push_back({ch, "gamma", "cmc_area"});
  }
  return out;
}

FeatureVector extract_features(const Epoch& eeg_window, const Epoch& emg_window,
                               const FeatureSchema& schema, const ExtractConfig& cfg) {
  if (schema.n_channels() < 1) throw ArgumentError("feature schema has no channels");
  if (eeg_window.samples.cols() != schema.n_channels()) {
    throw ArgumentError("EEG window has " + std::to_string(eeg_window.samples.cols()) +
                        " channels, schema expects " + std::to_string(schema.n_channels()));
  }
  if (emg_window.samples.cols() < 1) throw ArgumentError("EMG window has no channels");
  if (eeg_window.samples.rows() != emg_window.samples.rows() ||
      eeg_window.sample_rate_hz != emg_window.sample_rate_hz ||
      eeg_window.start_sample != emg_window.start_sample) {
    throw ArgumentError("EEG and EMG windows are misaligned");
  }

  const Eigen::Index rows = eeg_window.samples.rows();
  WelchConfig welch;
  welch.segment_len_samples =
      std::max<Eigen::Index>(8, static_cast<Eigen::Index>(cfg.segment_fraction * rows));
  welch.overlap_fraction = cfg.overlap_fraction;
  welch.sample_rate_hz = eeg_window.sample_rate_hz;

  const Eigen::VectorXd emg = emg_window.samples.col(0);

  FeatureVector fv;
  fv.window_start_s = static_cast<double>(eeg_window.start_sample) / eeg_window.sample_rate_hz;
  fv.values.resize(schema.size());
  for (Eigen::Index c = 0; c < schema.n_channels(); ++c) {
    const Eigen::VectorXd series = eeg_window.samples.col(c);
    const SpectralEstimate psd = welch_psd(series, welch);
    fv.values[schema.power_index(c, false)] = band_power(psd, cfg.psd_alpha);
    fv.values[schema.power_index(c, true)] = band_power(psd, cfg.psd_beta);

    const CoherenceSpectrum coh = coherence(series, emg, welch);
    fv.values[schema.cmc_index(c, false)] =
        significant_area(coh, cfg.cmc_beta, cfg.cmc_alpha, cfg.threshold_form)
            .significant_area;
    fv.values[schema.cmc_index(c, true)] =
        significant_area(coh, cfg.cmc_gamma, cfg.cmc_alpha, cfg.threshold_form)
            .significant_area;
  }
  return fv;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Baseline fit_baseline(const std::vector<FeatureVector>& calibration) {
  if (calibration.size() < 5) {
    throw ArgumentError("baseline needs at least 5 calibration vectors");
  }
  const Eigen::Index n_features = calibration.front().values.size();
  for (const auto& fv : calibration) {
    if (fv.values.size() != n_features) {
      throw ArgumentError("calibration vectors disagree on the feature count");
    }
  }

  Baseline base;
  base.median.resize(n_features);
  base.scale.resize(n_features);
  base.usable.resize(n_features);
  std::vector<double> column(calibration.size());
  for (Eigen::Index f = 0; f < n_features; ++f) {
    for (size_t i = 0; i < calibration.size(); ++i) column[i] = calibration[i].values[f];
    const double med = median_of(column);
    for (double& v : column) v = std::abs(v - med);
    const double mad = median_of(column);
    base.median[f] = med;
    base.scale[f] = mad;
    base.usable[f] = mad > 0.0;
  }
  return base;
}

namespace {

bool frontal_or_parietal(const std::string& name) {
  return !name.empty() && (name[0] == 'F' || name[0] == 'P');
}
bool central(const std::string& name) { return !name.empty() && name[0] == 'C'; }
bool left_parietal(const std::string& name) {
  // odd site numbers are the left hemisphere in the 10-20 scheme
  if (name.size() < 2 || name[0] != 'P') return false;
  const char last = name.back();
  return last >= '0' && last <= '9' && (last - '0') % 2 == 1;
}

}  // namespace

StateLabel rule_classify(const FeatureVector& fv, const FeatureSchema& schema,
                         const Baseline& baseline) {
  if (fv.values.size() != schema.size() || baseline.median.size() != schema.size()) {
    throw ArgumentError("feature vector, schema and baseline sizes disagree");
  }

  // Regional sign sums; votes depend only on the signs of the deviations,
  // which makes the rule invariant under per-feature monotone rescaling.
  auto sign_sum = [&](bool cmc, bool second_band, auto&& in_region) {
    int acc = 0;
    for (Eigen::Index c = 0; c < schema.n_channels(); ++c) {
      if (!in_region(schema.eeg_channels[static_cast<size_t>(c)])) continue;
      const Eigen::Index idx =
          cmc ? schema.cmc_index(c, second_band) : schema.power_index(c, second_band);
      if (!baseline.usable[idx]) continue;
      const double d = fv.values[idx] - baseline.median[idx];
      acc += (d > 0.0) - (d < 0.0);
    }
    return acc;
  };

  int votes = 0;
  votes += sign_sum(false, false, frontal_or_parietal) > 0;  // alpha power up
  votes += sign_sum(false, true, frontal_or_parietal) < 0;   // beta power down
  votes += sign_sum(true, false, [](const std::string& n) {
             return central(n) || left_parietal(n);
           }) > 0;                                           // beta coupling up
  votes += sign_sum(true, true, central) > 0;                // gamma coupling up

  StateLabel label;
  label.confidence = std::abs(votes - 2) / 2.0;
  if (votes >= 3) {
    label.state = State::Intuitive;
  } else if (votes <= 1) {
    label.state = State::Intellectual;
  } else {
    label.state = State::Unknown;
  }
  return label;
}

namespace {

double gini(Eigen::Index n_intuitive, Eigen::Index n_intellectual) {
  const double n = static_cast<double>(n_intuitive + n_intellectual);
  if (n == 0.0) return 0.0;
  const double p1 = static_cast<double>(n_intuitive) / n;
  const double p2 = static_cast<double>(n_intellectual) / n;
  return 1.0 - p1 * p1 - p2 * p2;
}

struct TreeBuilder {
  const std::vector<FeatureVector>& xs;
  const std::vector<State>& ys;
  int max_depth;
  std::vector<TreeNode> nodes;

  int make_leaf(const std::vector<int>& idx) {
    Eigen::Index n_int = 0;
    for (const int i : idx) n_int += ys[static_cast<size_t>(i)] == State::Intuitive;
    const Eigen::Index n_itl = static_cast<Eigen::Index>(idx.size()) - n_int;
    TreeNode leaf;
    leaf.leaf_class = n_int >= n_itl ? State::Intuitive : State::Intellectual;
    leaf.purity = static_cast<double>(std::max(n_int, n_itl)) / static_cast<double>(idx.size());
    nodes.push_back(leaf);
    return static_cast<int>(nodes.size()) - 1;
  }

  int build(const std::vector<int>& idx, int depth) {
    Eigen::Index n_int = 0;
    for (const int i : idx) n_int += ys[static_cast<size_t>(i)] == State::Intuitive;
    const Eigen::Index n_itl = static_cast<Eigen::Index>(idx.size()) - n_int;
    const double node_impurity = gini(n_int, n_itl);
    if (depth >= max_depth || node_impurity == 0.0 || idx.size() < 2) {
      return make_leaf(idx);
    }

    // Exhaustive search; ties resolve to the lowest feature index, then the
    // lowest threshold, via strict improvement and ascending iteration.
    const Eigen::Index n_features = xs.front().values.size();
    double best_impurity = node_impurity - 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, State>> order(idx.size());
    for (Eigen::Index f = 0; f < n_features; ++f) {
      for (size_t k = 0; k < idx.size(); ++k) {
        order[k] = {xs[static_cast<size_t>(idx[k])].values[f],
                    ys[static_cast<size_t>(idx[k])]};
      }
      std::sort(order.begin(), order.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      Eigen::Index left_int = 0, left_itl = 0;
      for (size_t k = 0; k + 1 < order.size(); ++k) {
        left_int += order[k].second == State::Intuitive;
        left_itl += order[k].second != State::Intuitive;
        if (order[k].first == order[k + 1].first) continue;
        const auto nl = static_cast<double>(k + 1);
        const auto nr = static_cast<double>(order.size() - k - 1);
        const double weighted =
            (nl * gini(left_int, left_itl) +
             nr * gini(n_int - left_int, n_itl - left_itl)) /
            static_cast<double>(order.size());
        if (weighted < best_impurity) {
          best_impurity = weighted;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (order[k].first + order[k + 1].first);
        }
      }
    }
    if (best_feature < 0) return make_leaf(idx);

    std::vector<int> left_idx, right_idx;
    for (const int i : idx) {
      if (xs[static_cast<size_t>(i)].values[best_feature] <= best_threshold) {
        left_idx.push_back(i);
      } else {
        right_idx.push_back(i);
      }
    }
    TreeNode node;
    node.feature = best_feature;
    node.threshold = best_threshold;
    nodes.push_back(node);
    const int self = static_cast<int>(nodes.size()) - 1;
    nodes[static_cast<size_t>(self)].left = build(left_idx, depth + 1);
    nodes[static_cast<size_t>(self)].right = build(right_idx, depth + 1);
    return self;
  }
};

}  // namespace

TreeModel train_tree(const std::vector<FeatureVector>& xs, const std::vector<State>& ys,
                     int max_depth, std::uint64_t seed) {
  if (xs.empty()) throw ArgumentError("cannot train on an empty dataset");
  if (xs.size() != ys.size()) throw ArgumentError("feature/label counts disagree");
  if (max_depth < 1) throw ArgumentError("max_depth must be at least 1");
  const Eigen::Index n_features = xs.front().values.size();
  Eigen::Index n_int = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].values.size() != n_features) {
      throw ArgumentError("feature vectors disagree on the feature count");
    }
    if (ys[i] == State::Unknown) throw ArgumentError("training labels must be decided states");
    n_int += ys[i] == State::Intuitive;
  }

  TreeBuilder builder{xs, ys, max_depth, {}};
  std::vector<int> all(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) all[i] = static_cast<int>(i);
  builder.build(all, 0);

  TreeModel model;
  model.nodes = std::move(builder.nodes);
  model.max_depth = max_depth;
  model.seed = seed;
  model.n_features = n_features;
  model.root_impurity = gini(n_int, static_cast<Eigen::Index>(xs.size()) - n_int);
  return model;
}

StateLabel tree_classify(const TreeModel& model, const FeatureVector& fv) {
  if (model.nodes.empty()) throw ArgumentError("empty tree model");
  if (fv.values.size() != model.n_features) {
    throw ArgumentError("feature vector does not match the model schema");
  }
  int at = 0;
  while (model.nodes[static_cast<size_t>(at)].feature >= 0) {
    const TreeNode& node = model.nodes[static_cast<size_t>(at)];
    at = fv.values[node.feature] <= node.threshold ? node.left : node.right;
  }
  const TreeNode& leaf = model.nodes[static_cast<size_t>(at)];
  return {leaf.leaf_class, leaf.purity};
}

void save_tree(const TreeModel& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "cmckit-tree";
  j["version"] = 1;
  j["max_depth"] = model.max_depth;
  j["seed"] = model.seed;
  j["n_features"] = static_cast<long>(model.n_features);
  j["root_impurity"] = model.root_impurity;
  j["nodes"] = nlohmann::json::array();
  for (const auto& node : model.nodes) {
    if (node.feature < 0) {
      j["nodes"].push_back(
          {{"class", to_string(node.leaf_class)}, {"purity", node.purity}});
    } else {
      j["nodes"].push_back({{"feature", node.feature},
                            {"threshold", node.threshold},
                            {"left", node.left},
                            {"right", node.right}});
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

TreeModel load_tree(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "cmckit-tree") {
      throw SchemaError("'" + path + "' is not a tree model file");
    }
    TreeModel model;
    model.max_depth = j.at("max_depth").get<int>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.n_features = j.at("n_features").get<long>();
    model.root_impurity = j.value("root_impurity", 0.0);
    for (const auto& jn : j.at("nodes")) {
      TreeNode node;
      if (jn.contains("class")) {
        node.leaf_class = state_from_string(jn.at("class").get<std::string>());
        node.purity = jn.at("purity").get<double>();
      } else {
        node.feature = jn.at("feature").get<int>();
        node.threshold = jn.at("threshold").get<double>();
        node.left = jn.at("left").get<int>();
        node.right = jn.at("right").get<int>();
      }
      model.nodes.push_back(node);
    }
    if (model.nodes.empty()) throw SchemaError("tree model has no nodes");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid tree model '" + path + "': " + e.what());
  }
}

std::pair<ControllerState, AssistanceMode> step_controller(const ControllerState& state,
                                                           const StateLabel& label) {
  if (state.hysteresis_k < 1) throw ArgumentError("hysteresis_k must be at least 1");
  ControllerState next = state;
  if (label.state != State::Unknown) {
    const AssistanceMode target = label.state == State::Intuitive
                                      ? AssistanceMode::Minimal
                                      : AssistanceMode::DecisionSupport;
    if (target == state.current_mode) {
      next.streak = 0;
    } else {
      next.streak = state.streak + 1;
      if (next.streak >= state.hysteresis_k) {
        next.current_mode = target;
        next.streak = 0;
      }
    }
  }
  return {next, next.current_mode};
}

int SimulationLog::count_switches() const {
  int switches = 0;
  for (size_t i = 1; i < records.size(); ++i) {
    switches += records[i].mode != records[i - 1].mode;
  }
  return switches;
}

namespace {

SimulationLog drive_controller(const std::vector<FeatureVector>& stream,
                               const FeatureSchema& schema, const Baseline& baseline,
                               const SimConfig& cfg) {
  SimulationLog log;
  log.records.reserve(stream.size());
  ControllerState ctl;
  ctl.current_mode = cfg.initial_mode;
  ctl.hysteresis_k = cfg.hysteresis_k;
  for (const auto& fv : stream) {
    const auto started = std::chrono::steady_clock::now();
    const StateLabel label =
        cfg.tree ? tree_classify(*cfg.tree, fv) : rule_classify(fv, schema, baseline);
    auto [next, mode] = step_controller(ctl, label);
    ctl = next;
    log.records.push_back({fv.window_start_s, label, mode});
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;
    if (took.count() > cfg.step_s) ++log.n_deadline_overruns;
  }
  return log;
}

}  // namespace

SimulationLog run_simulation(const std::vector<FeatureVector>& stream,
                             const FeatureSchema& schema, const Baseline& baseline,
                             const SimConfig& cfg) {
  if (stream.empty()) throw ArgumentError("empty feature stream");
  return drive_controller(stream, schema, baseline, cfg);
}

SimulationLog run_simulation(const Recording& rec, const SimConfig& cfg) {
  validate(rec);
  FeatureSchema schema;
  std::vector<Eigen::Index> eeg_cols;
  Eigen::Index emg_col = -1;
  for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
    const auto& ch = rec.channels[static_cast<size_t>(c)];
    if (ch.kind == ChannelKind::EEG) {
      schema.eeg_channels.push_back(ch.name);
      eeg_cols.push_back(c);
    } else if (emg_col < 0) {
      emg_col = c;
    }
  }
  if (schema.n_channels() < 1 || emg_col < 0) {
    throw ArgumentError("simulation needs at least one EEG and one EMG channel");
  }

  const double fs = rec.sample_rate_hz;
  const auto w = static_cast<Eigen::Index>(cfg.window_s * fs);
  const auto s = static_cast<Eigen::Index>(cfg.step_s * fs);
  const auto starts = epoch_starts(rec.n_samples(), w, s);

  // Leading calibration stretch fixes the per-feature baseline.
  const auto calibration_end = static_cast<Eigen::Index>(cfg.calibration_s * fs);
  std::vector<FeatureVector> features;
  std::vector<double> proc_seconds;
  features.reserve(starts.size());
  for (const Eigen::Index start : starts) {
    const auto started = std::chrono::steady_clock::now();
    Epoch eeg;
    eeg.start_sample = start;
    eeg.sample_rate_hz = fs;
    eeg.samples.resize(w, static_cast<Eigen::Index>(eeg_cols.size()));
    for (size_t k = 0; k < eeg_cols.size(); ++k) {
      eeg.samples.col(static_cast<Eigen::Index>(k)) =
          rec.samples.col(eeg_cols[k]).segment(start, w).cast<double>();
    }
    Epoch emg;
    emg.start_sample = start;
    emg.sample_rate_hz = fs;
    emg.samples = rec.samples.col(emg_col).segment(start, w).cast<double>();
    features.push_back(extract_features(eeg, emg, schema, cfg.extract));
    proc_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }

  std::vector<FeatureVector> calibration;
  for (size_t i = 0; i < starts.size(); ++i) {
    if (starts[i] + w <= calibration_end) calibration.push_back(features[i]);
  }
  if (calibration.size() < 5) {
    throw ArgumentError("calibration stretch covers fewer than 5 windows");
  }
  const Baseline baseline = fit_baseline(calibration);

  SimulationLog log = drive_controller(features, schema, baseline, cfg);
  for (const double secs : proc_seconds) {
    if (secs > cfg.step_s) ++log.n_deadline_overruns;
  }
  return log;
}

void write_simulation_ndjson(const SimulationLog& log, std::ostream& out) {
  for (const auto& r : log.records) {
    out << "{\"t_s\": " << format_double(r.t_s) << ", \"label\": \""
        << to_string(r.label.state) << "\", \"confidence\": "
        << format_double(r.label.confidence) << ", \"mode\": \"" << to_string(r.mode)
        << "\"}\n";
  }
}

void write_simulation_ndjson(const SimulationLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_simulation_ndjson(log, out);
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace cmckit
