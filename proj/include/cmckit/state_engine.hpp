#pragma once

#include "cmckit/coherence.hpp"
#include "cmckit/feature_table.hpp"
#include "cmckit/preprocess.hpp"

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace cmckit {

// Operator state: fluent skill-driven execution vs deliberate analytic
// execution, or undecided.
enum class State { Intuitive, Intellectual, Unknown };

std::string to_string(State s);
State state_from_string(const std::string& s);

struct StateLabel {
  State state = State::Unknown;
  double confidence = 0.0;  // in [0, 1]; Unknown iff confidence < 0.5
};

// Fixed feature layout for n EEG channels paired with one EMG channel
// (channel-major, band-minor):
//   index 2*c + 0        alpha band power of channel c
//   index 2*c + 1        beta band power of channel c
//   index 2*n + 2*c + 0  beta-band coherence significant area, channel c
//   index 2*n + 2*c + 1  gamma-band coherence significant area, channel c
struct FeatureSchema {
  std::vector<std::string> eeg_channels;

  Eigen::Index n_channels() const { return static_cast<Eigen::Index>(eeg_channels.size()); }
  Eigen::Index size() const { return 4 * n_channels(); }
  Eigen::Index power_index(Eigen::Index channel, bool beta) const {
    return 2 * channel + (beta ? 1 : 0);
  }
  Eigen::Index cmc_index(Eigen::Index channel, bool gamma) const {
    return 2 * n_channels() + 2 * channel + (gamma ? 1 : 0);
  }
  std::vector<FeatureKey> keys() const;
};

struct FeatureVector {
  double window_start_s = 0.0;
  Eigen::VectorXd values;
};

struct ExtractConfig {
  BandSpec psd_alpha = alpha_band();
  BandSpec psd_beta = beta_band();
  BandSpec cmc_beta = beta_band();
  BandSpec cmc_gamma = gamma_band();
  double cmc_alpha = 0.05;
  ThresholdForm threshold_form = ThresholdForm::Sqrt;
  // Welch segmentation inside one window, as a fraction of the window.
  double segment_fraction = 0.5;
  double overlap_fraction = 0.5;
};

// Band powers and coherence significant areas for one aligned EEG/EMG
// window pair. The EEG epoch must carry schema channels in order; the EMG
// epoch contributes its first column.
FeatureVector extract_features(const Epoch& eeg_window, const Epoch& emg_window,
                               const FeatureSchema& schema, const ExtractConfig& cfg = {});

// Per-feature reference location and spread from a calibration segment.
struct Baseline {
  Eigen::VectorXd median;
  Eigen::VectorXd scale;  // median absolute deviation
  Eigen::Array<bool, Eigen::Dynamic, 1> usable;  // false where scale degenerated to 0

  Eigen::Index n_degenerate() const { return usable.size() - usable.count(); }
};

Baseline fit_baseline(const std::vector<FeatureVector>& calibration);

// Sign-vote classifier over the characteristic regional signatures:
// alpha power up (frontal+parietal), beta power down (frontal+parietal),
// beta-band coupling up (central/left-parietal), gamma-band coupling up
// (central) vote Intuitive; 3 of 4 votes decide, 2-2 is Unknown.
StateLabel rule_classify(const FeatureVector& fv, const FeatureSchema& schema,
                         const Baseline& baseline);

// Depth-limited binary decision tree trained by exhaustive Gini splits.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // value <= threshold goes left
  int left = -1;
  int right = -1;
  State leaf_class = State::Unknown;
  double purity = 0.0;
};

struct TreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int max_depth = 0;
  std::uint64_t seed = 0;  // recorded for provenance; the search is exhaustive
  Eigen::Index n_features = 0;
  double root_impurity = 0.0;
};

TreeModel train_tree(const std::vector<FeatureVector>& xs, const std::vector<State>& ys,
                     int max_depth, std::uint64_t seed);
StateLabel tree_classify(const TreeModel& model, const FeatureVector& fv);

void save_tree(const TreeModel& model, const std::string& path);
TreeModel load_tree(const std::string& path);

enum class AssistanceMode { Minimal, DecisionSupport };
std::string to_string(AssistanceMode m);

// Hysteresis memory: the mode flips only after hysteresis_k consecutive
// contradicting labels; Unknown labels neither advance nor reset the streak.
struct ControllerState {
  AssistanceMode current_mode = AssistanceMode::Minimal;
  int streak = 0;
  int hysteresis_k = 5;
};

std::pair<ControllerState, AssistanceMode> step_controller(const ControllerState& state,
                                                           const StateLabel& label);

struct SimRecord {
  double t_s = 0.0;
  StateLabel label;
  AssistanceMode mode = AssistanceMode::Minimal;
};

struct SimulationLog {
  std::vector<SimRecord> records;
  Eigen::Index n_deadline_overruns = 0;  // windows processed slower than the step

  int count_switches() const;
};

struct SimConfig {
  double window_s = 0.25;
  double step_s = 0.02;
  int hysteresis_k = 5;
  AssistanceMode initial_mode = AssistanceMode::Minimal;
  double calibration_s = 5.0;  // leading stretch used to fit the baseline
  ExtractConfig extract;
  const TreeModel* tree = nullptr;  // classify with this tree instead of the rule
};

// Windowed streaming run over a recording: extract, classify, step the
// controller, one record per window, in order.
SimulationLog run_simulation(const Recording& rec, const SimConfig& cfg);

// Same loop over an already-extracted feature stream.
SimulationLog run_simulation(const std::vector<FeatureVector>& stream,
                             const FeatureSchema& schema, const Baseline& baseline,
                             const SimConfig& cfg);

// Newline-delimited JSON records:
//   { "t_s": num, "label": str, "confidence": num, "mode": str }
void write_simulation_ndjson(const SimulationLog& log, std::ostream& out);
void write_simulation_ndjson(const SimulationLog& log, const std::string& path);

}  // namespace cmckit
