#pragma once

#include <cstdint>
#include <string>

namespace cmckit {

// Knobs shared across subcommands, loadable from a JSON config file via
// --config; explicit flags override file values.
struct RunConfig {
  // Welch segmentation: segment length as a fraction of the signal.
  double welch_segment_fraction = 0.125;
  double welch_overlap = 0.5;

  double alpha = 0.05;          // coherence significance level
  bool threshold_no_sqrt = false;

  // preprocessing
  double resample_hz = 0.0;     // 0 disables
  double bandpass_lo_hz = 0.01;
  double bandpass_hi_hz = 100.0;
  double notch_hz = 60.0;       // 0 disables
  double notch_q = 30.0;
  double artifact_window_s = 1.0;
  double artifact_z = 5.0;

  // windowed features
  double window_s = 0.25;
  double step_s = 0.02;
  double segment_fraction = 0.5;  // Welch segment fraction inside a window
  double overlap_fraction = 0.5;

  // classifier / controller
  int tree_depth = 3;
  std::uint64_t seed = 1;
  int hysteresis_k = 5;
  double calibration_s = 5.0;

  int topomap_resolution = 64;
};

// Overlays JSON fields from `path` onto `base` and validates ranges.
RunConfig load_run_config(const std::string& path, RunConfig base = {});

// Entry point behind the cmckit binary. Exit codes: 0 success, 1 validation
// or usage error, 2 I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace cmckit
