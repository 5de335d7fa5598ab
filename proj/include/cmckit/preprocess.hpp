#pragma once

#include "cmckit/types.hpp"

#include <string>
#include <vector>

namespace cmckit {

// One analysis window cut from a recording.
struct Epoch {
  Eigen::Index start_sample = 0;
  Eigen::MatrixXd samples;  // time x channel
  double sample_rate_hz = 0.0;
};

// Keep/reject flags over the non-overlapping artifact window grid.
struct ArtifactMask {
  Eigen::Index window_samples = 0;
  std::vector<bool> keep;
  std::vector<std::string> reason;  // empty string for kept windows

  size_t n_windows() const { return keep.size(); }
  size_t n_rejected() const;
};

// Single-channel entry points. All filters are zero-phase (forward-backward
// application of a 4th-order IIR design); resampling uses Kaiser-windowed
// (beta 8) sinc interpolation with DC-exact weight normalization.
Eigen::VectorXd resample_series(const Eigen::VectorXd& x, double source_rate_hz,
                                double target_rate_hz);
Eigen::VectorXd bandpass_series(const Eigen::VectorXd& x, double sample_rate_hz,
                                double lo_hz, double hi_hz);
Eigen::VectorXd notch_series(const Eigen::VectorXd& x, double sample_rate_hz,
                             double f0_hz, double quality = 30.0);

// Recording-level counterparts; channel metadata and markers pass through.
// Marker sample indices are rescaled by resample.
Recording resample(const Recording& rec, double target_rate_hz);
Recording bandpass(const Recording& rec, double lo_hz, double hi_hz);
Recording notch(const Recording& rec, double f0_hz, double quality = 30.0);

// Windowed peak-to-peak rejection: a window is rejected iff any channel's
// peak-to-peak amplitude exceeds mean + z_threshold * std of that channel's
// own windowed peak-to-peak distribution.
ArtifactMask reject_artifacts(const Recording& rec, double window_s = 1.0,
                              double z_threshold = 5.0);

// Sliding windows at starts 0, S, 2S, ... with W = trunc(window_s * fs) and
// S = trunc(step_s * fs); count = floor((N - W) / S) + 1.
std::vector<Epoch> epoch(const Recording& rec, double window_s, double step_s);

// The shared epoch grid: start indices for the given sample counts.
std::vector<Eigen::Index> epoch_starts(Eigen::Index n_samples, Eigen::Index window_samples,
                                       Eigen::Index step_samples);

}  // namespace cmckit
