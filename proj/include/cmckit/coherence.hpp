#pragma once

#include "cmckit/spectral.hpp"

#include <string>

namespace cmckit {

// Magnitude-squared coherence |Pxy|^2 / (Pxx * Pyy) from Welch estimates
// sharing one segmentation.
struct CoherenceSpectrum {
  Eigen::ArrayXd freqs_hz;
  Eigen::ArrayXd coherence;  // in [0, 1]
  // Bins where either auto-spectrum vanished; coherence forced to 0 there.
  Eigen::Array<bool, Eigen::Dynamic, 1> degenerate;
  int n_segments = 0;  // degrees of freedom for thresholding
  std::string eeg_channel;
  std::string emg_channel;
};

// Significance threshold at confidence 1 - alpha for df averaged segments.
// Sqrt form (default): sqrt(1 - alpha^(1/(df-1))).
// NoSqrt:              1 - alpha^(1/(df-1)), the classical result, kept as a
// sensitivity check.
enum class ThresholdForm { Sqrt, NoSqrt };

double coherence_threshold(double alpha, int df, ThresholdForm form = ThresholdForm::Sqrt);

CoherenceSpectrum coherence(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const WelchConfig& cfg, std::string eeg_channel = "",
                            std::string emg_channel = "");

// Band-limited supra-threshold coherence integral, the scalar coupling
// feature: sum of C(f) * df over in-band bins with C above the threshold.
struct CmcFeature {
  BandSpec band;
  double threshold = 0.0;
  double significant_area = 0.0;  // coherence * Hz
  int n_significant_bins = 0;
  int n_segments = 0;
};

CmcFeature significant_area(const CoherenceSpectrum& coh, const BandSpec& band,
                            double alpha = 0.05, ThresholdForm form = ThresholdForm::Sqrt);

// Mean coherence over the in-band bins (lo <= f < hi).
double mean_band_coherence(const CoherenceSpectrum& coh, const BandSpec& band);

}  // namespace cmckit
