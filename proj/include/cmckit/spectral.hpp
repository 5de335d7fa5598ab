#pragma once

#include "cmckit/types.hpp"

namespace cmckit {

enum class WindowKind { Hann };

// Welch segmentation. The default configuration follows the analysis recipe
// used throughout: segments of 1/8 of the signal length with 50% overlap,
// which yields 15 segments.
struct WelchConfig {
  Eigen::Index segment_len_samples = 0;
  double overlap_fraction = 0.5;
  WindowKind window = WindowKind::Hann;
  double sample_rate_hz = 0.0;
};

WelchConfig welch_defaults(Eigen::Index n_samples, double sample_rate_hz);

// Number of segments the config produces on a signal of length n; throws
// unless at least two segments fit.
Eigen::Index welch_segment_count(Eigen::Index n_samples, const WelchConfig& cfg);

// One-sided power spectral density, units (signal^2)/Hz, on the grid
// k * fs / segment_len for k = 0 .. segment_len/2.
struct SpectralEstimate {
  Eigen::ArrayXd freqs_hz;
  Eigen::ArrayXd values;
  int n_segments = 0;

  double freq_step_hz() const {
    return freqs_hz.size() > 1 ? freqs_hz[1] - freqs_hz[0] : 0.0;
  }
};

// One-sided cross power spectral density (conj(X) * Y convention: a pure
// delay of y relative to x produces phase slope -2*pi*f*d/fs).
struct CrossSpectrum {
  Eigen::ArrayXd freqs_hz;
  Eigen::ArrayXcd values;
  int n_segments = 0;
};

SpectralEstimate welch_psd(const Eigen::VectorXd& x, const WelchConfig& cfg);

CrossSpectrum cross_psd(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        const WelchConfig& cfg);

// Integral of the piecewise-linear interpolant of the PSD over [lo, hi];
// exactly additive over adjacent bands.
double band_power(const SpectralEstimate& spec, const BandSpec& band);

// Band power of the Hann-windowed periodogram over each sliding window on
// the epoch grid (window/step counts truncate toward zero, as epoch()).
// Requires window_s >= 2 / band width so the band spans the resolution.
Eigen::ArrayXd sliding_band_power(const Eigen::VectorXd& x, double sample_rate_hz,
                                  const BandSpec& band, double window_s = 0.25,
                                  double step_s = 0.02);

}  // namespace cmckit
