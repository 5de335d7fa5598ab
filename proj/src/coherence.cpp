#include "cmckit/coherence.hpp"

#include <cmath>

namespace cmckit {

double coherence_threshold(double alpha, int df, ThresholdForm form) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ArgumentError("alpha must lie in (0, 1)");
  }
  if (df < 2) {
    throw ArgumentError("coherence threshold needs at least 2 segments");
  }
  const double base = 1.0 - std::pow(alpha, 1.0 / (df - 1.0));
  return form == ThresholdForm::Sqrt ? std::sqrt(base) : base;
}

CoherenceSpectrum coherence(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const WelchConfig& cfg, std::string eeg_channel,
                            std::string emg_channel) {
  if (x.size() != y.size()) {
    throw ArgumentError("coherence requires equal-length signals");
  }
  // welch_segment_count rejects single-segment configs, where the estimate
  // is identically 1 and carries no information.
  const SpectralEstimate pxx = welch_psd(x, cfg);
  const SpectralEstimate pyy = welch_psd(y, cfg);
  const CrossSpectrum pxy = cross_psd(x, y, cfg);

  CoherenceSpectrum coh;
  coh.freqs_hz = pxx.freqs_hz;
  coh.n_segments = pxx.n_segments;
  coh.eeg_channel = std::move(eeg_channel);
  coh.emg_channel = std::move(emg_channel);
  const Eigen::Index n = coh.freqs_hz.size();
  coh.coherence.resize(n);
  coh.degenerate = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double denom = pxx.values[k] * pyy.values[k];
    if (denom <= 0.0) {
      coh.coherence[k] = 0.0;
      coh.degenerate[k] = true;
      continue;
    }
    const double c = std::norm(pxy.values[k]) / denom;
    // Cauchy-Schwarz bounds the ratio by 1; clamp floating-point excess.
    coh.coherence[k] = std::clamp(c, 0.0, 1.0);
  }
  return coh;
}

namespace {

// In-band bins use the half-open convention lo <= f < hi.
std::pair<Eigen::Index, Eigen::Index> band_bin_range(const Eigen::ArrayXd& freqs,
                                                     const BandSpec& band) {
  validate(band);
  Eigen::Index first = -1;
  Eigen::Index last = -1;  // exclusive
  for (Eigen::Index k = 0; k < freqs.size(); ++k) {
    if (freqs[k] >= band.lo_hz && freqs[k] < band.hi_hz) {
      if (first < 0) first = k;
      last = k + 1;
    }
  }
  if (first < 0) {
    throw ArgumentError("band '" + band.name + "' contains no spectral bins");
  }
  return {first, last};
}

}  // namespace

CmcFeature significant_area(const CoherenceSpectrum& coh, const BandSpec& band,
                            double alpha, ThresholdForm form) {
  const auto [first, last] = band_bin_range(coh.freqs_hz, band);
  const double df_hz = coh.freqs_hz[1] - coh.freqs_hz[0];

  CmcFeature feat;
  feat.band = band;
  feat.n_segments = coh.n_segments;
  feat.threshold = coherence_threshold(alpha, coh.n_segments, form);
  for (Eigen::Index k = first; k < last; ++k) {
    if (coh.coherence[k] > feat.threshold) {
      feat.significant_area += coh.coherence[k] * df_hz;
      ++feat.n_significant_bins;
    }
  }
  return feat;
}

double mean_band_coherence(const CoherenceSpectrum& coh, const BandSpec& band) {
  const auto [first, last] = band_bin_range(coh.freqs_hz, band);
  return coh.coherence.segment(first, last - first).mean();
}

}  // namespace cmckit
