#include "cmckit/spectral.hpp"

#include "cmckit/preprocess.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace cmckit {

namespace {

using std::numbers::pi;

void validate_config(const WelchConfig& cfg) {
  if (cfg.segment_len_samples < 8) {
    throw ArgumentError("Welch segment length must be at least 8 samples");
  }
  if (!(cfg.overlap_fraction >= 0.0 && cfg.overlap_fraction < 1.0)) {
    throw ArgumentError("Welch overlap fraction must lie in [0, 1)");
  }
  if (!(cfg.sample_rate_hz > 0.0)) {
    throw ArgumentError("Welch sample rate must be positive");
  }
}

Eigen::Index step_samples(const WelchConfig& cfg) {
  const auto overlap = static_cast<Eigen::Index>(
      cfg.overlap_fraction * static_cast<double>(cfg.segment_len_samples));
  return cfg.segment_len_samples - overlap;
}

Eigen::ArrayXd hann_window(Eigen::Index len) {
  Eigen::ArrayXd w(len);
  for (Eigen::Index n = 0; n < len; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(n) / static_cast<double>(len));
  }
  return w;
}

// Averaged one-sided cross spectrum over the given segment starts. The
// density scaling 1 / (fs * sum(w^2)) with doubled interior bins makes the
// integral of the auto-spectrum match the signal mean square.
Eigen::ArrayXcd averaged_cross(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                               Eigen::Index seg_len, const std::vector<Eigen::Index>& starts,
                               double fs, Eigen::ArrayXd* freqs_out) {
  const Eigen::ArrayXd w = hann_window(seg_len);
  const double scale = 1.0 / (fs * w.square().sum());
  const Eigen::Index n_bins = seg_len / 2 + 1;

  Eigen::FFT<double> fft;
  std::vector<double> bufx(static_cast<size_t>(seg_len));
  std::vector<double> bufy(static_cast<size_t>(seg_len));
  std::vector<std::complex<double>> spx;
  std::vector<std::complex<double>> spy;

  Eigen::ArrayXcd acc = Eigen::ArrayXcd::Zero(n_bins);
  for (const Eigen::Index start : starts) {
    for (Eigen::Index n = 0; n < seg_len; ++n) {
      bufx[static_cast<size_t>(n)] = w[n] * x[start + n];
      bufy[static_cast<size_t>(n)] = w[n] * y[start + n];
    }
    fft.fwd(spx, bufx);
    fft.fwd(spy, bufy);
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      acc[k] += std::conj(spx[static_cast<size_t>(k)]) * spy[static_cast<size_t>(k)];
    }
  }
  acc *= scale / static_cast<double>(starts.size());
  for (Eigen::Index k = 1; k < n_bins; ++k) {
    if (!(seg_len % 2 == 0 && k == n_bins - 1)) acc[k] *= 2.0;  // one-sided doubling
  }

  if (freqs_out) {
    freqs_out->resize(n_bins);
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      (*freqs_out)[k] = static_cast<double>(k) * fs / static_cast<double>(seg_len);
    }
  }
  return acc;
}

}  // namespace

WelchConfig welch_defaults(Eigen::Index n_samples, double sample_rate_hz) {
  WelchConfig cfg;
  cfg.segment_len_samples = n_samples / 8;
  cfg.overlap_fraction = 0.5;
  cfg.sample_rate_hz = sample_rate_hz;
  return cfg;
}

Eigen::Index welch_segment_count(Eigen::Index n_samples, const WelchConfig& cfg) {
  validate_config(cfg);
  if (n_samples < cfg.segment_len_samples) {
    throw ArgumentError("signal shorter than one Welch segment");
  }
  const Eigen::Index count = (n_samples - cfg.segment_len_samples) / step_samples(cfg) + 1;
  if (count < 2) {
    throw ArgumentError("Welch config must fit at least two segments");
  }
  return count;
}

SpectralEstimate welch_psd(const Eigen::VectorXd& x, const WelchConfig& cfg) {
  const Eigen::Index n_segs = welch_segment_count(x.size(), cfg);
  const auto starts = epoch_starts(x.size(), cfg.segment_len_samples, step_samples(cfg));

  SpectralEstimate est;
  const Eigen::ArrayXcd cross =
      averaged_cross(x, x, cfg.segment_len_samples, starts, cfg.sample_rate_hz, &est.freqs_hz);
  est.values = cross.real().cwiseMax(0.0);
  est.n_segments = static_cast<int>(n_segs);
  return est;
}

CrossSpectrum cross_psd(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                        const WelchConfig& cfg) {
  if (x.size() != y.size()) {
    throw ArgumentError("cross_psd requires equal-length signals");
  }
  const Eigen::Index n_segs = welch_segment_count(x.size(), cfg);
  const auto starts = epoch_starts(x.size(), cfg.segment_len_samples, step_samples(cfg));

  CrossSpectrum cs;
  cs.values = averaged_cross(x, y, cfg.segment_len_samples, starts, cfg.sample_rate_hz,
                             &cs.freqs_hz);
  cs.n_segments = static_cast<int>(n_segs);
  return cs;
}

double band_power(const SpectralEstimate& spec, const BandSpec& band) {
  validate(band);
  const auto& f = spec.freqs_hz;
  const auto& v = spec.values;
  if (f.size() < 2) throw ArgumentError("spectrum has fewer than two bins");
  if (band.lo_hz < f[0] - 1e-12 || band.hi_hz > f[f.size() - 1] + 1e-12) {
    throw ArgumentError("band '" + band.name + "' lies outside the spectral grid");
  }

  // Trapezoid over the piecewise-linear interpolant restricted to the band,
  // cell by cell; exactly additive across adjacent bands.
  const double lo = std::min(std::max(band.lo_hz, f[0]), f[f.size() - 1]);
  const double hi = std::min(std::max(band.hi_hz, f[0]), f[f.size() - 1]);
  double total = 0.0;
  for (Eigen::Index k = 0; k + 1 < f.size(); ++k) {
    const double a = std::max(lo, f[k]);
    const double b = std::min(hi, f[k + 1]);
    if (b <= a) continue;
    const double width = f[k + 1] - f[k];
    const double va = v[k] + (a - f[k]) / width * (v[k + 1] - v[k]);
    const double vb = v[k] + (b - f[k]) / width * (v[k + 1] - v[k]);
    total += 0.5 * (va + vb) * (b - a);
  }
  return total;
}

Eigen::ArrayXd sliding_band_power(const Eigen::VectorXd& x, double sample_rate_hz,
                                  const BandSpec& band, double window_s, double step_s) {
  validate(band);
  if (!(sample_rate_hz > 0.0)) throw ArgumentError("sample rate must be positive");
  if (!(step_s > 0.0)) throw ArgumentError("step must be positive");
  if (window_s * band.width() < 2.0 - 1e-9) {
    throw ArgumentError("band '" + band.name + "' is unresolvable for a " +
                        std::to_string(window_s) + " s window");
  }
  const auto w = static_cast<Eigen::Index>(window_s * sample_rate_hz);
  const auto s = static_cast<Eigen::Index>(step_s * sample_rate_hz);
  const auto starts = epoch_starts(x.size(), w, s);

  Eigen::ArrayXd series(static_cast<Eigen::Index>(starts.size()));
  Eigen::ArrayXd freqs;
  for (size_t i = 0; i < starts.size(); ++i) {
    SpectralEstimate est;
    const Eigen::ArrayXcd cross =
        averaged_cross(x, x, w, {starts[i]}, sample_rate_hz, &est.freqs_hz);
    est.values = cross.real().cwiseMax(0.0);
    est.n_segments = 1;
    series[static_cast<Eigen::Index>(i)] = band_power(est, band);
  }
  return series;
}

}  // namespace cmckit
