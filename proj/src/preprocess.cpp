#include "cmckit/preprocess.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <numbers>
#include <thread>
#include <vector>

namespace cmckit {

namespace {

using std::numbers::pi;

// ---------------------------------------------------------------------------
// IIR machinery: Butterworth bandpass designed in the analog domain and
// mapped with the bilinear transform, plus a direct digital notch biquad.
// Filters run as cascaded second-order sections (transposed direct form II);
// the extreme edge ratios involved (0.01 Hz vs 100 Hz) are not representable
// as a single stable polynomial.
// ---------------------------------------------------------------------------

struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator, a0 normalized to 1
};

using Sos = std::vector<Biquad>;

Sos design_butter_bandpass(int order, double lo_hz, double hi_hz, double fs) {
  if (order % 2 != 0 || order < 2) throw ArgumentError("bandpass order must be even");
  const int n_proto = order / 2;

  // Prewarped analog edges.
  const double w_lo = 2.0 * fs * std::tan(pi * lo_hz / fs);
  const double w_hi = 2.0 * fs * std::tan(pi * hi_hz / fs);
  const double w0_sq = w_lo * w_hi;
  const double bw = w_hi - w_lo;

  // Upper-half-plane Butterworth prototype poles; conjugates are implied.
  std::vector<std::complex<double>> proto;
  for (int k = 1; k <= n_proto; ++k) {
    const double theta = pi * (2.0 * k + n_proto - 1.0) / (2.0 * n_proto);
    const std::complex<double> p = std::polar(1.0, theta);
    if (p.imag() > 1e-12) proto.push_back(p);
    if (std::abs(p.imag()) <= 1e-12) {
      throw ArgumentError("odd prototype sections not supported");
    }
  }

  // Lowpass -> bandpass: each prototype pole p yields the two roots of
  // s^2 - p*bw*s + w0^2 = 0. Conjugate partners form the real sections.
  std::vector<std::complex<double>> apoles;
  for (const auto& p : proto) {
    const std::complex<double> pb = p * bw;
    const std::complex<double> disc = std::sqrt(pb * pb - 4.0 * w0_sq);
    apoles.push_back((pb + disc) / 2.0);
    apoles.push_back((pb - disc) / 2.0);
  }

  // Bilinear transform. Analog gain bw^n_proto with n_proto zeros at s=0
  // (-> z=+1) and n_proto at infinity (-> z=-1).
  const double fs2 = 2.0 * fs;
  double gain = std::pow(bw, n_proto) * std::pow(fs2, n_proto);
  Sos sos;
  for (const auto& p : apoles) {
    const std::complex<double> zp = (fs2 + p) / (fs2 - p);
    // |fs2 - p|^2 for the pole and its implied conjugate.
    gain /= std::norm(fs2 - p);
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;  // zeros at +1 and -1
    s.a1 = -2.0 * zp.real();
    s.a2 = std::norm(zp);
    sos.push_back(s);
  }
  sos.front().b0 *= gain;
  sos.front().b2 *= gain;
  return sos;
}

Sos design_notch(double f0_hz, double quality, double fs) {
  const double w0 = 2.0 * pi * f0_hz / fs;
  const double alpha = std::sin(w0) / (2.0 * quality);
  const double a0 = 1.0 + alpha;
  Biquad s;
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  return {s};
}

// Steady-state filter state for a unit step, used to suppress startup
// transients; scaled by the first input sample before filtering.
std::pair<double, double> step_state(const Biquad& s) {
  const double k = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  return {k - s.b0, k * (1.0 + s.a1) - s.b0 - s.b1};
}

void sosfilt_inplace(const Sos& sos, Eigen::VectorXd& x) {
  for (const auto& s : sos) {
    auto [z1, z2] = step_state(s);
    z1 *= x[0];
    z2 *= x[0];
    for (Eigen::Index n = 0; n < x.size(); ++n) {
      const double in = x[n];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      x[n] = out;
    }
  }
}

Eigen::VectorXd sosfiltfilt(const Sos& sos, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n == 0) return x;
  const Eigen::Index padlen =
      std::min<Eigen::Index>(n - 1, 3 * (2 * static_cast<Eigen::Index>(sos.size()) + 1));

  Eigen::VectorXd ext(n + 2 * padlen);
  for (Eigen::Index i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];                    // odd reflection, front
    ext[n + padlen + i] = 2.0 * x[n - 1] - x[n - 2 - i];    // odd reflection, back
  }
  ext.segment(padlen, n) = x;

  sosfilt_inplace(sos, ext);
  ext.reverseInPlace();
  sosfilt_inplace(sos, ext);
  ext.reverseInPlace();
  return ext.segment(padlen, n);
}

double validated_rate(const Recording& rec) {
  validate(rec);
  return rec.sample_rate_hz;
}

// Apply a per-channel series transform across a recording. Channels are
// independent, so the result is bitwise identical for any thread count.
template <typename Fn>
Recording map_channels(const Recording& rec, Fn&& fn) {
  Recording out = rec;
  const Eigen::Index n_ch = rec.n_channels();
  if (n_ch == 0) return out;

  Eigen::Index first_rows = -1;
  {
    Eigen::VectorXd y = fn(rec.channel(0));
    first_rows = y.size();
    out.samples.resize(first_rows, n_ch);
    out.samples.col(0) = y.cast<float>();
  }

  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CMC_PIPELINE_THREADS")) {
    threads = std::max(1, std::atoi(env));
  }
  threads = std::min<int>(threads, static_cast<int>(n_ch) - 1);

  std::atomic<Eigen::Index> next{1};
  auto worker = [&] {
    for (Eigen::Index c = next.fetch_add(1); c < n_ch; c = next.fetch_add(1)) {
      const Eigen::VectorXd y = fn(rec.channel(c));
      out.samples.col(c) = y.cast<float>();
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

double kaiser_window(double u, double beta) {
  // u in [-1, 1]
  const double t = 1.0 - u * u;
  if (t <= 0.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(t)) / std::cyl_bessel_i(0.0, beta);
}

double normalized_sinc(double u) {
  if (u == 0.0) return 1.0;
  return std::sin(pi * u) / (pi * u);
}

}  // namespace

size_t ArtifactMask::n_rejected() const {
  return static_cast<size_t>(std::count(keep.begin(), keep.end(), false));
}

Eigen::VectorXd resample_series(const Eigen::VectorXd& x, double source_rate_hz,
                                double target_rate_hz) {
  if (!(source_rate_hz > 0.0)) throw ArgumentError("source rate must be positive");
  if (!(target_rate_hz > 0.0)) throw ArgumentError("target rate must be positive");
  if (source_rate_hz == target_rate_hz || x.size() == 0) return x;

  const double ratio = target_rate_hz / source_rate_hz;
  const double cutoff = std::min(1.0, ratio);  // fraction of the input Nyquist
  constexpr double kBeta = 8.0;
  constexpr double kBaseHalfWidth = 32.0;
  const double half_width = kBaseHalfWidth / cutoff;

  const Eigen::Index n_in = x.size();
  const Eigen::Index n_out = static_cast<Eigen::Index>(std::llround(n_in * ratio));
  Eigen::VectorXd y(n_out);
  for (Eigen::Index m = 0; m < n_out; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const Eigen::Index lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(t - half_width)));
    const Eigen::Index hi = std::min<Eigen::Index>(n_in - 1, static_cast<Eigen::Index>(std::floor(t + half_width)));
    double acc = 0.0;
    double wsum = 0.0;
    for (Eigen::Index n = lo; n <= hi; ++n) {
      const double tau = t - static_cast<double>(n);
      const double h = cutoff * normalized_sinc(cutoff * tau) * kaiser_window(tau / half_width, kBeta);
      acc += h * x[n];
      wsum += h;
    }
    y[m] = acc / wsum;
  }
  return y;
}

Eigen::VectorXd bandpass_series(const Eigen::VectorXd& x, double sample_rate_hz,
                                double lo_hz, double hi_hz) {
  if (!(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz < sample_rate_hz / 2.0)) {
    throw ArgumentError("bandpass requires 0 <= lo < hi < rate/2");
  }
  if (x.size() < 2) return x;
  return sosfiltfilt(design_butter_bandpass(4, lo_hz, hi_hz, sample_rate_hz), x);
}

Eigen::VectorXd notch_series(const Eigen::VectorXd& x, double sample_rate_hz,
                             double f0_hz, double quality) {
  if (!(f0_hz > 0.0 && f0_hz < sample_rate_hz / 2.0)) {
    throw ArgumentError("notch frequency must lie inside (0, rate/2)");
  }
  if (!(quality > 0.0)) throw ArgumentError("notch quality must be positive");
  if (x.size() < 2) return x;
  return sosfiltfilt(design_notch(f0_hz, quality, sample_rate_hz), x);
}

Recording resample(const Recording& rec, double target_rate_hz) {
  const double fs = validated_rate(rec);
  if (!(target_rate_hz > 0.0)) throw ArgumentError("target rate must be positive");
  const double scale = target_rate_hz / fs;
  Recording out = map_channels(
      rec, [&](const Eigen::VectorXd& x) { return resample_series(x, fs, target_rate_hz); });
  out.sample_rate_hz = target_rate_hz;
  for (auto& m : out.markers) {
    m.start_sample = static_cast<Eigen::Index>(std::llround(m.start_sample * scale));
    m.end_sample = std::min<Eigen::Index>(
        out.n_samples(), static_cast<Eigen::Index>(std::llround(m.end_sample * scale)));
  }
  return out;
}

Recording bandpass(const Recording& rec, double lo_hz, double hi_hz) {
  const double fs = validated_rate(rec);
  return map_channels(
      rec, [&](const Eigen::VectorXd& x) { return bandpass_series(x, fs, lo_hz, hi_hz); });
}

Recording notch(const Recording& rec, double f0_hz, double quality) {
  const double fs = validated_rate(rec);
  return map_channels(
      rec, [&](const Eigen::VectorXd& x) { return notch_series(x, fs, f0_hz, quality); });
}

ArtifactMask reject_artifacts(const Recording& rec, double window_s, double z_threshold) {
  const double fs = validated_rate(rec);
  if (!(window_s > 0.0)) throw ArgumentError("artifact window must be positive");
  if (!(z_threshold > 0.0)) throw ArgumentError("z threshold must be positive");
  const Eigen::Index w = static_cast<Eigen::Index>(window_s * fs);
  if (w < 1 || w > rec.n_samples()) {
    throw ArgumentError("recording shorter than one artifact window");
  }
  const Eigen::Index n_win = rec.n_samples() / w;

  ArtifactMask mask;
  mask.window_samples = w;
  mask.keep.assign(static_cast<size_t>(n_win), true);
  mask.reason.assign(static_cast<size_t>(n_win), "");

  const Eigen::Index n_ch = rec.n_channels();
  Eigen::MatrixXd ptp(n_win, n_ch);
  for (Eigen::Index c = 0; c < n_ch; ++c) {
    for (Eigen::Index i = 0; i < n_win; ++i) {
      const auto seg = rec.samples.col(c).segment(i * w, w).cast<double>();
      ptp(i, c) = seg.maxCoeff() - seg.minCoeff();
    }
  }
  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const double mean = ptp.col(c).mean();
    double sd = 0.0;
    if (n_win > 1) {
      sd = std::sqrt((ptp.col(c).array() - mean).square().sum() /
                     static_cast<double>(n_win - 1));
    }
    const double limit = mean + z_threshold * sd;
    for (Eigen::Index i = 0; i < n_win; ++i) {
      if (ptp(i, c) > limit && mask.keep[static_cast<size_t>(i)]) {
        mask.keep[static_cast<size_t>(i)] = false;
        mask.reason[static_cast<size_t>(i)] =
            "peak-to-peak above mean + " + std::to_string(z_threshold) + "*std on channel " +
            rec.channels[static_cast<size_t>(c)].name;
      }
    }
  }
  return mask;
}

std::vector<Eigen::Index> epoch_starts(Eigen::Index n_samples, Eigen::Index window_samples,
                                       Eigen::Index step_samples) {
  if (window_samples < 1 || step_samples < 1 || step_samples > window_samples) {
    throw ArgumentError("epoching requires 0 < step <= window");
  }
  if (window_samples > n_samples) {
    throw ArgumentError("epoch window longer than the recording");
  }
  std::vector<Eigen::Index> starts;
  const Eigen::Index count = (n_samples - window_samples) / step_samples + 1;
  starts.reserve(static_cast<size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) starts.push_back(i * step_samples);
  return starts;
}

std::vector<Epoch> epoch(const Recording& rec, double window_s, double step_s) {
  const double fs = validated_rate(rec);
  // Fractional sample counts round toward zero for grid determinism.
  const Eigen::Index w = static_cast<Eigen::Index>(window_s * fs);
  const Eigen::Index s = static_cast<Eigen::Index>(step_s * fs);
  const auto starts = epoch_starts(rec.n_samples(), w, s);

  std::vector<Epoch> epochs;
  epochs.reserve(starts.size());
  for (const Eigen::Index start : starts) {
    Epoch e;
    e.start_sample = start;
    e.sample_rate_hz = fs;
    e.samples = rec.samples.middleRows(start, w).cast<double>();
    epochs.push_back(std::move(e));
  }
  return epochs;
}

}  // namespace cmckit
