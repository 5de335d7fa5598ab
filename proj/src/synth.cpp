#include "cmckit/synth.hpp"

#include "cmckit/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace cmckit {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step keeps the per-purpose generators decorrelated.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd gaussian_noise(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = dist(rng);
  return x;
}

// Random-phase surrogate with a flat spectrum on the in-band bins and
// nothing outside. The sharp band edges keep the in-band shared-to-noise
// ratio, and with it the coherence target, constant across the band.
Eigen::VectorXd bandlimited_noise(Eigen::Index n, double fs, const BandSpec& band,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<std::complex<double>> spectrum(static_cast<size_t>(n), {0.0, 0.0});
  for (Eigen::Index k = 1; k < n / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (f < band.lo_hz || f >= band.hi_hz) continue;
    const std::complex<double> c = std::polar(1.0, phase(rng));
    spectrum[static_cast<size_t>(k)] = c;
    spectrum[static_cast<size_t>(n - k)] = std::conj(c);
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> time;
  fft.inv(time, spectrum);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = time[static_cast<size_t>(i)].real();
  return x;
}

}  // namespace

SharedSourcePair gen_shared_source(const SharedSourceSpec& spec) {
  validate(spec.band);
  if (!(spec.sample_rate_hz > 0.0)) throw ArgumentError("sample rate must be positive");
  if (!(spec.band.hi_hz < spec.sample_rate_hz / 2.0)) {
    throw ArgumentError("band must lie below the Nyquist frequency");
  }
  if (!(spec.snr1 >= 0.0) || !(spec.snr2 >= 0.0)) {
    throw ArgumentError("snr values must be nonnegative");
  }
  const auto n = static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.sample_rate_hz));
  if (n < 64) throw ArgumentError("duration too short for a band-limited mixture");

  const Eigen::VectorXd shared =
      bandlimited_noise(n, spec.sample_rate_hz, spec.band, mix_seed(spec.seed, 0));
  const Eigen::VectorXd noise1 = gaussian_noise(n, mix_seed(spec.seed, 1));
  const Eigen::VectorXd noise2 = gaussian_noise(n, mix_seed(spec.seed, 2));

  const WelchConfig cfg = welch_defaults(n, spec.sample_rate_hz);
  const double shared_power = band_power(welch_psd(shared, cfg), spec.band);

  auto assemble = [&](const Eigen::VectorXd& noise, double snr) -> Eigen::VectorXd {
    if (snr == 0.0) return noise;  // no shared content at all
    const double noise_power = band_power(welch_psd(noise, cfg), spec.band);
    const double scale = std::sqrt(shared_power / (noise_power * snr));  // 0 when snr = inf
    return shared + scale * noise;
  };

  SharedSourcePair pair;
  pair.x = assemble(noise1, spec.snr1);
  pair.y = assemble(noise2, spec.snr2);
  pair.expected_coherence = 1.0 / ((1.0 + 1.0 / spec.snr1) * (1.0 + 1.0 / spec.snr2));
  return pair;
}

Recording shared_source_recording(const SharedSourceSpec& spec) {
  const SharedSourcePair pair = gen_shared_source(spec);
  Recording rec;
  rec.sample_rate_hz = spec.sample_rate_hz;
  rec.channels = {{"C3", ChannelKind::EEG, standard_electrode_position("C3")},
                  {"EMG1", ChannelKind::EMG, {}}};
  rec.samples.resize(pair.x.size(), 2);
  rec.samples.col(0) = pair.x.cast<float>();
  rec.samples.col(1) = pair.y.cast<float>();
  return rec;
}

std::vector<FeatureVector> gen_state_features(State state, int n, double separation,
                                              std::uint64_t seed,
                                              const FeatureSchema& schema) {
  if (state == State::Unknown) throw ArgumentError("cannot generate Unknown-state features");
  if (n < 1) throw ArgumentError("need at least one feature vector");
  if (separation < 0.0) throw ArgumentError("separation must be nonnegative");
  if (schema.n_channels() < 1) throw ArgumentError("schema needs at least one channel");

  // Shared baselines; the informative directions sit `separation` standard
  // deviations away (unit sigma), mirrored between the two states.
  constexpr double kPowerBase = 10.0;
  constexpr double kAreaBase = 5.0;
  const double dir = (state == State::Intuitive) ? 1.0 : -1.0;

  std::mt19937_64 rng(mix_seed(seed, state == State::Intuitive ? 10 : 11));
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<FeatureVector> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    FeatureVector fv;
    fv.window_start_s = 0.02 * static_cast<double>(i);
    fv.values.resize(schema.size());
    for (Eigen::Index c = 0; c < schema.n_channels(); ++c) {
      const double alpha = kPowerBase + dir * separation + unit(rng);
      const double beta = kPowerBase - dir * separation + unit(rng);
      fv.values[schema.power_index(c, false)] = std::max(0.0, alpha);
      fv.values[schema.power_index(c, true)] = std::max(0.0, beta);
    }
    for (Eigen::Index c = 0; c < schema.n_channels(); ++c) {
      const double cmc_b = kAreaBase + dir * separation + unit(rng);
      const double cmc_g = kAreaBase + dir * separation + unit(rng);
      fv.values[schema.cmc_index(c, false)] = std::max(0.0, cmc_b);
      fv.values[schema.cmc_index(c, true)] = std::max(0.0, cmc_g);
    }
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace cmckit
