#pragma once

#include "cmckit/state_engine.hpp"
#include "cmckit/types.hpp"

#include <cstdint>

namespace cmckit {

// Two-channel mixture with analytically known coherence: x = s + n1,
// y = s + n2, where s is band-limited noise and n1, n2 are independent
// white noises scaled so the in-band shared-to-noise power ratios hit
// snr1, snr2. snr of 0 removes the shared part from that channel; an
// infinite snr removes the noise.
struct SharedSourceSpec {
  double duration_s = 0.0;
  double sample_rate_hz = 0.0;
  BandSpec band = beta_band();
  double snr1 = 1.0;
  double snr2 = 1.0;
  std::uint64_t seed = 0;
};

struct SharedSourcePair {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  // In-band target: 1 / ((1 + 1/snr1) * (1 + 1/snr2)).
  double expected_coherence = 0.0;
};

SharedSourcePair gen_shared_source(const SharedSourceSpec& spec);

// The pair wrapped in the on-disk recording layout: one EEG channel ("C3")
// and one EMG channel ("EMG1").
Recording shared_source_recording(const SharedSourceSpec& spec);

// Labeled feature vectors with the characteristic state signatures pushed
// `separation` standard deviations away from a shared baseline: Intuitive
// gets alpha power up, beta power down, coupling areas up; Intellectual is
// mirrored. separation 0 makes the classes distributionally identical.
std::vector<FeatureVector> gen_state_features(State state, int n, double separation,
                                              std::uint64_t seed, const FeatureSchema& schema);

}  // namespace cmckit
