#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmckit {

// Error taxonomy. The CLI maps everything except IoError to exit code 1,
// IoError to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values or preconditions.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (carries a 1-based line number when known).
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Structurally valid input that contradicts the declared schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Non-finite or otherwise unusable data values.
class DataError : public Error {
 public:
  using Error::Error;
};

// Lookup of a named entity that does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Ambiguous request (e.g. duplicate marker names).
class AmbiguityError : public Error {
 public:
  using Error::Error;
};

// Filesystem / stream failures.
class IoError : public Error {
 public:
  using Error::Error;
};

enum class ChannelKind { EEG, EMG };

std::string to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(const std::string& s);

struct ChannelMeta {
  std::string name;
  ChannelKind kind = ChannelKind::EEG;
  // Unit-sphere coordinates (+x right, +y anterior, +z vertex).
  // Required for EEG, absent for EMG.
  std::optional<Eigen::Vector3d> position;
};

// Named task phase: half-open sample interval [start_sample, end_sample).
struct Marker {
  std::string name;
  Eigen::Index start_sample = 0;
  Eigen::Index end_sample = 0;
};

// Multichannel uniformly sampled recording, values in microvolts.
// Samples are stored as float32: the on-disk format serializes with
// 9 significant digits, which round-trips float32 exactly.
struct Recording {
  double sample_rate_hz = 0.0;
  std::vector<ChannelMeta> channels;
  Eigen::MatrixXf samples;  // time x channel
  std::vector<Marker> markers;

  Eigen::Index n_samples() const { return samples.rows(); }
  Eigen::Index n_channels() const { return samples.cols(); }
  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(n_samples()) / sample_rate_hz : 0.0;
  }
  // Index of a named channel, -1 if absent.
  Eigen::Index channel_index(const std::string& name) const;
  // Channel as a double-precision series for analysis.
  Eigen::VectorXd channel(Eigen::Index col) const {
    return samples.col(col).cast<double>();
  }
};

// Throws if any Recording invariant is violated.
void validate(const Recording& rec);

struct BandSpec {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;

  double width() const { return hi_hz - lo_hz; }
};

void validate(const BandSpec& band);

// Canonical band set. Theta is provided but excluded from the default
// feature set (vibration of heavy machinery contaminates that range).
BandSpec theta_band();  //  4-8 Hz
BandSpec alpha_band();  //  8-12 Hz
BandSpec beta_band();   // 15-30 Hz
BandSpec gamma_band();  // 30-45 Hz
std::vector<BandSpec> default_bands();  // alpha, beta, gamma

// Parses "lo:hi" or a canonical band name ("alpha", "beta", "gamma", "theta").
BandSpec parse_band(const std::string& text);

// Built-in 10-20 unit-sphere position for the supported electrode names
// (Fpz, Fz, F3, F4, C3, Cz, C4, Pz); nullopt for anything else.
std::optional<Eigen::Vector3d> standard_electrode_position(const std::string& name);

}  // namespace cmckit
