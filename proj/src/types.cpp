#include "cmckit/types.hpp"

#include "cmckit/text.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace cmckit {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string to_string(ChannelKind kind) {
  return kind == ChannelKind::EEG ? "EEG" : "EMG";
}

ChannelKind channel_kind_from_string(const std::string& s) {
  if (s == "EEG") return ChannelKind::EEG;
  if (s == "EMG") return ChannelKind::EMG;
  throw SchemaError("unknown channel kind '" + s + "' (expected EEG or EMG)");
}

Eigen::Index Recording::channel_index(const std::string& name) const {
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(channels.size()); ++i) {
    if (channels[static_cast<size_t>(i)].name == name) return i;
  }
  return -1;
}

void validate(const Recording& rec) {
  if (!(rec.sample_rate_hz > 0.0)) {
    throw ArgumentError("sample_rate_hz must be positive");
  }
  if (rec.samples.cols() != static_cast<Eigen::Index>(rec.channels.size())) {
    throw SchemaError("sample column count (" + std::to_string(rec.samples.cols()) +
                      ") does not match channel count (" +
                      std::to_string(rec.channels.size()) + ")");
  }
  std::set<std::string> names;
  for (const auto& ch : rec.channels) {
    if (!names.insert(ch.name).second) {
      throw SchemaError("duplicate channel name '" + ch.name + "'");
    }
    if (ch.kind == ChannelKind::EEG) {
      if (!ch.position) {
        throw SchemaError("EEG channel '" + ch.name + "' has no position");
      }
      const double r2 = ch.position->squaredNorm();
      if (std::abs(r2 - 1.0) > 1e-6) {
        throw SchemaError("EEG channel '" + ch.name + "' position is off the unit sphere");
      }
    }
  }
  if (!rec.samples.allFinite()) {
    throw DataError("recording contains non-finite sample values");
  }
  for (const auto& m : rec.markers) {
    if (m.start_sample < 0 || m.start_sample >= m.end_sample ||
        m.end_sample > rec.n_samples()) {
      throw SchemaError("marker '" + m.name + "' interval [" +
                        std::to_string(m.start_sample) + ", " +
                        std::to_string(m.end_sample) + ") is out of bounds");
    }
  }
}

void validate(const BandSpec& band) {
  if (!(band.lo_hz >= 0.0) || !(band.lo_hz < band.hi_hz)) {
    throw ArgumentError("band '" + band.name + "' requires 0 <= lo < hi, got [" +
                        std::to_string(band.lo_hz) + ", " + std::to_string(band.hi_hz) + "]");
  }
}

BandSpec theta_band() { return {"theta", 4.0, 8.0}; }
BandSpec alpha_band() { return {"alpha", 8.0, 12.0}; }
BandSpec beta_band() { return {"beta", 15.0, 30.0}; }
BandSpec gamma_band() { return {"gamma", 30.0, 45.0}; }

std::vector<BandSpec> default_bands() {
  return {alpha_band(), beta_band(), gamma_band()};
}

BandSpec parse_band(const std::string& text) {
  for (const auto& b : {theta_band(), alpha_band(), beta_band(), gamma_band()}) {
    if (text == b.name) return b;
  }
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ArgumentError("band '" + text + "' is neither a known name nor lo:hi");
  }
  BandSpec band;
  band.name = text;
  try {
    size_t used = 0;
    band.lo_hz = std::stod(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("");
    band.hi_hz = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ArgumentError("cannot parse band '" + text + "' as lo:hi");
  }
  validate(band);
  return band;
}

namespace {

// 10-20 positions on the unit sphere (+x right, +y anterior, +z vertex),
// derived from the standard 10/20 arc construction: midline sites at 36/72
// degrees of inclination, C3/C4 on the coronal arc, F3/F4 midway along the
// great circle between Fz and F7/F8.
struct ElectrodeEntry {
  const char* name;
  double x, y, z;
};

constexpr double kSin36 = 0.58778525229247314;
constexpr double kCos36 = 0.80901699437494745;
constexpr double kSin72 = 0.95105651629515353;
constexpr double kCos72 = 0.30901699437494745;
// F3 = normalize(Fz + F7), F7 = (-sin72*cos36, sin72*sin36, cos72).
constexpr double kF3x = 0.43302742917386172;
constexpr double kF3y = 0.64541636285449455;
constexpr double kF3z = 0.62922568617527974;

const ElectrodeEntry kStandardPositions[] = {
    {"Fpz", 0.0, kSin72, kCos72},
    {"Fz", 0.0, kSin36, kCos36},
    {"F3", -kF3x, kF3y, kF3z},
    {"F4", kF3x, kF3y, kF3z},
    {"C3", -kSin36, 0.0, kCos36},
    {"Cz", 0.0, 0.0, 1.0},
    {"C4", kSin36, 0.0, kCos36},
    {"Pz", 0.0, -kSin36, kCos36},
};

}  // namespace

std::optional<Eigen::Vector3d> standard_electrode_position(const std::string& name) {
  for (const auto& e : kStandardPositions) {
    if (name == e.name) {
      return Eigen::Vector3d(e.x, e.y, e.z).normalized();
    }
  }
  return std::nullopt;
}

}  // namespace cmckit
