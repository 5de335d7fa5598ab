#include "cmckit/signal_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace cmckit {

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // nlohmann reports byte positions, not lines; recover the line number.
    std::ifstream again(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(again)),
                     std::istreambuf_iterator<char>());
    long line = 1;
    for (size_t i = 0; i < text.size() && i + 1 < e.byte; ++i) {
      if (text[i] == '\n') ++line;
    }
    throw FormatError(std::string("invalid JSON in '") + path + "': " + e.what(), line);
  }
}

std::vector<std::string> split_csv_row(const std::string& row) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = row.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(row.substr(start));
      break;
    }
    fields.push_back(row.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

void format_sample(char* buf, size_t n, float v) { std::snprintf(buf, n, "%.9g", v); }

}  // namespace

Recording load_recording(const std::string& metadata_path, const std::string& data_path) {
  const json meta = load_json(metadata_path);

  Recording rec;
  try {
    if (!meta.contains("version") || meta.at("version").get<int>() != 1) {
      throw SchemaError("metadata version missing or unsupported (expected 1)");
    }
    rec.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    for (const auto& jch : meta.at("channels")) {
      ChannelMeta ch;
      ch.name = jch.at("name").get<std::string>();
      ch.kind = channel_kind_from_string(jch.at("kind").get<std::string>());
      if (jch.contains("position")) {
        const auto& p = jch.at("position");
        if (!p.is_array() || p.size() != 3) {
          throw SchemaError("channel '" + ch.name + "' position must be [x,y,z]");
        }
        ch.position = Eigen::Vector3d(p[0].get<double>(), p[1].get<double>(),
                                      p[2].get<double>());
      } else if (ch.kind == ChannelKind::EEG) {
        ch.position = standard_electrode_position(ch.name);
        if (!ch.position) {
          throw SchemaError("EEG channel '" + ch.name +
                            "' has no position and is not a built-in 10-20 site");
        }
      }
      rec.channels.push_back(std::move(ch));
    }
    if (meta.contains("markers")) {
      for (const auto& jm : meta.at("markers")) {
        Marker m;
        m.name = jm.at("name").get<std::string>();
        m.start_sample = jm.at("start_sample").get<long>();
        m.end_sample = jm.at("end_sample").get<long>();
        rec.markers.push_back(std::move(m));
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("metadata '") + metadata_path + "': " + e.what());
  }

  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + data_path + "' for reading");

  std::string row;
  long line = 1;
  if (!std::getline(in, row)) throw FormatError("empty data file '" + data_path + "'", line);
  if (!row.empty() && row.back() == '\r') {
    throw FormatError("CRLF line endings in '" + data_path + "' (expected LF)", line);
  }
  const auto header = split_csv_row(row);
  if (header.size() != rec.channels.size()) {
    throw SchemaError("data header has " + std::to_string(header.size()) +
                      " columns, metadata declares " + std::to_string(rec.channels.size()));
  }
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c] != rec.channels[c].name) {
      throw SchemaError("data column " + std::to_string(c + 1) + " is '" + header[c] +
                        "', metadata declares '" + rec.channels[c].name + "'");
    }
  }

  const Eigen::Index n_ch = static_cast<Eigen::Index>(rec.channels.size());
  std::vector<float> buffer;
  while (std::getline(in, row)) {
    ++line;
    if (row.empty() && in.eof()) break;
    Eigen::Index col = 0;
    const char* p = row.c_str();
    const char* const end = p + row.size();
    while (true) {
      char* after = nullptr;
      const float v = std::strtof(p, &after);
      if (after == p) throw FormatError("unparsable value in '" + data_path + "'", line);
      if (!std::isfinite(v)) throw DataError("non-finite value at line " + std::to_string(line));
      if (col >= n_ch) throw FormatError("too many columns in '" + data_path + "'", line);
      buffer.push_back(v);
      ++col;
      p = after;
      if (p == end) break;
      if (*p != ',') throw FormatError("expected ',' in '" + data_path + "'", line);
      ++p;
    }
    if (col != n_ch) throw FormatError("row has " + std::to_string(col) + " of " +
                                       std::to_string(n_ch) + " columns", line);
  }

  const Eigen::Index n_rows = static_cast<Eigen::Index>(buffer.size()) / n_ch;
  rec.samples.resize(n_rows, n_ch);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    for (Eigen::Index c = 0; c < n_ch; ++c) {
      rec.samples(r, c) = buffer[static_cast<size_t>(r * n_ch + c)];
    }
  }

  validate(rec);
  return rec;
}

void save_recording(const Recording& rec, const std::string& metadata_path,
                    const std::string& data_path) {
  validate(rec);

  json meta;
  meta["version"] = 1;
  meta["sample_rate_hz"] = rec.sample_rate_hz;
  meta["channels"] = json::array();
  for (const auto& ch : rec.channels) {
    json jch;
    jch["name"] = ch.name;
    jch["kind"] = to_string(ch.kind);
    if (ch.position) {
      jch["position"] = {ch.position->x(), ch.position->y(), ch.position->z()};
    }
    meta["channels"].push_back(std::move(jch));
  }
  meta["markers"] = json::array();
  for (const auto& m : rec.markers) {
    meta["markers"].push_back({{"name", m.name},
                               {"start_sample", static_cast<long>(m.start_sample)},
                               {"end_sample", static_cast<long>(m.end_sample)}});
  }

  {
    std::ofstream out(metadata_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + metadata_path + "' for writing");
    out << meta.dump(2) << '\n';
    if (!out) throw IoError("write to '" + metadata_path + "' failed");
  }

  std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + data_path + "' for writing");
  for (size_t c = 0; c < rec.channels.size(); ++c) {
    if (c) out << ',';
    out << rec.channels[c].name;
  }
  out << '\n';
  char buf[32];
  std::string row;
  for (Eigen::Index r = 0; r < rec.n_samples(); ++r) {
    row.clear();
    for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
      if (c) row += ',';
      format_sample(buf, sizeof(buf), rec.samples(r, c));
      row += buf;
    }
    row += '\n';
    out << row;
  }
  if (!out) throw IoError("write to '" + data_path + "' failed");
}

Recording slice_by_marker(const Recording& rec, const std::string& marker_name) {
  validate(rec);
  const Marker* found = nullptr;
  for (const auto& m : rec.markers) {
    if (m.name != marker_name) continue;
    if (found) throw AmbiguityError("marker name '" + marker_name + "' occurs more than once");
    found = &m;
  }
  if (!found) throw NotFoundError("no marker named '" + marker_name + "'");

  Recording out;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.channels = rec.channels;
  const Eigen::Index n = found->end_sample - found->start_sample;
  out.samples = rec.samples.middleRows(found->start_sample, n);
  for (const auto& m : rec.markers) {
    const Eigen::Index lo = std::max(m.start_sample, found->start_sample);
    const Eigen::Index hi = std::min(m.end_sample, found->end_sample);
    if (lo < hi) {
      out.markers.push_back({m.name, lo - found->start_sample, hi - found->start_sample});
    }
  }
  return out;
}

}  // namespace cmckit
