#include "cmckit/feature_table.hpp"

#include "cmckit/text.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>

namespace cmckit {

void validate(const FeatureTable& table) {
  if (table.values.cols() != static_cast<Eigen::Index>(table.columns.size())) {
    throw SchemaError("feature table declares " + std::to_string(table.columns.size()) +
                      " columns but holds " + std::to_string(table.values.cols()));
  }
  if (!table.row_labels.empty() &&
      table.values.rows() != static_cast<Eigen::Index>(table.row_labels.size())) {
    throw SchemaError("feature table row labels do not match the row count");
  }
  std::set<FeatureKey> seen;
  for (const auto& key : table.columns) {
    if (!seen.insert(key).second) {
      throw SchemaError("duplicate feature column '" + key.column_name() + "'");
    }
  }
  if (!table.values.allFinite()) {
    throw DataError("feature table contains non-finite values");
  }
}

namespace {

FeatureKey parse_key(const std::string& header, long line) {
  const auto first = header.find(':');
  const auto second = header.find(':', first + 1);
  if (first == std::string::npos || second == std::string::npos) {
    throw FormatError("feature column '" + header + "' is not channel:band:metric", line);
  }
  return {header.substr(0, first), header.substr(first + 1, second - first - 1),
          header.substr(second + 1)};
}

std::vector<std::string> split(const std::string& row) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const auto comma = row.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(row.substr(start));
      return out;
    }
    out.push_back(row.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

FeatureTable read_feature_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string row;
  long line = 1;
  if (!std::getline(in, row)) throw FormatError("empty feature table '" + path + "'", line);
  const auto header = split(row);

  FeatureTable table;
  const bool labeled = !header.empty() && header[0] == "label";
  for (size_t c = labeled ? 1 : 0; c < header.size(); ++c) {
    table.columns.push_back(parse_key(header[c], line));
  }

  std::vector<double> buffer;
  Eigen::Index n_rows = 0;
  while (std::getline(in, row)) {
    ++line;
    if (row.empty() && in.eof()) break;
    const auto fields = split(row);
    if (fields.size() != header.size()) {
      throw FormatError("row has " + std::to_string(fields.size()) + " of " +
                        std::to_string(header.size()) + " columns", line);
    }
    size_t c = 0;
    if (labeled) table.row_labels.push_back(fields[c++]);
    for (; c < fields.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(fields[c].c_str(), &end);
      if (fields[c].empty() || end != fields[c].c_str() + fields[c].size()) {
        throw FormatError("unparsable value '" + fields[c] + "'", line);
      }
      buffer.push_back(v);
    }
    ++n_rows;
  }

  const auto n_cols = static_cast<Eigen::Index>(table.columns.size());
  table.values.resize(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      table.values(r, c) = buffer[static_cast<size_t>(r * n_cols + c)];
    }
  }
  validate(table);
  return table;
}

void write_feature_table(const FeatureTable& table, const std::string& path) {
  validate(table);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  const bool labeled = !table.row_labels.empty();
  if (labeled) out << "label";
  for (size_t c = 0; c < table.columns.size(); ++c) {
    if (labeled || c) out << ',';
    out << table.columns[c].column_name();
  }
  out << '\n';
  for (Eigen::Index r = 0; r < table.n_rows(); ++r) {
    if (labeled) out << table.row_labels[static_cast<size_t>(r)];
    for (Eigen::Index c = 0; c < table.n_cols(); ++c) {
      if (labeled || c) out << ',';
      out << format_double(table.values(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace cmckit
