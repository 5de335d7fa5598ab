#pragma once

#include "cmckit/types.hpp"

#include <compare>
#include <string>
#include <vector>

namespace cmckit {

// One feature column: a (channel, band, metric) triple, e.g.
// ("C3", "alpha", "band_power") or ("Cz", "gamma", "cmc_area").
struct FeatureKey {
  std::string channel;
  std::string band;
  std::string metric;

  auto operator<=>(const FeatureKey&) const = default;
  std::string column_name() const { return channel + ":" + band + ":" + metric; }
};

// Rows are observations (subjects, recordings or windows); columns are
// FeatureKeys. row_labels is optional and carries class labels for
// classifier datasets.
struct FeatureTable {
  std::vector<FeatureKey> columns;
  Eigen::MatrixXd values;  // rows x columns
  std::vector<std::string> row_labels;  // empty, or one label per row

  Eigen::Index n_rows() const { return values.rows(); }
  Eigen::Index n_cols() const { return values.cols(); }
};

void validate(const FeatureTable& table);

// CSV layout: header "label,<channel:band:metric>,..." when labels are
// present, otherwise just the feature columns; one row per observation.
FeatureTable read_feature_table(const std::string& path);
void write_feature_table(const FeatureTable& table, const std::string& path);

}  // namespace cmckit
