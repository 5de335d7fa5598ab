#pragma once

#include "cmckit/feature_table.hpp"

#include <span>
#include <vector>

namespace cmckit {

enum class PMethod { Exact, NormalApprox };

enum class Tail {
  TwoSided,
  Greater,  // alternative: the first group is stochastically greater
};

struct GroupComparison {
  double u_statistic = 0.0;  // U for the first group, midrank tie handling
  double p_value = 1.0;
  int n1 = 0;
  int n2 = 0;
  PMethod method = PMethod::Exact;
};

// Mann-Whitney U. Exact p by full enumeration of the U distribution when
// n1 + n2 <= 20 and the pooled data is tie-free; otherwise the normal
// approximation with tie and continuity corrections.
GroupComparison mann_whitney_u(std::span<const double> a, std::span<const double> b,
                               Tail tail = Tail::TwoSided);

struct ComparisonRow {
  FeatureKey key;
  double median_expert = 0.0;
  double iqr_expert = 0.0;
  double median_novice = 0.0;
  double iqr_novice = 0.0;
  GroupComparison test;
};

// One comparison per shared feature column, ordered by channel, band,
// metric. Tables must carry identical column sets.
std::vector<ComparisonRow> group_compare(const FeatureTable& expert,
                                         const FeatureTable& novice,
                                         Tail tail = Tail::TwoSided);

// CSV columns: channel, band, metric, median_expert, median_novice, U, p, method.
void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path);

}  // namespace cmckit
