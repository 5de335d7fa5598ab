#include "cmckit/stats.hpp"

#include "cmckit/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

namespace cmckit {

namespace {

// Midranks of the pooled sample, then the rank sum of group a.
double rank_sum_a(std::span<const double> a, std::span<const double> b, bool* any_ties) {
  struct Tagged {
    double value;
    bool from_a;
  };
  std::vector<Tagged> pooled;
  pooled.reserve(a.size() + b.size());
  for (const double v : a) pooled.push_back({v, true});
  for (const double v : b) pooled.push_back({v, false});
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Tagged& l, const Tagged& r) { return l.value < r.value; });

  *any_ties = false;
  double r1 = 0.0;
  size_t i = 0;
  while (i < pooled.size()) {
    size_t j = i;
    while (j < pooled.size() && pooled[j].value == pooled[i].value) ++j;
    if (j - i > 1) *any_ties = true;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of i+1 .. j
    for (size_t k = i; k < j; ++k) {
      if (pooled[k].from_a) r1 += midrank;
    }
    i = j;
  }
  return r1;
}

// Counts of arrangements achieving each U value for group sizes (n1, n2),
// via N(u; i, j) = N(u - j; i-1, j) + N(u; i, j-1).
std::vector<double> u_distribution(int n1, int n2) {
  const size_t u_max = static_cast<size_t>(n1) * static_cast<size_t>(n2);
  // dist[i] holds N(.; i, j) as j sweeps 0..n2; N(u; i, 0) = [u == 0].
  std::vector<std::vector<double>> dist(static_cast<size_t>(n1) + 1);
  for (int i = 0; i <= n1; ++i) {
    dist[static_cast<size_t>(i)].assign(u_max + 1, 0.0);
    dist[static_cast<size_t>(i)][0] = 1.0;
  }
  for (int j = 1; j <= n2; ++j) {
    for (int i = 1; i <= n1; ++i) {  // ascending: dist[i-1] is already at j
      auto& row = dist[static_cast<size_t>(i)];
      const auto& prev = dist[static_cast<size_t>(i) - 1];
      for (int u = static_cast<int>(u_max); u >= 0; --u) {
        if (u - j >= 0) row[static_cast<size_t>(u)] += prev[static_cast<size_t>(u - j)];
      }
    }
  }
  return dist[static_cast<size_t>(n1)];
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double quantile(const std::vector<double>& sorted, double p) {
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

GroupComparison mann_whitney_u(std::span<const double> a, std::span<const double> b,
                               Tail tail) {
  const int n1 = static_cast<int>(a.size());
  const int n2 = static_cast<int>(b.size());
  if (n1 < 1 || n2 < 1) throw ArgumentError("Mann-Whitney groups must be non-empty");

  bool ties = false;
  const double r1 = rank_sum_a(a, b, &ties);
  const double u = r1 - 0.5 * n1 * (n1 + 1);
  const double m = static_cast<double>(n1) * n2;

  GroupComparison cmp;
  cmp.u_statistic = u;
  cmp.n1 = n1;
  cmp.n2 = n2;

  if (!ties && n1 + n2 <= 20) {
    cmp.method = PMethod::Exact;
    const std::vector<double> counts = u_distribution(n1, n2);
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const auto ui = static_cast<int>(std::llround(u));
    auto tail_leq = [&](int v) {
      double acc = 0.0;
      for (int k = 0; k <= v && k < static_cast<int>(counts.size()); ++k) {
        acc += counts[static_cast<size_t>(k)];
      }
      return acc / total;
    };
    if (tail == Tail::TwoSided) {
      const int lower = std::min(ui, static_cast<int>(std::llround(m)) - ui);
      cmp.p_value = std::min(1.0, 2.0 * tail_leq(lower));
    } else {
      // P(U >= u) by symmetry of the null distribution.
      cmp.p_value = tail_leq(static_cast<int>(std::llround(m)) - ui);
    }
    return cmp;
  }

  cmp.method = PMethod::NormalApprox;
  const double n = n1 + n2;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  double tie_term = 0.0;
  for (size_t i = 0; i < pooled.size();) {
    size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = m / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) {
    cmp.p_value = 1.0;  // every pooled value tied
    return cmp;
  }
  const double sd = std::sqrt(var);
  const double mu = m / 2.0;
  if (tail == Tail::TwoSided) {
    const double z = std::max(0.0, std::abs(u - mu) - 0.5) / sd;
    cmp.p_value = std::min(1.0, 2.0 * normal_sf(z));
  } else {
    const double z = (u - mu - 0.5) / sd;
    cmp.p_value = normal_sf(z);
  }
  return cmp;
}

std::vector<ComparisonRow> group_compare(const FeatureTable& expert,
                                         const FeatureTable& novice, Tail tail) {
  validate(expert);
  validate(novice);
  if (expert.n_rows() < 1 || novice.n_rows() < 1) {
    throw ArgumentError("group_compare requires at least one row per group");
  }

  std::map<FeatureKey, std::pair<Eigen::Index, Eigen::Index>> aligned;
  for (Eigen::Index c = 0; c < expert.n_cols(); ++c) {
    aligned[expert.columns[static_cast<size_t>(c)]] = {c, -1};
  }
  for (Eigen::Index c = 0; c < novice.n_cols(); ++c) {
    auto it = aligned.find(novice.columns[static_cast<size_t>(c)]);
    if (it == aligned.end()) {
      throw SchemaError("novice column '" +
                        novice.columns[static_cast<size_t>(c)].column_name() +
                        "' is missing from the expert table");
    }
    it->second.second = c;
  }
  for (const auto& [key, cols] : aligned) {
    if (cols.second < 0) {
      throw SchemaError("expert column '" + key.column_name() +
                        "' is missing from the novice table");
    }
  }

  std::vector<ComparisonRow> rows;
  rows.reserve(aligned.size());
  for (const auto& [key, cols] : aligned) {
    std::vector<double> e(expert.values.col(cols.first).data(),
                          expert.values.col(cols.first).data() + expert.n_rows());
    std::vector<double> v(novice.values.col(cols.second).data(),
                          novice.values.col(cols.second).data() + novice.n_rows());
    ComparisonRow row;
    row.key = key;
    row.test = mann_whitney_u(e, v, tail);
    std::sort(e.begin(), e.end());
    std::sort(v.begin(), v.end());
    row.median_expert = quantile(e, 0.5);
    row.iqr_expert = quantile(e, 0.75) - quantile(e, 0.25);
    row.median_novice = quantile(v, 0.5);
    row.iqr_novice = quantile(v, 0.75) - quantile(v, 0.25);
    rows.push_back(std::move(row));
  }
  return rows;  // std::map iteration already orders by (channel, band, metric)
}

void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "channel,band,metric,median_expert,median_novice,U,p,method\n";
  for (const auto& r : rows) {
    out << r.key.channel << ',' << r.key.band << ',' << r.key.metric << ','
        << format_double(r.median_expert) << ',' << format_double(r.median_novice) << ','
        << format_double(r.test.u_statistic) << ',' << format_double(r.test.p_value) << ','
        << (r.test.method == PMethod::Exact ? "exact" : "normal_approx") << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace cmckit
