#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cardbench/error.hpp"

namespace cardbench {

// Q-error = max(est/truth, truth/est), both operands clamped to >= 1 so zero
// cardinalities stay finite. Symmetric, >= 1, equals 1 iff est == truth after
// clamping.
inline double qerror(double est, double truth) {
  double e = std::max(est, 1.0);
  double t = std::max(truth, 1.0);
  return std::max(e / t, t / e);
}

// Nearest-rank percentile over a sorted ascending list: the ceil(q/100 * n)-th
// element, 1-indexed.
inline double nearest_rank_percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw Error("percentile of an empty list");
  size_t n = sorted.size();
  size_t rank = static_cast<size_t>(std::ceil(q / 100.0 * static_cast<double>(n)));
  rank = std::clamp<size_t>(rank, 1, n);
  return sorted[rank - 1];
}

struct QErrorReport {
  std::vector<std::pair<double, double>> quantiles;  // (quantile, q-error)
  uint64_t count = 0;
  std::string estimator;
  std::string family;
  std::map<std::string, std::vector<std::pair<double, double>>> breakdown;  // tag -> quantiles

  double at(double q) const {
    for (const auto& [quant, val] : quantiles)
      if (quant == q) return val;
    throw Error("quantile not in report");
  }
};

inline const std::vector<double>& default_quantiles() {
  static const std::vector<double> q{50, 70, 90, 95, 99};
  return q;
}

inline QErrorReport percentile_report(std::vector<double> errors,
                                      const std::vector<double>& quantiles = default_quantiles()) {
  if (errors.empty()) throw Error("percentile report needs at least one error");
  std::sort(errors.begin(), errors.end());
  QErrorReport rep;
  rep.count = errors.size();
  for (double q : quantiles) rep.quantiles.emplace_back(q, nearest_rank_percentile(errors, q));
  return rep;
}

}  // namespace cardbench
