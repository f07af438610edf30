#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cardbench/ast.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/oracle.hpp"
#include "cardbench/rng.hpp"
#include "cardbench/value.hpp"

namespace cardbench {

struct Estimate {
  double value = 0;  // cardinality, >= 0
  std::string source;
  std::optional<double> confidence;
  std::optional<std::pair<double, double>> ci;  // low <= high
};

inline constexpr const char* kSourceIndependence = "pg-independence";
inline constexpr const char* kSourceSampling = "sampling";
inline constexpr const char* kSourceNdvStats = "ndv-stats";
inline constexpr const char* kSourceDigitModel = "digit-model";
inline constexpr const char* kSourceRemote = "remote";
inline constexpr const char* kSourceMock = "mock";

struct IndependenceOptions {
  double like_fallback = 0.005;  // selectivity when no MCV matches the pattern
};

namespace est_detail {

// Fraction of non-null values <= v, from equi-depth boundaries with linear
// interpolation inside the straddled bucket. Bucket occupancies are the exact
// floor(i*n/B) splits used when the histogram was built.
inline double fraction_le(const ColumnStats& st, double v, uint64_t nonnull) {
  const auto& bounds = st.histogram_bounds;
  if (bounds.size() < 2 || nonnull == 0) return 0.0;
  size_t buckets = bounds.size() - 1;
  double lo = as_double(bounds.front());
  double hi = as_double(bounds.back());
  if (v < lo) return 0.0;
  if (v >= hi) return 1.0;
  auto cut = [&](size_t i) { return static_cast<double>(i * nonnull / buckets); };
  for (size_t j = 1; j <= buckets; ++j) {
    double b0 = as_double(bounds[j - 1]);
    double b1 = as_double(bounds[j]);
    if (v > b1) continue;
    double within = b1 > b0 ? (v - b0) / (b1 - b0) : 1.0;
    return (cut(j - 1) + within * (cut(j) - cut(j - 1))) / static_cast<double>(nonnull);
  }
  return 1.0;
}

}  // namespace est_detail

// Single-predicate selectivity under the independence model. Also feeds the
// digit model's feature vector.
inline double independence_filter_selectivity(const Catalog& cat, const std::string& table,
                                              const FilterPred& f,
                                              const IndependenceOptions& opt = {}) {
  const ColumnStats& st = cat.column_stats(table, f.col.column);
  uint64_t rows = cat.stats_rows(table);
  if (rows == 0) return 0.0;
  double rowsd = static_cast<double>(rows);
  uint64_t nonnull = rows > st.null_count ? rows - st.null_count : 0;

  switch (f.op) {
    case CompareOp::Eq: {
      for (const auto& [v, c] : st.mcv)
        if (v == f.constant) return static_cast<double>(c) / rowsd;
      if (st.ndv == 0) return 0.0;
      double rest = 1.0 - static_cast<double>(st.mcv_total()) / rowsd;
      double sel = st.ndv > st.mcv.size()
                       ? rest / static_cast<double>(st.ndv - st.mcv.size())
                       : 0.0;
      return std::max(sel, 1.0 / rowsd);
    }
    case CompareOp::Like: {
      const std::string& pattern = std::get<std::string>(f.constant);
      uint64_t matched = 0;
      bool any = false;
      for (const auto& [v, c] : st.mcv) {
        if (like_match(std::get<std::string>(v), pattern)) {
          matched += c;
          any = true;
        }
      }
      return any ? static_cast<double>(matched) / rowsd : opt.like_fallback;
    }
    case CompareOp::Le:
    case CompareOp::Lt: {
      double frac = est_detail::fraction_le(st, as_double(f.constant), nonnull);
      return frac * static_cast<double>(nonnull) / rowsd;
    }
    case CompareOp::Ge:
    case CompareOp::Gt: {
      double frac = 1.0 - est_detail::fraction_le(st, as_double(f.constant), nonnull);
      return frac * static_cast<double>(nonnull) / rowsd;
    }
  }
  return 0.0;
}

// Classical statistics-only estimator: product of table sizes, per-filter
// selectivities, and 1/max(ndv) per equi-join. The Postgres-style baseline.
inline Estimate estimate_independence(const Catalog& cat, const QueryAst& ast,
                                      const IndependenceOptions& opt = {}) {
  double card = 1.0;
  for (const auto& t : ast.tables) card *= static_cast<double>(cat.stats_rows(t.table));
  auto table_of = [&](const std::string& alias) { return ast.find_alias(alias)->table; };
  for (const auto& f : ast.filters)
    card *= independence_filter_selectivity(cat, table_of(f.col.alias), f, opt);
  for (const auto& j : ast.joins) {
    uint64_t ndv_l = cat.column_stats(table_of(j.left.alias), j.left.column).ndv;
    uint64_t ndv_r = cat.column_stats(table_of(j.right.alias), j.right.column).ndv;
    uint64_t m = std::max(ndv_l, ndv_r);
    card *= m == 0 ? 0.0 : 1.0 / static_cast<double>(m);
  }
  if (ast.distinct_on) {
    uint64_t ndv = cat.column_stats(table_of(ast.distinct_on->alias), ast.distinct_on->column).ndv;
    card = std::min(card, static_cast<double>(ndv));
  }
  return {std::max(card, 1.0), kSourceIndependence, std::nullopt, std::nullopt};
}

// Bernoulli-sample estimator: evaluates the query on per-table samples and
// scales up. Deterministic per (seed, table name), so structurally equal ASTs
// always see identical samples.
inline Estimate estimate_sampling(const Catalog& db, const QueryAst& ast, double rate,
                                  uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw Error("sampling rate must be in (0, 1]");
  Catalog sampled;
  for (const auto& t : ast.tables) {
    if (sampled.tables.count(t.table)) continue;
    const TableData& full = db.table(t.table);
    TableData s;
    s.name = full.name;
    s.columns = full.columns;
    if (rate >= 1.0) {
      s.rows = full.rows;
    } else {
      Rng rng(mix_seed(seed, hash_str(t.table)));
      for (const auto& row : full.rows)
        if (rng.bernoulli(rate)) s.rows.push_back(row);
    }
    sampled.add_table(std::move(s));
  }
  uint64_t raw = execute_count(sampled, ast);
  double factor = 1.0;
  if (ast.distinct_on) {
    factor = 1.0 / rate;  // crude: distinct counts do not scale linearly
  } else {
    for (size_t i = 0; i < ast.tables.size(); ++i) factor /= rate;
  }
  Estimate e;
  e.value = static_cast<double>(raw) * factor;
  e.source = kSourceSampling;
  return e;
}

// DISTINCT-query baseline: the stored NDV, stale under writes by design.
inline Estimate estimate_ndv_from_stats(const ColumnStats& stats) {
  return {static_cast<double>(stats.ndv), kSourceNdvStats, std::nullopt, std::nullopt};
}

}  // namespace cardbench
