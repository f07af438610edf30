#pragma once

// Shared builders for micro-databases used across the test suites.

#include <cstdint>
#include <string>
#include <vector>

#include "cardbench/catalog.hpp"
#include "cardbench/rng.hpp"

namespace testsupport {

using namespace cardbench;

inline TableData make_table(std::string name, std::vector<ColumnDecl> cols,
                            std::vector<std::vector<Cell>> rows) {
  TableData t;
  t.name = std::move(name);
  t.columns = std::move(cols);
  t.rows = std::move(rows);
  return t;
}

inline Cell I(int64_t v) { return Value(v); }
inline Cell D(double v) { return Value(v); }
inline Cell S(std::string v) { return Value(std::move(v)); }
inline Cell N() { return std::nullopt; }

// Three joinable tables (t1.a = t2.a, t2.b = t3.b) with mild key skew and a
// text column for LIKE/equality filters.
inline Catalog micro_db(uint64_t seed = 42, size_t rows_per_table = 100) {
  Rng rng(seed);
  const char* names[] = {"smith", "johnson", "lee", "brown", "garcia", "miller",
                         "davis", "wilson",  "moore", "taylor"};
  Catalog cat;
  {
    TableData t;
    t.name = "t1";
    t.columns = {{"a", ColumnType::Int64}, {"v", ColumnType::Float64}, {"name", ColumnType::Text}};
    for (size_t i = 0; i < rows_per_table; ++i) {
      // a is zipf-ish over 1..20
      int64_t a = 1 + static_cast<int64_t>(rng.uniform_index(20) * rng.uniform01());
      Cell v = rng.uniform01() < 0.05 ? N() : D(rng.uniform_real(0, 100));
      t.rows.push_back({I(a), v, S(names[rng.uniform_index(10)])});
    }
    cat.add_table(std::move(t));
  }
  {
    TableData t;
    t.name = "t2";
    t.columns = {{"a", ColumnType::Int64}, {"b", ColumnType::Int64}, {"w", ColumnType::Float64}};
    for (size_t i = 0; i < rows_per_table; ++i) {
      int64_t a = 1 + static_cast<int64_t>(rng.uniform_index(20));
      int64_t b = 1 + static_cast<int64_t>(rng.uniform_index(15));
      t.rows.push_back({I(a), I(b), D(rng.uniform_real(-50, 50))});
    }
    cat.add_table(std::move(t));
  }
  {
    TableData t;
    t.name = "t3";
    t.columns = {{"b", ColumnType::Int64}, {"name", ColumnType::Text}};
    for (size_t i = 0; i < rows_per_table; ++i) {
      Cell b = rng.uniform01() < 0.05 ? N() : I(1 + static_cast<int64_t>(rng.uniform_index(15)));
      t.rows.push_back({b, S(names[rng.uniform_index(10)])});
    }
    cat.add_table(std::move(t));
  }
  cat.add_join_edge("t1", "a", "t2", "a");
  cat.add_join_edge("t2", "b", "t3", "b");
  build_all_stats(cat);
  return cat;
}

}  // namespace testsupport
