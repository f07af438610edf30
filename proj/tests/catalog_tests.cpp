#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "cardbench/catalog.hpp"
#include "support.hpp"

using namespace cardbench;
using testsupport::D;
using testsupport::I;
using testsupport::N;
using testsupport::S;

namespace {

std::string write_temp_csv(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / ("cardbench_" + name);
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("ingest_table parses typed CSV") {
  auto path = write_temp_csv("ingest1.csv", "id,name\n1,alice\n2,bob\n3,carol\n");
  TableData t = ingest_table(path, "people",
                             {{"id", ColumnType::Int64}, {"name", ColumnType::Text}});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0][0] == I(1));
  CHECK(t.rows[2][1] == S("carol"));
}

TEST_CASE("ingest_table turns unparseable numeric cells into nulls") {
  auto path = write_temp_csv("ingest2.csv", "id,name\nabc,alice\n2,bob\n");
  TableData t = ingest_table(path, "people",
                             {{"id", ColumnType::Int64}, {"name", ColumnType::Text}});
  REQUIRE(t.rows.size() == 2);
  CHECK_FALSE(t.rows[0][0].has_value());  // row retained, slot null
  CHECK(t.rows[0][1] == S("alice"));
}

TEST_CASE("ingest_table rejects header/schema mismatch") {
  auto path = write_temp_csv("ingest3.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(
      ingest_table(path, "t", {{"a", ColumnType::Int64}, {"c", ColumnType::Int64}}),
      SchemaError);
}

TEST_CASE("ingest_table rejects duplicate schema columns and missing files") {
  auto path = write_temp_csv("ingest4.csv", "a,a\n1,2\n");
  CHECK_THROWS_AS(
      ingest_table(path, "t", {{"a", ColumnType::Int64}, {"a", ColumnType::Int64}}),
      SchemaError);
  CHECK_THROWS_AS(ingest_table("/nonexistent/file.csv", "t", {{"a", ColumnType::Int64}}),
                  Error);
}

TEST_CASE("ingest treats empty fields as nulls, with quoting") {
  auto path = write_temp_csv("ingest5.csv", "a,s\n1,\"x,\"\"y\"\n,plain\n");
  TableData t =
      ingest_table(path, "t", {{"a", ColumnType::Int64}, {"s", ColumnType::Text}});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == S("x,\"y"));
  CHECK_FALSE(t.rows[1][0].has_value());
}

TEST_CASE("build_stats matches the hand-worked 6-value example") {
  TableData t = testsupport::make_table(
      "t", {{"x", ColumnType::Int64}}, {{I(1)}, {I(2)}, {I(2)}, {I(3)}, {I(3)}, {I(3)}});
  ColumnStats st = build_stats(t, "x", 3, 2);
  CHECK(st.ndv == 3);
  REQUIRE(st.mcv.size() == 2);
  CHECK(st.mcv[0] == std::pair<Value, uint64_t>{Value(int64_t{3}), 3});
  CHECK(st.mcv[1] == std::pair<Value, uint64_t>{Value(int64_t{2}), 2});
  REQUIRE(st.histogram_bounds.size() == 4);
  CHECK(st.histogram_bounds == std::vector<Value>{Value(int64_t{1}), Value(int64_t{2}),
                                                  Value(int64_t{3}), Value(int64_t{3})});
}

TEST_CASE("build_stats on constant and text columns") {
  TableData c = testsupport::make_table("c", {{"x", ColumnType::Int64}},
                                        {{I(5)}, {I(5)}, {I(5)}, {I(5)}});
  ColumnStats st = build_stats(c, "x", 2, 1);
  CHECK(st.ndv == 1);
  REQUIRE(st.mcv.size() == 1);
  CHECK(st.mcv[0].second == 4);
  for (const auto& b : st.histogram_bounds) CHECK(b == Value(int64_t{5}));
  REQUIRE(st.histogram_bounds.size() == 3);

  TableData s = testsupport::make_table("s", {{"x", ColumnType::Text}},
                                        {{S("a")}, {S("b")}, {S("a")}});
  ColumnStats st2 = build_stats(s, "x", 10, 1);
  CHECK(st2.ndv == 2);
  REQUIRE(st2.mcv.size() == 1);
  CHECK(st2.mcv[0] == std::pair<Value, uint64_t>{Value(std::string("a")), 2});
  CHECK(st2.histogram_bounds.empty());
}

TEST_CASE("build_stats on an all-null column signals via empty stats") {
  TableData t = testsupport::make_table("t", {{"x", ColumnType::Int64}}, {{N()}, {N()}});
  ColumnStats st = build_stats(t, "x", 4, 3);
  CHECK(st.ndv == 0);
  CHECK(st.null_count == 2);
  CHECK(st.mcv.empty());
  CHECK(st.histogram_bounds.empty());
  CHECK_FALSE(st.min.has_value());
}

TEST_CASE("MCV ties break by ascending value") {
  TableData t = testsupport::make_table(
      "t", {{"x", ColumnType::Int64}}, {{I(7)}, {I(7)}, {I(4)}, {I(4)}, {I(9)}});
  ColumnStats st = build_stats(t, "x", 2, 2);
  REQUIRE(st.mcv.size() == 2);
  CHECK(st.mcv[0].first == Value(int64_t{4}));
  CHECK(st.mcv[1].first == Value(int64_t{7}));
}

TEST_CASE("equi-depth bucket occupancies sum to the non-null count") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    size_t n = 1 + rng.uniform_index(200);
    int buckets = 1 + static_cast<int>(rng.uniform_index(12));
    TableData t;
    t.name = "t";
    t.columns = {{"x", ColumnType::Int64}};
    for (size_t i = 0; i < n; ++i)
      t.rows.push_back({I(static_cast<int64_t>(rng.uniform_index(50)))});
    ColumnStats st = build_stats(t, "x", buckets, 5);
    REQUIRE(st.histogram_bounds.size() == static_cast<size_t>(buckets) + 1);
    // implied occupancy of bucket i is cut(i)-cut(i-1); verify the telescoped sum
    size_t total = 0;
    for (int i = 1; i <= buckets; ++i) {
      size_t hi = static_cast<size_t>(i) * n / buckets;
      size_t lo = static_cast<size_t>(i - 1) * n / buckets;
      total += hi - lo;
    }
    CHECK(total == n);
    // boundaries non-decreasing, min/max anchored
    for (size_t i = 1; i < st.histogram_bounds.size(); ++i)
      CHECK_FALSE(st.histogram_bounds[i] < st.histogram_bounds[i - 1]);
    CHECK(st.histogram_bounds.front() == *st.min);
    CHECK(st.histogram_bounds.back() == *st.max);
  }
}

TEST_CASE("MCVs are the exact top-k of the value-frequency multiset") {
  Rng rng(11);
  TableData t;
  t.name = "t";
  t.columns = {{"x", ColumnType::Int64}};
  for (size_t i = 0; i < 500; ++i)
    t.rows.push_back({I(static_cast<int64_t>(rng.uniform_index(30)))});
  ColumnStats st = build_stats(t, "x", 10, 5);
  // brute-force frequency count
  std::map<int64_t, uint64_t> freq;
  for (const auto& row : t.rows) ++freq[std::get<int64_t>(*row[0])];
  std::vector<std::pair<uint64_t, int64_t>> by_count;
  for (auto& [v, c] : freq) by_count.push_back({c, v});
  std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  REQUIRE(st.mcv.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(st.mcv[i].first == Value(by_count[i].second));
    CHECK(st.mcv[i].second == by_count[i].first);
  }
  uint64_t mcv_sum = st.mcv_total();
  CHECK(mcv_sum <= t.rows.size());
  CHECK(st.ndv >= st.mcv.size());
}

TEST_CASE("stats rebuilds are deterministic") {
  Catalog cat = testsupport::micro_db();
  Catalog cat2 = testsupport::micro_db();
  CHECK(cat.stats == cat2.stats);
}

TEST_CASE("snapshot/restore round-trips a catalog") {
  SECTION("empty catalog") {
    Catalog empty;
    CHECK(restore(snapshot(empty)) == empty);
  }
  SECTION("micro database with stats") {
    Catalog cat = testsupport::micro_db();
    std::string bytes = snapshot(cat);
    Catalog back = restore(bytes);
    CHECK(back == cat);
    CHECK(snapshot(back) == bytes);
  }
}

TEST_CASE("restore rejects corrupt payloads") {
  Catalog cat = testsupport::micro_db();
  std::string bytes = snapshot(cat);
  CHECK_THROWS_AS(restore(bytes.substr(0, bytes.size() / 2)), DecodeError);
  CHECK_THROWS_AS(restore("{\"format\":\"something-else\",\"version\":1}"), DecodeError);
  CHECK_THROWS_AS(restore("not json at all"), DecodeError);
}
