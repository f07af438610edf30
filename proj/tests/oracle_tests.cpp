#include <catch2/catch_amalgamated.hpp>

#include <unordered_set>

#include "cardbench/oracle.hpp"
#include "cardbench/parser.hpp"
#include "cardbench/workloads.hpp"
#include "support.hpp"

using namespace cardbench;
using testsupport::I;
using testsupport::N;
using testsupport::S;

namespace {

Catalog two_table_db() {
  Catalog cat;
  cat.add_table(testsupport::make_table("t1", {{"a", ColumnType::Int64}}, {{I(1)}, {I(2)}}));
  cat.add_table(testsupport::make_table("t2", {{"a", ColumnType::Int64}}, {{I(1)}}));
  cat.add_join_edge("t1", "a", "t2", "a");
  build_all_stats(cat);
  return cat;
}

}  // namespace

TEST_CASE("one matching join pair") {
  Catalog cat = two_table_db();
  QueryAst ast = parse_query("SELECT COUNT(*) FROM t1, t2 WHERE t1.a = t2.a", cat);
  CHECK(execute_count(cat, ast) == 1);
  CHECK(execute_count_bruteforce(cat, ast) == 1);
}

TEST_CASE("empty filter result annihilates the count") {
  Catalog cat = two_table_db();
  QueryAst ast = parse_query("SELECT COUNT(*) FROM t1, t2 WHERE t1.a = t2.a AND t1.a = 99", cat);
  CHECK(execute_count(cat, ast) == 0);
}

TEST_CASE("nulls never join and never satisfy predicates") {
  Catalog cat;
  cat.add_table(testsupport::make_table("l", {{"a", ColumnType::Int64}}, {{I(1)}, {N()}}));
  cat.add_table(testsupport::make_table("r", {{"a", ColumnType::Int64}}, {{N()}, {I(1)}}));
  cat.add_join_edge("l", "a", "r", "a");
  build_all_stats(cat);
  QueryAst join = parse_query("SELECT COUNT(*) FROM l, r WHERE l.a = r.a", cat);
  CHECK(execute_count(cat, join) == 1);  // null-null must not match
  CHECK(execute_count_bruteforce(cat, join) == 1);
  QueryAst filt = parse_query("SELECT COUNT(*) FROM l WHERE l.a >= 0", cat);
  CHECK(execute_count(cat, filt) == 1);
}

TEST_CASE("COUNT(DISTINCT) over a join") {
  Catalog cat = testsupport::micro_db(3, 60);
  QueryAst ast =
      parse_query("SELECT COUNT(DISTINCT t1.name) FROM t1, t2 WHERE t1.a = t2.a", cat);
  CHECK(execute_count(cat, ast) == execute_count_bruteforce(cat, ast));
  QueryAst all = parse_query("SELECT COUNT(*) FROM t1, t2 WHERE t1.a = t2.a", cat);
  CHECK(execute_count(cat, ast) <= execute_count(cat, all));
}

TEST_CASE("hash join agrees with nested loops on random micro queries") {
  Catalog cat = testsupport::micro_db(9, 80);
  SpjOptions opt;
  opt.max_joins = 2;
  opt.max_filters = 3;
  for (int q = 0; q < 300; ++q) {
    Rng rng(mix_seed(123, q));
    QueryAst ast = gen_spj_query(cat, opt, rng);
    INFO(render_query(ast));
    CHECK(execute_count(cat, ast) == execute_count_bruteforce(cat, ast));
  }
}

TEST_CASE("removing a filter never decreases the count") {
  Catalog cat = testsupport::micro_db(5, 80);
  SpjOptions opt;
  for (int q = 0; q < 100; ++q) {
    Rng rng(mix_seed(321, q));
    QueryAst ast = gen_spj_query(cat, opt, rng);
    if (ast.filters.empty()) continue;
    QueryAst relaxed = ast;
    relaxed.filters.erase(relaxed.filters.begin() +
                          static_cast<ptrdiff_t>(rng.uniform_index(relaxed.filters.size())));
    CHECK(execute_count(cat, relaxed) >= execute_count(cat, ast));
  }
}

TEST_CASE("apply_write: insert appends one row") {
  Catalog cat = two_table_db();
  WriteOp op;
  op.kind = WriteOp::Kind::Insert;
  op.table = "t1";
  op.insert_row = {I(7)};
  apply_write(cat, op);
  CHECK(cat.table("t1").rows.size() == 3);
  CHECK(cat.table("t1").rows.back()[0] == I(7));
  // stats are untouched
  CHECK(cat.stats_rows("t1") == 2);
}

TEST_CASE("apply_write: delete removes exactly the selected row") {
  Catalog cat;
  cat.add_table(
      testsupport::make_table("t", {{"a", ColumnType::Int64}}, {{I(10)}, {I(20)}, {I(30)}}));
  build_all_stats(cat);
  WriteOp op;
  op.kind = WriteOp::Kind::Delete;
  op.table = "t";
  op.row_position = 1;
  apply_write(cat, op);
  REQUIRE(cat.table("t").rows.size() == 2);
  CHECK(cat.table("t").rows[0][0] == I(10));
  CHECK(cat.table("t").rows[1][0] == I(30));
}

TEST_CASE("apply_write: update modifies one cell; bad selectors error") {
  Catalog cat;
  cat.add_table(testsupport::make_table("t", {{"a", ColumnType::Int64}}, {{I(10)}}));
  build_all_stats(cat);
  WriteOp up;
  up.kind = WriteOp::Kind::Update;
  up.table = "t";
  up.row_position = 0;
  up.update_column = "a";
  up.update_value = I(99);
  apply_write(cat, up);
  CHECK(cat.table("t").rows[0][0] == I(99));

  Catalog empty;
  empty.add_table(testsupport::make_table("t", {{"a", ColumnType::Int64}}, {}));
  WriteOp bad = up;
  CHECK_THROWS_AS(apply_write(empty, bad), Error);
}

TEST_CASE("ndv_exact") {
  Catalog cat;
  cat.add_table(
      testsupport::make_table("t", {{"a", ColumnType::Int64}}, {{I(1)}, {I(1)}, {I(2)}}));
  cat.add_table(testsupport::make_table("z", {{"a", ColumnType::Int64}}, {{N()}, {N()}}));
  CHECK(ndv_exact(cat, "t", "a") == 2);
  CHECK(ndv_exact(cat, "z", "a") == 0);

  // randomized check against an independent set-size oracle
  Rng rng(99);
  TableData big;
  big.name = "big";
  big.columns = {{"x", ColumnType::Int64}};
  std::unordered_set<int64_t> oracle;
  for (int i = 0; i < 1000; ++i) {
    int64_t v = rng.uniform_int(0, 200);
    big.rows.push_back({I(v)});
    oracle.insert(v);
  }
  Catalog cat2;
  cat2.add_table(std::move(big));
  CHECK(ndv_exact(cat2, "big", "x") == oracle.size());
}

TEST_CASE("like_match semantics") {
  CHECK(like_match("smith", "%smi%"));
  CHECK(like_match("smith", "smi%"));
  CHECK(like_match("smith", "%ith"));
  CHECK(like_match("smith", "sm_th"));
  CHECK_FALSE(like_match("smith", "%smx%"));
  CHECK_FALSE(like_match("smith", "Smith"));  // case-sensitive
  CHECK(like_match("", "%"));
  CHECK_FALSE(like_match("", "_"));
  CHECK(like_match("abc", "a%c"));
  CHECK(like_match("ac", "a%c"));
  CHECK_FALSE(like_match("ab", "a%c"));
}
