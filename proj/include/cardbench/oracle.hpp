#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cardbench/ast.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/value.hpp"

namespace cardbench {

// Nulls never satisfy predicates.
inline bool cell_satisfies(const Cell& cell, CompareOp op, const Value& constant) {
  if (!cell.has_value()) return false;
  switch (op) {
    case CompareOp::Eq: return *cell == constant;
    case CompareOp::Lt: return *cell < constant;
    case CompareOp::Le: return !(constant < *cell);
    case CompareOp::Gt: return constant < *cell;
    case CompareOp::Ge: return !(*cell < constant);
    case CompareOp::Like:
      return like_match(std::get<std::string>(*cell), std::get<std::string>(constant));
  }
  return false;
}

namespace oracle_detail {

struct KeyHash {
  size_t operator()(const std::vector<Value>& key) const {
    size_t h = 0x9e3779b97f4a7c15ull;
    for (const auto& v : key) h = h * 1099511628211ull + ValueHash{}(v);
    return h;
  }
};

using HashIndex = std::unordered_map<std::vector<Value>, std::vector<uint32_t>, KeyHash>;

struct BoundTable {
  const TableData* table;
  std::string alias;
  std::vector<uint32_t> rows;  // row indices passing this alias's filters
};

inline std::vector<BoundTable> filtered_tables(const Catalog& db, const QueryAst& ast) {
  std::vector<BoundTable> out;
  out.reserve(ast.tables.size());
  for (const auto& t : ast.tables) {
    BoundTable bt;
    bt.table = &db.table(t.table);
    bt.alias = t.alias;
    for (uint32_t r = 0; r < bt.table->rows.size(); ++r) {
      bool ok = true;
      for (const auto& f : ast.filters) {
        if (f.col.alias != t.alias) continue;
        int c = bt.table->column_index(f.col.column);
        if (!cell_satisfies(bt.table->rows[r][c], f.op, f.constant)) {
          ok = false;
          break;
        }
      }
      if (ok) bt.rows.push_back(r);
    }
    out.push_back(std::move(bt));
  }
  return out;
}

}  // namespace oracle_detail

// Exact COUNT(*) / COUNT(DISTINCT col) under bag semantics. Joins are
// evaluated hash-first, building on the smaller input; nulls never join.
inline uint64_t execute_count(const Catalog& db, const QueryAst& ast) {
  using namespace oracle_detail;
  auto tables = filtered_tables(db, ast);
  size_t n = tables.size();

  // joined tuple store: stride doubles as the number of joined aliases
  std::vector<uint32_t> tuples;
  std::vector<int> slot_of(n, -1);  // table position -> slot in tuple, -1 if not joined yet
  std::vector<bool> joined(n, false);

  auto table_pos = [&](const std::string& alias) {
    for (size_t i = 0; i < n; ++i)
      if (tables[i].alias == alias) return i;
    throw SchemaError("unknown alias '" + alias + "'");
  };

  // seed with the smallest filtered table
  size_t first = 0;
  for (size_t i = 1; i < n; ++i)
    if (tables[i].rows.size() < tables[first].rows.size()) first = i;
  joined[first] = true;
  slot_of[first] = 0;
  size_t stride = 1;
  tuples.assign(tables[first].rows.begin(), tables[first].rows.end());

  for (size_t step = 1; step < n; ++step) {
    // next: a connected unjoined table, smallest filtered size first
    size_t next = n;
    for (const auto& j : ast.joins) {
      size_t a = table_pos(j.left.alias), b = table_pos(j.right.alias);
      if (joined[a] == joined[b]) continue;
      size_t cand = joined[a] ? b : a;
      if (next == n || tables[cand].rows.size() < tables[next].rows.size()) next = cand;
    }
    if (next == n) throw SchemaError("join graph is not connected");

    // join columns linking `next` to the joined set
    std::vector<std::pair<int, int>> link;  // (slot+column on joined side, column on next)
    std::vector<std::pair<size_t, int>> cur_cols;
    std::vector<int> next_cols;
    for (const auto& j : ast.joins) {
      size_t a = table_pos(j.left.alias), b = table_pos(j.right.alias);
      const ColumnRef* cur_ref = nullptr;
      const ColumnRef* next_ref = nullptr;
      if (joined[a] && b == next) {
        cur_ref = &j.left;
        next_ref = &j.right;
      } else if (joined[b] && a == next) {
        cur_ref = &j.right;
        next_ref = &j.left;
      } else {
        continue;
      }
      size_t cur_pos = table_pos(cur_ref->alias);
      cur_cols.emplace_back(cur_pos, tables[cur_pos].table->column_index(cur_ref->column));
      next_cols.push_back(tables[next].table->column_index(next_ref->column));
    }

    size_t tuple_count = stride == 0 ? 0 : tuples.size() / stride;
    auto next_key = [&](uint32_t row, std::vector<Value>& key) {
      key.clear();
      for (int c : next_cols) {
        const Cell& cell = tables[next].table->rows[row][c];
        if (!cell.has_value()) return false;
        key.push_back(*cell);
      }
      return true;
    };
    auto tuple_key = [&](size_t t, std::vector<Value>& key) {
      key.clear();
      for (const auto& [pos, c] : cur_cols) {
        const Cell& cell = tables[pos].table->rows[tuples[t * stride + slot_of[pos]]][c];
        if (!cell.has_value()) return false;
        key.push_back(*cell);
      }
      return true;
    };

    std::vector<uint32_t> joined_tuples;
    std::vector<Value> key;
    if (tables[next].rows.size() <= tuple_count) {
      HashIndex index;
      for (uint32_t row : tables[next].rows)
        if (next_key(row, key)) index[key].push_back(row);
      for (size_t t = 0; t < tuple_count; ++t) {
        if (!tuple_key(t, key)) continue;
        auto it = index.find(key);
        if (it == index.end()) continue;
        for (uint32_t row : it->second) {
          joined_tuples.insert(joined_tuples.end(), tuples.begin() + t * stride,
                               tuples.begin() + (t + 1) * stride);
          joined_tuples.push_back(row);
        }
      }
    } else {
      HashIndex index;
      for (size_t t = 0; t < tuple_count; ++t)
        if (tuple_key(t, key)) index[key].push_back(static_cast<uint32_t>(t));
      for (uint32_t row : tables[next].rows) {
        if (!next_key(row, key)) continue;
        auto it = index.find(key);
        if (it == index.end()) continue;
        for (uint32_t t : it->second) {
          joined_tuples.insert(joined_tuples.end(), tuples.begin() + t * stride,
                               tuples.begin() + (t + 1) * stride);
          joined_tuples.push_back(row);
        }
      }
    }
    tuples = std::move(joined_tuples);
    joined[next] = true;
    slot_of[next] = static_cast<int>(stride);
    ++stride;
  }

  size_t result_rows = stride == 0 ? 0 : tuples.size() / stride;
  if (!ast.distinct_on) return result_rows;

  size_t pos = table_pos(ast.distinct_on->alias);
  int col = tables[pos].table->column_index(ast.distinct_on->column);
  std::unordered_set<Value, ValueHash> distinct;
  for (size_t t = 0; t < result_rows; ++t) {
    const Cell& cell = tables[pos].table->rows[tuples[t * stride + slot_of[pos]]][col];
    if (cell.has_value()) distinct.insert(*cell);
  }
  return distinct.size();
}

// Independent test oracle: plain nested loops over the cross product with its
// own predicate checks. Only meant for micro-databases.
inline uint64_t execute_count_bruteforce(const Catalog& db, const QueryAst& ast) {
  size_t n = ast.tables.size();
  std::vector<const TableData*> tabs(n);
  for (size_t i = 0; i < n; ++i) tabs[i] = &db.table(ast.tables[i].table);

  auto alias_pos = [&](const std::string& alias) {
    for (size_t i = 0; i < n; ++i)
      if (ast.tables[i].alias == alias) return i;
    throw SchemaError("unknown alias '" + alias + "'");
  };

  uint64_t count = 0;
  std::unordered_set<Value, ValueHash> distinct;
  std::vector<size_t> pick(n, 0);

  auto filters_ok = [&](size_t depth) {
    for (const auto& f : ast.filters) {
      if (f.col.alias != ast.tables[depth].alias) continue;
      int c = tabs[depth]->column_index(f.col.column);
      if (!cell_satisfies(tabs[depth]->rows[pick[depth]][c], f.op, f.constant)) return false;
    }
    return true;
  };
  auto joins_ok = [&](size_t depth) {
    for (const auto& j : ast.joins) {
      size_t a = alias_pos(j.left.alias), b = alias_pos(j.right.alias);
      if (a != depth && b != depth) continue;
      if (a > depth || b > depth) continue;  // not fully bound yet
      const Cell& lv = tabs[a]->rows[pick[a]][tabs[a]->column_index(j.left.column)];
      const Cell& rv = tabs[b]->rows[pick[b]][tabs[b]->column_index(j.right.column)];
      if (!lv.has_value() || !rv.has_value() || !(*lv == *rv)) return false;
    }
    return true;
  };

  auto recurse = [&](auto&& self, size_t depth) -> void {
    if (depth == n) {
      if (!ast.distinct_on) {
        ++count;
      } else {
        size_t p = alias_pos(ast.distinct_on->alias);
        const Cell& cell = tabs[p]->rows[pick[p]][tabs[p]->column_index(ast.distinct_on->column)];
        if (cell.has_value()) distinct.insert(*cell);
      }
      return;
    }
    for (size_t r = 0; r < tabs[depth]->rows.size(); ++r) {
      pick[depth] = r;
      if (!filters_ok(depth) || !joins_ok(depth)) continue;
      self(self, depth + 1);
    }
  };
  recurse(recurse, 0);
  return ast.distinct_on ? distinct.size() : count;
}

// Applies one write statement in place. Statistics are intentionally left
// untouched; estimator staleness under writes is an experimental subject.
inline void apply_write(Catalog& db, const WriteOp& op) {
  auto it = db.tables.find(op.table);
  if (it == db.tables.end()) throw SchemaError("unknown table '" + op.table + "'");
  TableData& t = it->second;
  switch (op.kind) {
    case WriteOp::Kind::Insert: {
      if (op.insert_row.size() != t.columns.size())
        throw SchemaError("insert row width mismatch for '" + op.table + "'");
      t.rows.push_back(op.insert_row);
      break;
    }
    case WriteOp::Kind::Update: {
      if (op.row_position >= t.rows.size())
        throw Error("update selector matches no row in '" + op.table + "'");
      int c = t.column_index(op.update_column);
      if (c < 0) throw SchemaError("unknown column '" + op.update_column + "'");
      t.rows[op.row_position][c] = op.update_value;
      break;
    }
    case WriteOp::Kind::Delete: {
      if (op.row_position >= t.rows.size())
        throw Error("delete selector matches no row in '" + op.table + "'");
      t.rows.erase(t.rows.begin() + static_cast<ptrdiff_t>(op.row_position));
      break;
    }
  }
}

inline uint64_t ndv_exact(const Catalog& db, const std::string& table, const std::string& column) {
  const TableData& t = db.table(table);
  int c = t.column_index(column);
  if (c < 0) throw SchemaError("unknown column '" + column + "' in '" + table + "'");
  std::unordered_set<Value, ValueHash> seen;
  for (const auto& row : t.rows)
    if (row[c].has_value()) seen.insert(*row[c]);
  return seen.size();
}

}  // namespace cardbench
