#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cardbench/catalog.hpp"
#include "cardbench/error.hpp"
#include "cardbench/value.hpp"

namespace cardbench {

enum class CompareOp { Eq, Lt, Le, Gt, Ge, Like };

inline const char* to_sql(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
    case CompareOp::Like: return "LIKE";
  }
  return "?";
}

struct ColumnRef {
  std::string alias;
  std::string column;
  bool operator==(const ColumnRef&) const = default;
  auto tie() const { return std::tie(alias, column); }
  bool operator<(const ColumnRef& o) const { return tie() < o.tie(); }
  std::string qualified() const { return alias + "." + column; }
};

struct FilterPred {
  ColumnRef col;
  CompareOp op;
  Value constant;
  bool operator==(const FilterPred&) const = default;
};

struct JoinPred {
  ColumnRef left, right;  // normalized so left < right
  bool operator==(const JoinPred&) const = default;
};

struct TableRef {
  std::string table;
  std::string alias;  // defaults to the table name
  bool operator==(const TableRef&) const = default;
};

// A COUNT(*) / COUNT(DISTINCT col) query over implicitly joined tables with
// AND-conjoined predicates. Joins and filters are kept in canonical sorted
// order, so structural equality doubles as canonical equality.
struct QueryAst {
  std::vector<TableRef> tables;  // FROM-list order as written
  std::vector<JoinPred> joins;
  std::vector<FilterPred> filters;
  std::optional<ColumnRef> distinct_on;

  bool operator==(const QueryAst&) const = default;

  size_t join_count() const { return joins.size(); }
  size_t filter_count() const { return filters.size(); }

  const TableRef* find_alias(const std::string& alias) const {
    for (const auto& t : tables)
      if (t.alias == alias) return &t;
    return nullptr;
  }
};

struct WriteOp {
  enum class Kind { Insert, Update, Delete };
  Kind kind;
  std::string table;
  std::vector<Cell> insert_row;  // Insert: one full row
  size_t row_position = 0;       // Update/Delete: current row ordinal in the table
  std::string update_column;     // Update
  Cell update_value;             // Update

  bool operator==(const WriteOp&) const = default;
};

// ---------------------------------------------------------------------------
// Canonicalization & validation

inline void canonicalize(QueryAst& ast) {
  for (auto& j : ast.joins)
    if (j.right < j.left) std::swap(j.left, j.right);
  std::sort(ast.joins.begin(), ast.joins.end(), [](const JoinPred& a, const JoinPred& b) {
    return std::tie(a.left, a.right) < std::tie(b.left, b.right);
  });
  std::sort(ast.filters.begin(), ast.filters.end(), [](const FilterPred& a, const FilterPred& b) {
    return std::tie(a.col, a.op, a.constant) < std::tie(b.col, b.op, b.constant);
  });
}

inline bool join_graph_connected(const QueryAst& ast) {
  if (ast.tables.empty()) return false;
  std::set<std::string> seen{ast.tables[0].alias};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& j : ast.joins) {
      bool l = seen.count(j.left.alias), r = seen.count(j.right.alias);
      if (l != r) {
        seen.insert(l ? j.right.alias : j.left.alias);
        grew = true;
      }
    }
  }
  return seen.size() == ast.tables.size();
}

// Resolves aliases/columns against the catalog and enforces typing rules:
// LIKE only on text, range comparisons only on numeric, join sides same type.
inline void validate_ast(const QueryAst& ast, const Catalog& cat) {
  if (ast.tables.empty()) throw SchemaError("query references no tables");
  std::set<std::string> aliases;
  for (const auto& t : ast.tables) {
    cat.table(t.table);
    if (!aliases.insert(t.alias).second) throw SchemaError("duplicate alias '" + t.alias + "'");
  }
  auto column_type = [&](const ColumnRef& c) {
    const TableRef* t = ast.find_alias(c.alias);
    if (!t) throw SchemaError("unknown alias '" + c.alias + "'");
    return cat.table(t->table).column_type(c.column);
  };
  for (const auto& j : ast.joins) {
    if (column_type(j.left) != column_type(j.right))
      throw SchemaError("join type mismatch: " + j.left.qualified() + " vs " + j.right.qualified());
  }
  for (const auto& f : ast.filters) {
    ColumnType t = column_type(f.col);
    switch (f.op) {
      case CompareOp::Like:
        if (t != ColumnType::Text)
          throw SchemaError("LIKE requires a text column: " + f.col.qualified());
        if (!std::holds_alternative<std::string>(f.constant))
          throw SchemaError("LIKE pattern must be a string");
        break;
      case CompareOp::Lt:
      case CompareOp::Le:
      case CompareOp::Gt:
      case CompareOp::Ge:
        if (!is_numeric(t))
          throw SchemaError("range comparison requires a numeric column: " + f.col.qualified());
        break;
      case CompareOp::Eq:
        break;
    }
    // constants are typed at parse; check they match the column
    if (t == ColumnType::Int64 && !std::holds_alternative<int64_t>(f.constant))
      throw SchemaError("integer constant required for " + f.col.qualified());
    if (t == ColumnType::Float64 && !std::holds_alternative<double>(f.constant))
      throw SchemaError("numeric constant required for " + f.col.qualified());
    if (t == ColumnType::Text && !std::holds_alternative<std::string>(f.constant))
      throw SchemaError("string constant required for " + f.col.qualified());
  }
  if (ast.distinct_on) column_type(*ast.distinct_on);
  if (!join_graph_connected(ast))
    throw SchemaError("join graph is not connected");
}

// ---------------------------------------------------------------------------
// Rendering (canonical text; the bit-exact "query" field of prompts)

inline std::string quote_sql_string(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    out += c;
    if (c == '\'') out += '\'';
  }
  out += "'";
  return out;
}

inline std::string render_constant(const Value& v) {
  if (std::holds_alternative<std::string>(v)) return quote_sql_string(std::get<std::string>(v));
  return format_value(v);
}

inline std::string render_query(const QueryAst& ast) {
  std::string out = "SELECT COUNT(";
  out += ast.distinct_on ? "DISTINCT " + ast.distinct_on->qualified() : std::string("*");
  out += ") FROM ";
  for (size_t i = 0; i < ast.tables.size(); ++i) {
    if (i) out += ", ";
    out += ast.tables[i].table;
    if (ast.tables[i].alias != ast.tables[i].table) out += " " + ast.tables[i].alias;
  }
  std::vector<std::string> preds;
  for (const auto& j : ast.joins) preds.push_back(j.left.qualified() + " = " + j.right.qualified());
  for (const auto& f : ast.filters)
    preds.push_back(f.col.qualified() + " " + to_sql(f.op) + " " + render_constant(f.constant));
  for (size_t i = 0; i < preds.size(); ++i) out += (i ? " AND " : " WHERE ") + preds[i];
  return out;
}

// ---------------------------------------------------------------------------
// Sub-query decomposition

// Sub-query induced by a subset of aliases: those tables, the joins internal
// to the subset, and the filters on its tables.
inline QueryAst induced_subquery(const QueryAst& ast, const std::set<std::string>& aliases) {
  QueryAst sub;
  for (const auto& t : ast.tables)
    if (aliases.count(t.alias)) sub.tables.push_back(t);
  for (const auto& j : ast.joins)
    if (aliases.count(j.left.alias) && aliases.count(j.right.alias)) sub.joins.push_back(j);
  for (const auto& f : ast.filters)
    if (aliases.count(f.col.alias)) sub.filters.push_back(f);
  return sub;
}

namespace detail {

// Connected-subgraph enumeration by extension: subgraphs containing node i but
// no node < i are grown from {i} through frontier edges.
inline void extend_connected(const std::vector<std::vector<int>>& adj, std::vector<int>& current,
                             std::set<int>& in_current, std::set<int>& forbidden,
                             std::vector<std::vector<int>>& out) {
  out.push_back(current);
  std::vector<int> frontier;
  for (int u : current)
    for (int v : adj[u])
      if (!in_current.count(v) && !forbidden.count(v)) frontier.push_back(v);
  std::sort(frontier.begin(), frontier.end());
  frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
  std::set<int> newly_forbidden;
  for (int v : frontier) {
    current.push_back(v);
    in_current.insert(v);
    forbidden.insert(v);
    newly_forbidden.insert(v);
    extend_connected(adj, current, in_current, forbidden, out);
    current.pop_back();
    in_current.erase(v);
  }
  for (int v : newly_forbidden) forbidden.erase(v);
}

}  // namespace detail

// One sub-query per connected induced subgraph of the query's join graph,
// ordered by size then by sorted alias tuple.
inline std::vector<QueryAst> decompose_subqueries(const QueryAst& ast) {
  if (ast.distinct_on)
    throw Error("decomposition is not supported for DISTINCT queries");
  int n = static_cast<int>(ast.tables.size());
  std::vector<std::vector<int>> adj(n);
  auto index_of = [&](const std::string& alias) {
    for (int i = 0; i < n; ++i)
      if (ast.tables[i].alias == alias) return i;
    throw SchemaError("unknown alias '" + alias + "'");
  };
  for (const auto& j : ast.joins) {
    int a = index_of(j.left.alias), b = index_of(j.right.alias);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  std::vector<std::vector<int>> subsets;
  for (int i = 0; i < n; ++i) {
    std::vector<int> current{i};
    std::set<int> in_current{i};
    std::set<int> forbidden;
    for (int j = 0; j <= i; ++j) forbidden.insert(j);
    detail::extend_connected(adj, current, in_current, forbidden, subsets);
  }

  std::vector<std::pair<std::vector<std::string>, std::set<std::string>>> keyed;
  keyed.reserve(subsets.size());
  for (const auto& sub : subsets) {
    std::set<std::string> aliases;
    for (int i : sub) aliases.insert(ast.tables[i].alias);
    keyed.emplace_back(std::vector<std::string>(aliases.begin(), aliases.end()), std::move(aliases));
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
    return a.first < b.first;
  });

  std::vector<QueryAst> out;
  out.reserve(keyed.size());
  for (const auto& [names, aliases] : keyed) out.push_back(induced_subquery(ast, aliases));
  return out;
}

}  // namespace cardbench
