#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cardbench/csv.hpp"
#include "cardbench/error.hpp"
#include "cardbench/value.hpp"

namespace cardbench {

struct ColumnDecl {
  std::string name;
  ColumnType type;
  bool operator==(const ColumnDecl&) const = default;
};

struct TableData {
  std::string name;
  std::vector<ColumnDecl> columns;
  std::vector<std::vector<Cell>> rows;  // rows[i].size() == columns.size()

  bool operator==(const TableData&) const = default;

  int column_index(const std::string& col) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == col) return static_cast<int>(i);
    return -1;
  }

  ColumnType column_type(const std::string& col) const {
    int idx = column_index(col);
    if (idx < 0) throw SchemaError("no column '" + col + "' in table '" + name + "'");
    return columns[idx].type;
  }
};

// Coarse single-column statistics: min/max, exact NDV and null count, top-k
// most-common values, and equi-depth histogram boundaries (numeric columns).
struct ColumnStats {
  Cell min;
  Cell max;
  uint64_t ndv = 0;
  uint64_t null_count = 0;
  std::vector<std::pair<Value, uint64_t>> mcv;  // (value, count), frequency descending
  std::vector<Value> histogram_bounds;          // B+1 boundaries; empty for text / all-null

  bool operator==(const ColumnStats&) const = default;

  uint64_t mcv_total() const {
    uint64_t s = 0;
    for (const auto& [v, c] : mcv) s += c;
    return s;
  }
};

struct JoinEdge {
  std::string left_table, left_column;
  std::string right_table, right_column;
  bool operator==(const JoinEdge&) const = default;
};

// Construction is single-threaded; once built, a catalog is treated as
// immutable and safe for unrestricted concurrent reads (writes go through
// apply_write, which requires exclusive access to the instance).
struct Catalog {
  std::map<std::string, TableData> tables;
  std::map<std::pair<std::string, std::string>, ColumnStats> stats;
  std::vector<JoinEdge> join_graph;
  // Table row counts captured when stats were built; writes leave these stale
  // on purpose (estimators read statistics, not live data).
  std::map<std::string, uint64_t> stats_rowcount;

  bool operator==(const Catalog&) const = default;

  const TableData& table(const std::string& name) const {
    auto it = tables.find(name);
    if (it == tables.end()) throw SchemaError("unknown table '" + name + "'");
    return it->second;
  }

  bool has_stats(const std::string& table, const std::string& column) const {
    return stats.count({table, column}) > 0;
  }

  const ColumnStats& column_stats(const std::string& table, const std::string& column) const {
    auto it = stats.find({table, column});
    if (it == stats.end())
      throw SchemaError("no statistics for " + table + "." + column);
    return it->second;
  }

  uint64_t stats_rows(const std::string& table) const {
    auto it = stats_rowcount.find(table);
    if (it == stats_rowcount.end()) throw SchemaError("no statistics for table '" + table + "'");
    return it->second;
  }

  void add_table(TableData t) {
    if (tables.count(t.name)) throw SchemaError("duplicate table '" + t.name + "'");
    tables.emplace(t.name, std::move(t));
  }

  void add_join_edge(const std::string& lt, const std::string& lc, const std::string& rt,
                     const std::string& rc) {
    ColumnType a = table(lt).column_type(lc);
    ColumnType b = table(rt).column_type(rc);
    if (a != b)
      throw SchemaError("join edge type mismatch: " + lt + "." + lc + " vs " + rt + "." + rc);
    join_graph.push_back({lt, lc, rt, rc});
  }
};

// ---------------------------------------------------------------------------
// Ingestion

inline Cell parse_cell(const std::string& text, ColumnType type) {
  if (text.empty()) return std::nullopt;  // "" encodes null
  switch (type) {
    case ColumnType::Int64: {
      errno = 0;
      char* end = nullptr;
      long long v = std::strtoll(text.c_str(), &end, 10);
      if (errno != 0 || end != text.c_str() + text.size()) return std::nullopt;
      return Value(static_cast<int64_t>(v));
    }
    case ColumnType::Float64: {
      errno = 0;
      char* end = nullptr;
      double v = std::strtod(text.c_str(), &end);
      if (errno != 0 || end != text.c_str() + text.size()) return std::nullopt;
      return Value(v);
    }
    case ColumnType::Text:
      return Value(text);
  }
  return std::nullopt;
}

// CSV file with a header row; header names must match schema_decl in order.
// Unparseable numeric cells become nulls, rows are kept in file order.
inline TableData ingest_table(const std::string& path, const std::string& table_name,
                              const std::vector<ColumnDecl>& schema_decl) {
  for (size_t i = 0; i < schema_decl.size(); ++i)
    for (size_t j = i + 1; j < schema_decl.size(); ++j)
      if (schema_decl[i].name == schema_decl[j].name)
        throw SchemaError("duplicate column '" + schema_decl[i].name + "' in schema for '" +
                          table_name + "'");

  auto records = parse_csv(read_file(path));
  if (records.empty()) throw ParseError("empty CSV file: " + path);
  const auto& header = records[0];
  if (header.size() != schema_decl.size())
    throw SchemaError("header of " + path + " has " + std::to_string(header.size()) +
                      " columns, schema declares " + std::to_string(schema_decl.size()));
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] != schema_decl[i].name)
      throw SchemaError("header mismatch in " + path + ": got '" + header[i] + "', expected '" +
                        schema_decl[i].name + "'");

  TableData t;
  t.name = table_name;
  t.columns = schema_decl;
  t.rows.reserve(records.size() - 1);
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != schema_decl.size())
      throw ParseError("row " + std::to_string(r) + " of " + path + " has " +
                       std::to_string(records[r].size()) + " fields");
    std::vector<Cell> row(schema_decl.size());
    for (size_t c = 0; c < schema_decl.size(); ++c)
      row[c] = parse_cell(records[r][c], schema_decl[c].type);
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Statistics

// Equi-depth boundaries over the sorted non-null values: bucket i of B holds
// cut(i)-cut(i-1) values with cut(i) = floor(i*n/B), i.e. each bucket gets
// floor(n/B) or ceil(n/B) values and occupancies sum to n.
inline ColumnStats build_stats(const TableData& table, const std::string& column, int buckets,
                               int mcv_length) {
  if (buckets < 1) throw Error("bucket count must be >= 1");
  if (mcv_length < 0) throw Error("MCV length must be >= 0");
  int idx = table.column_index(column);
  if (idx < 0) throw SchemaError("no column '" + column + "' in table '" + table.name + "'");
  ColumnType type = table.columns[idx].type;

  ColumnStats st;
  std::vector<Value> values;
  values.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    if (row[idx].has_value())
      values.push_back(*row[idx]);
    else
      ++st.null_count;
  }
  if (values.empty()) return st;  // all-null: ndv=0, empty mcv/bounds (a signal, not a failure)

  std::sort(values.begin(), values.end());
  st.min = values.front();
  st.max = values.back();

  // one pass over the sorted run for ndv + frequencies
  std::vector<std::pair<Value, uint64_t>> freq;
  for (size_t i = 0; i < values.size();) {
    size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    freq.emplace_back(values[i], j - i);
    i = j;
  }
  st.ndv = freq.size();

  // top-k by count descending, ties by ascending value (freq is value-sorted,
  // so a stable sort on count keeps value order inside each count class)
  std::stable_sort(freq.begin(), freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  size_t k = std::min<size_t>(mcv_length, freq.size());
  st.mcv.assign(freq.begin(), freq.begin() + k);

  if (is_numeric(type)) {
    size_t n = values.size();
    st.histogram_bounds.reserve(buckets + 1);
    st.histogram_bounds.push_back(values.front());
    for (int i = 1; i <= buckets; ++i) {
      size_t cut = (static_cast<size_t>(i) * n) / buckets;
      st.histogram_bounds.push_back(values[cut == 0 ? 0 : cut - 1]);
    }
  }
  return st;
}

inline void build_all_stats(Catalog& cat, int buckets = 10, int mcv_length = 5) {
  cat.stats.clear();
  cat.stats_rowcount.clear();
  for (const auto& [name, table] : cat.tables) {
    cat.stats_rowcount[name] = table.rows.size();
    for (const auto& col : table.columns)
      cat.stats[{name, col.name}] = build_stats(table, col.name, buckets, mcv_length);
  }
}

// ---------------------------------------------------------------------------
// Snapshot (versioned canonical JSON)

namespace detail {

inline nlohmann::json cell_to_json(const Cell& c) {
  if (!c.has_value()) return nullptr;
  switch (c->index()) {
    case 0: return std::get<int64_t>(*c);
    case 1: return std::get<double>(*c);
    default: return std::get<std::string>(*c);
  }
}

inline Cell cell_from_json(const nlohmann::json& j, ColumnType type) {
  if (j.is_null()) return std::nullopt;
  switch (type) {
    case ColumnType::Int64:
      if (!j.is_number_integer()) throw DecodeError("expected integer cell");
      return Value(j.get<int64_t>());
    case ColumnType::Float64:
      if (!j.is_number()) throw DecodeError("expected numeric cell");
      return Value(j.get<double>());
    case ColumnType::Text:
      if (!j.is_string()) throw DecodeError("expected string cell");
      return Value(j.get<std::string>());
  }
  throw DecodeError("bad cell");
}

}  // namespace detail

inline std::string snapshot(const Catalog& cat) {
  nlohmann::json j;
  j["format"] = "cardbench-catalog";
  j["version"] = 1;
  j["tables"] = nlohmann::json::array();
  for (const auto& [name, t] : cat.tables) {
    nlohmann::json jt;
    jt["name"] = name;
    jt["columns"] = nlohmann::json::array();
    for (const auto& c : t.columns) jt["columns"].push_back({{"name", c.name}, {"type", to_string(c.type)}});
    jt["rows"] = nlohmann::json::array();
    for (const auto& row : t.rows) {
      nlohmann::json jr = nlohmann::json::array();
      for (const auto& cell : row) jr.push_back(detail::cell_to_json(cell));
      jt["rows"].push_back(std::move(jr));
    }
    j["tables"].push_back(std::move(jt));
  }
  j["joins"] = nlohmann::json::array();
  for (const auto& e : cat.join_graph)
    j["joins"].push_back({e.left_table, e.left_column, e.right_table, e.right_column});
  j["stats"] = nlohmann::json::array();
  for (const auto& [key, st] : cat.stats) {
    nlohmann::json js;
    js["table"] = key.first;
    js["column"] = key.second;
    js["min"] = detail::cell_to_json(st.min);
    js["max"] = detail::cell_to_json(st.max);
    js["ndv"] = st.ndv;
    js["null_count"] = st.null_count;
    js["mcv"] = nlohmann::json::array();
    for (const auto& [v, c] : st.mcv) js["mcv"].push_back({detail::cell_to_json(v), c});
    js["histogram_bounds"] = nlohmann::json::array();
    for (const auto& v : st.histogram_bounds) js["histogram_bounds"].push_back(detail::cell_to_json(v));
    j["stats"].push_back(std::move(js));
  }
  j["rowcounts"] = nlohmann::json::object();
  for (const auto& [name, n] : cat.stats_rowcount) j["rowcounts"][name] = n;
  return j.dump();
}

inline Catalog restore(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("corrupt catalog snapshot: ") + e.what());
  }
  try {
    if (j.value("format", "") != "cardbench-catalog")
      throw DecodeError("not a catalog snapshot (bad format tag)");
    if (j.value("version", 0) != 1) throw DecodeError("unsupported catalog snapshot version");
    Catalog cat;
    for (const auto& jt : j.at("tables")) {
      TableData t;
      t.name = jt.at("name").get<std::string>();
      for (const auto& jc : jt.at("columns"))
        t.columns.push_back({jc.at("name").get<std::string>(),
                             column_type_from_string(jc.at("type").get<std::string>())});
      for (const auto& jr : jt.at("rows")) {
        std::vector<Cell> row;
        row.reserve(t.columns.size());
        if (jr.size() != t.columns.size()) throw DecodeError("row width mismatch in snapshot");
        for (size_t c = 0; c < t.columns.size(); ++c)
          row.push_back(detail::cell_from_json(jr[c], t.columns[c].type));
        t.rows.push_back(std::move(row));
      }
      cat.add_table(std::move(t));
    }
    for (const auto& je : j.at("joins"))
      cat.add_join_edge(je.at(0).get<std::string>(), je.at(1).get<std::string>(),
                        je.at(2).get<std::string>(), je.at(3).get<std::string>());
    for (const auto& js : j.at("stats")) {
      std::string tname = js.at("table").get<std::string>();
      std::string cname = js.at("column").get<std::string>();
      ColumnType type = cat.table(tname).column_type(cname);
      ColumnStats st;
      st.min = detail::cell_from_json(js.at("min"), type);
      st.max = detail::cell_from_json(js.at("max"), type);
      st.ndv = js.at("ndv").get<uint64_t>();
      st.null_count = js.at("null_count").get<uint64_t>();
      for (const auto& jm : js.at("mcv"))
        st.mcv.emplace_back(*detail::cell_from_json(jm.at(0), type), jm.at(1).get<uint64_t>());
      for (const auto& jb : js.at("histogram_bounds"))
        st.histogram_bounds.push_back(*detail::cell_from_json(jb, type));
      cat.stats[{tname, cname}] = std::move(st);
    }
    for (auto it = j.at("rowcounts").begin(); it != j.at("rowcounts").end(); ++it)
      cat.stats_rowcount[it.key()] = it.value().get<uint64_t>();
    return cat;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("corrupt catalog snapshot: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Schema declaration files (CLI ingestion): table -> CSV file + columns, plus
// declared equi-joinable column pairs.

struct SchemaTableDecl {
  std::string name;
  std::string file;
  std::vector<ColumnDecl> columns;
};

struct SchemaDecl {
  std::vector<SchemaTableDecl> tables;
  std::vector<std::array<std::string, 4>> joins;  // left table, left col, right table, right col
};

inline std::pair<std::string, std::string> split_qualified(const std::string& q) {
  auto dot = q.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == q.size())
    throw DecodeError("expected table.column, got '" + q + "'");
  return {q.substr(0, dot), q.substr(dot + 1)};
}

inline SchemaDecl load_schema(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad schema file: ") + e.what());
  }
  SchemaDecl decl;
  for (const auto& jt : j.at("tables")) {
    SchemaTableDecl t;
    t.name = jt.at("name").get<std::string>();
    t.file = jt.at("file").get<std::string>();
    for (const auto& jc : jt.at("columns"))
      t.columns.push_back({jc.at("name").get<std::string>(),
                           column_type_from_string(jc.at("type").get<std::string>())});
    decl.tables.push_back(std::move(t));
  }
  if (j.contains("joins")) {
    for (const auto& je : j.at("joins")) {
      auto [lt, lc] = split_qualified(je.at(0).get<std::string>());
      auto [rt, rc] = split_qualified(je.at(1).get<std::string>());
      decl.joins.push_back({lt, lc, rt, rc});
    }
  }
  return decl;
}

}  // namespace cardbench
