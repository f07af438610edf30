#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cardbench/ast.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/error.hpp"
#include "cardbench/oracle.hpp"
#include "cardbench/parser.hpp"
#include "cardbench/rng.hpp"

namespace cardbench {

enum class Split { Train, Validation, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw DecodeError("unknown split tag '" + s + "'");
}

struct WorkloadItem {
  std::variant<QueryAst, WriteOp> statement;
  std::optional<uint64_t> ground_truth;  // queries only; against the db state at this position
  Split split = Split::Test;
  std::string tag;  // family-specific breakdown key (e.g. high-freq / low-freq)

  bool operator==(const WorkloadItem&) const = default;

  const QueryAst* query() const { return std::get_if<QueryAst>(&statement); }
  const WriteOp* write() const { return std::get_if<WriteOp>(&statement); }
};

struct Workload {
  std::vector<WorkloadItem> items;
  std::string family;  // spj | shift | like | distinct | dynamic
  uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();

  bool operator==(const Workload& o) const {
    return items == o.items && family == o.family && seed == o.seed && params == o.params;
  }

  std::vector<const WorkloadItem*> queries(std::optional<Split> split = std::nullopt) const {
    std::vector<const WorkloadItem*> out;
    for (const auto& it : items)
      if (it.query() && (!split || it.split == *split)) out.push_back(&it);
    return out;
  }
};

// ---------------------------------------------------------------------------
// SPJ generation (connected join sub-graphs + sampled filters)

struct SpjOptions {
  int max_joins = 2;    // target sub-graph size is uniform over {1 .. max_joins+1} tables
  int max_filters = 3;  // filter drawing steps; numeric draws produce a range pair
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
};

namespace workload_detail {

inline std::vector<std::string> table_names(const Catalog& cat) {
  std::vector<std::string> names;
  for (const auto& [name, _] : cat.tables) names.push_back(name);
  return names;
}

inline std::vector<const JoinEdge*> edges_between(const Catalog& cat,
                                                  const std::set<std::string>& tables) {
  std::vector<const JoinEdge*> out;
  for (const auto& e : cat.join_graph)
    if (tables.count(e.left_table) && tables.count(e.right_table)) out.push_back(&e);
  return out;
}

// Grows a connected table set of the requested size by following join edges.
inline std::set<std::string> sample_connected_tables(const Catalog& cat, size_t target, Rng& rng) {
  auto names = table_names(cat);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::set<std::string> chosen{names[rng.uniform_index(names.size())]};
    while (chosen.size() < target) {
      std::vector<std::string> frontier;
      for (const auto& e : cat.join_graph) {
        if (chosen.count(e.left_table) && !chosen.count(e.right_table))
          frontier.push_back(e.right_table);
        if (chosen.count(e.right_table) && !chosen.count(e.left_table))
          frontier.push_back(e.left_table);
      }
      std::sort(frontier.begin(), frontier.end());
      frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
      if (frontier.empty()) break;
      chosen.insert(frontier[rng.uniform_index(frontier.size())]);
    }
    if (chosen.size() == target) return chosen;
  }
  // the graph cannot support the requested size from any sampled start
  std::set<std::string> chosen{names[rng.uniform_index(names.size())]};
  return chosen;
}

inline std::vector<const Value*> nonnull_column_values(const TableData& t, int col) {
  std::vector<const Value*> vals;
  for (const auto& row : t.rows)
    if (row[col].has_value()) vals.push_back(&*row[col]);
  return vals;
}

inline Split draw_split(Rng& rng, double train_frac, double val_frac) {
  double u = rng.uniform01();
  if (u < train_frac) return Split::Train;
  if (u < train_frac + val_frac) return Split::Validation;
  return Split::Test;
}

}  // namespace workload_detail

// One query: a uniform-size connected sub-graph of the join schema graph with
// y ~ U{0..max_filters} filter draws. Numeric columns get a sampled l <= u
// range pair, text columns an equality on a stored value.
inline QueryAst gen_spj_query(const Catalog& cat, const SpjOptions& opt, Rng& rng) {
  size_t max_tables = static_cast<size_t>(opt.max_joins) + 1;
  if (cat.join_graph.empty() && max_tables > 1)
    throw Error("catalog has no join edges but max_joins > 0");
  size_t target = 1 + rng.uniform_index(max_tables);
  auto chosen = workload_detail::sample_connected_tables(cat, target, rng);

  QueryAst ast;
  for (const auto& name : chosen) ast.tables.push_back({name, name});
  for (const JoinEdge* e : workload_detail::edges_between(cat, chosen))
    ast.joins.push_back({{e->left_table, e->left_column}, {e->right_table, e->right_column}});

  std::vector<std::string> pool(chosen.begin(), chosen.end());
  int y = static_cast<int>(rng.uniform_index(static_cast<size_t>(opt.max_filters) + 1));
  for (int i = 0; i < y; ++i) {
    const std::string& tname = pool[rng.uniform_index(pool.size())];
    const TableData& t = cat.table(tname);
    size_t c = rng.uniform_index(t.columns.size());
    const ColumnDecl& col = t.columns[c];
    ColumnRef ref{tname, col.name};
    if (col.type == ColumnType::Text) {
      auto vals = workload_detail::nonnull_column_values(t, static_cast<int>(c));
      if (vals.empty()) continue;
      ast.filters.push_back({ref, CompareOp::Eq, *vals[rng.uniform_index(vals.size())]});
    } else {
      const ColumnStats& st = cat.column_stats(tname, col.name);
      if (!st.min.has_value()) continue;  // all-null column
      double lo = as_double(*st.min);
      double hi = as_double(*st.max);
      double a = rng.uniform_real(lo, hi);
      double b = rng.uniform_real(lo, hi);
      if (a > b) std::swap(a, b);
      if (col.type == ColumnType::Int64) {
        ast.filters.push_back({ref, CompareOp::Ge, Value(static_cast<int64_t>(std::floor(a)))});
        ast.filters.push_back({ref, CompareOp::Le, Value(static_cast<int64_t>(std::floor(b)))});
      } else {
        ast.filters.push_back({ref, CompareOp::Ge, Value(a)});
        ast.filters.push_back({ref, CompareOp::Le, Value(b)});
      }
    }
  }
  canonicalize(ast);
  validate_ast(ast, cat);
  return ast;
}

inline Workload gen_spj(const Catalog& cat, int n, const SpjOptions& opt, uint64_t seed) {
  Workload w;
  w.family = "spj";
  w.seed = seed;
  w.params = {{"n", n},
              {"max_joins", opt.max_joins},
              {"max_filters", opt.max_filters},
              {"train_fraction", opt.train_fraction},
              {"validation_fraction", opt.validation_fraction}};
  w.items.reserve(n);
  for (int q = 0; q < n; ++q) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(q)));
    WorkloadItem item;
    QueryAst ast = gen_spj_query(cat, opt, rng);
    item.ground_truth = execute_count(cat, ast);
    item.statement = std::move(ast);
    item.split = workload_detail::draw_split(rng, opt.train_fraction, opt.validation_fraction);
    w.items.push_back(std::move(item));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Workload-shift splits. Train keeps queries strictly below lo, test strictly
// above hi; queries on the boundary are dropped.

template <typename CountFn>
inline std::pair<Workload, Workload> split_workload_by(const Workload& w, size_t lo, size_t hi,
                                                       CountFn&& count, const char* dimension) {
  Workload train, test;
  train.family = test.family = "shift";
  train.seed = test.seed = w.seed;
  train.params = {{"base_family", w.family}, {"dimension", dimension}, {"lo", lo}, {"hi", hi}, {"side", "train"}};
  test.params = {{"base_family", w.family}, {"dimension", dimension}, {"lo", lo}, {"hi", hi}, {"side", "test"}};
  for (const auto& item : w.items) {
    const QueryAst* q = item.query();
    if (!q) continue;
    size_t c = count(*q);
    if (c < lo) {
      WorkloadItem copy = item;
      copy.split = Split::Train;
      train.items.push_back(std::move(copy));
    } else if (c > hi) {
      WorkloadItem copy = item;
      copy.split = Split::Test;
      test.items.push_back(std::move(copy));
    }
  }
  return {std::move(train), std::move(test)};
}

inline std::pair<Workload, Workload> split_by_joins(const Workload& w, size_t lo = 3,
                                                    size_t hi = 3) {
  return split_workload_by(w, lo, hi, [](const QueryAst& q) { return q.join_count(); }, "joins");
}

inline std::pair<Workload, Workload> split_by_filters(const Workload& w, size_t lo = 4,
                                                      size_t hi = 4) {
  return split_workload_by(w, lo, hi, [](const QueryAst& q) { return q.filter_count(); },
                           "filters");
}

// ---------------------------------------------------------------------------
// Write-intensive (dynamic) workloads

struct DynamicOptions {
  int writes = 200;
  int insert_ratio = 2;
  int delete_ratio = 1;
  int update_ratio = 1;
  int stats_buckets = 10;
  int stats_mcv = 5;
};

struct DynamicWorkload {
  Catalog initial;  // 2/3 of every table, stats built once and never refreshed
  Workload workload;
};

namespace workload_detail {

// Largest-remainder apportionment of `total` across the ratio parts.
inline std::array<int, 3> ratio_counts(int total, int a, int b, int c) {
  int sum = a + b + c;
  if (sum <= 0) throw Error("write ratio must have a positive component");
  double parts[3] = {static_cast<double>(total) * a / sum, static_cast<double>(total) * b / sum,
                     static_cast<double>(total) * c / sum};
  std::array<int, 3> counts{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = static_cast<int>(parts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return parts[x] - std::floor(parts[x]) > parts[y] - std::floor(parts[y]);
  });
  for (int i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % 3]];
  return counts;
}

}  // namespace workload_detail

// Initializes the database with a uniform 2/3 of each table's rows, interleaves
// base queries with writes in the given ratio, and computes every ground truth
// against the evolving state. Inserts draw from the held-out third.
inline DynamicWorkload gen_dynamic(const Catalog& cat, const Workload& base,
                                   const DynamicOptions& opt, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x64796eull));
  DynamicWorkload out;
  out.workload.family = "dynamic";
  out.workload.seed = seed;
  out.workload.params = {{"writes", opt.writes},
                         {"ratio", {opt.insert_ratio, opt.delete_ratio, opt.update_ratio}},
                         {"base_family", base.family},
                         {"base_seed", base.seed}};

  // initial = uniformly chosen 2/3 of each table; the rest is the insert pool
  std::map<std::string, std::vector<std::vector<Cell>>> held_out;
  for (const auto& [name, full] : cat.tables) {
    size_t keep = full.rows.size() * 2 / 3;
    std::vector<size_t> idx(full.rows.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    std::vector<bool> kept(full.rows.size(), false);
    for (size_t i = 0; i < keep; ++i) kept[idx[i]] = true;
    TableData t;
    t.name = name;
    t.columns = full.columns;
    for (size_t i = 0; i < full.rows.size(); ++i)
      if (kept[i])
        t.rows.push_back(full.rows[i]);
      else
        held_out[name].push_back(full.rows[i]);
    out.initial.add_table(std::move(t));
  }
  for (const auto& e : cat.join_graph)
    out.initial.add_join_edge(e.left_table, e.left_column, e.right_table, e.right_column);
  build_all_stats(out.initial, opt.stats_buckets, opt.stats_mcv);

  auto counts = workload_detail::ratio_counts(opt.writes, opt.insert_ratio, opt.delete_ratio,
                                              opt.update_ratio);
  size_t pool_size = 0;
  for (const auto& [_, rows] : held_out) pool_size += rows.size();
  if (static_cast<size_t>(counts[0]) > pool_size)
    throw Error("insert count exceeds the held-out third (" + std::to_string(pool_size) + " rows)");

  // interleaving pattern: base query indices and write kinds, shuffled together
  enum class Slot { Query, Insert, Delete, Update };
  std::vector<std::pair<Slot, size_t>> slots;
  size_t query_count = 0;
  for (size_t i = 0; i < base.items.size(); ++i)
    if (base.items[i].query()) slots.emplace_back(Slot::Query, i), ++query_count;
  for (int i = 0; i < counts[0]; ++i) slots.emplace_back(Slot::Insert, 0);
  for (int i = 0; i < counts[1]; ++i) slots.emplace_back(Slot::Delete, 0);
  for (int i = 0; i < counts[2]; ++i) slots.emplace_back(Slot::Update, 0);
  rng.shuffle(slots);

  Catalog working = out.initial;
  auto tables_with_rows = [&]() {
    std::vector<std::string> names;
    for (const auto& [name, t] : working.tables)
      if (!t.rows.empty()) names.push_back(name);
    return names;
  };
  auto tables_with_pool = [&]() {
    std::vector<std::string> names;
    for (const auto& [name, rows] : held_out)
      if (!rows.empty()) names.push_back(name);
    return names;
  };

  for (const auto& [slot, qidx] : slots) {
    WorkloadItem item;
    switch (slot) {
      case Slot::Query: {
        const WorkloadItem& b = base.items[qidx];
        item = b;
        item.ground_truth = execute_count(working, *b.query());
        break;
      }
      case Slot::Insert: {
        auto names = tables_with_pool();
        if (names.empty()) throw Error("insert pool exhausted");
        const std::string& tname = names[rng.uniform_index(names.size())];
        auto& pool = held_out[tname];
        size_t pick = rng.uniform_index(pool.size());
        WriteOp op;
        op.kind = WriteOp::Kind::Insert;
        op.table = tname;
        op.insert_row = pool[pick];
        pool.erase(pool.begin() + static_cast<ptrdiff_t>(pick));
        apply_write(working, op);
        item.statement = std::move(op);
        break;
      }
      case Slot::Delete: {
        auto names = tables_with_rows();
        if (names.empty()) throw Error("no rows left to delete");
        const std::string& tname = names[rng.uniform_index(names.size())];
        WriteOp op;
        op.kind = WriteOp::Kind::Delete;
        op.table = tname;
        op.row_position = rng.uniform_index(working.table(tname).rows.size());
        apply_write(working, op);
        item.statement = std::move(op);
        break;
      }
      case Slot::Update: {
        auto names = tables_with_rows();
        if (names.empty()) throw Error("no rows left to update");
        const std::string& tname = names[rng.uniform_index(names.size())];
        const TableData& full = cat.table(tname);
        WriteOp op;
        op.kind = WriteOp::Kind::Update;
        op.table = tname;
        op.row_position = rng.uniform_index(working.table(tname).rows.size());
        size_t c = rng.uniform_index(full.columns.size());
        op.update_column = full.columns[c].name;
        op.update_value = full.rows[rng.uniform_index(full.rows.size())][c];
        apply_write(working, op);
        item.statement = std::move(op);
        break;
      }
    }
    out.workload.items.push_back(std::move(item));
  }
  return out;
}

// ---------------------------------------------------------------------------
// LIKE workloads

struct LikeOptions {
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  size_t min_substring = 2;
};

// Repeatedly picks a stored string and enumerates its substring patterns in
// the fixed order (start index, then length, then form p% / %p / %p%),
// deduplicating until n patterns exist. High/low frequency tags record
// whether the pattern hits a top-k MCV string.
inline Workload gen_like(const Catalog& cat, const std::string& table, const std::string& column,
                         int n, const LikeOptions& opt, uint64_t seed) {
  const TableData& t = cat.table(table);
  int c = t.column_index(column);
  if (c < 0) throw SchemaError("unknown column '" + column + "'");
  if (t.columns[c].type != ColumnType::Text)
    throw SchemaError("LIKE workload needs a text column");
  std::vector<std::string> pool;
  for (const auto& row : t.rows)
    if (row[c].has_value()) pool.push_back(std::get<std::string>(*row[c]));
  if (pool.empty()) throw Error("column has no stored strings");

  const ColumnStats& st = cat.column_stats(table, column);

  Rng rng(mix_seed(seed, 0x6c696b65ull));
  std::set<std::string> seen;
  std::vector<std::string> patterns;
  size_t stall = 0;
  while (static_cast<int>(patterns.size()) < n && stall < pool.size() + 64) {
    const std::string& s = pool[rng.uniform_index(pool.size())];
    size_t before = patterns.size();
    for (size_t start = 0; start < s.size() && static_cast<int>(patterns.size()) < n; ++start) {
      for (size_t len = opt.min_substring; start + len <= s.size(); ++len) {
        std::string p = s.substr(start, len);
        for (const std::string& form : {p + "%", "%" + p, "%" + p + "%"}) {
          if (seen.insert(form).second) {
            patterns.push_back(form);
            if (static_cast<int>(patterns.size()) >= n) break;
          }
        }
        if (static_cast<int>(patterns.size()) >= n) break;
      }
    }
    stall = patterns.size() == before ? stall + 1 : 0;
  }

  Workload w;
  w.family = "like";
  w.seed = seed;
  w.params = {{"table", table}, {"column", column}, {"n", n}};
  for (size_t i = 0; i < patterns.size(); ++i) {
    QueryAst ast;
    ast.tables.push_back({table, table});
    ast.filters.push_back({{table, column}, CompareOp::Like, Value(patterns[i])});
    canonicalize(ast);
    WorkloadItem item;
    item.ground_truth = execute_count(cat, ast);
    bool high = false;
    for (const auto& [v, cnt] : st.mcv)
      high |= like_match(std::get<std::string>(v), patterns[i]);
    item.tag = high ? "high-freq" : "low-freq";
    item.statement = std::move(ast);
    Rng srng(mix_seed(seed, 0x73706c69ull + i));
    item.split = workload_detail::draw_split(srng, opt.train_fraction, opt.validation_fraction);
    w.items.push_back(std::move(item));
  }
  return w;
}

// ---------------------------------------------------------------------------
// DISTINCT workloads

using ColumnChooser = std::function<ColumnRef(const QueryAst&, const Catalog&, Rng&)>;

inline ColumnRef uniform_column_chooser(const QueryAst& ast, const Catalog& cat, Rng& rng) {
  std::vector<ColumnRef> all;
  for (const auto& t : ast.tables)
    for (const auto& col : cat.table(t.table).columns) all.push_back({t.alias, col.name});
  return all[rng.uniform_index(all.size())];
}

// Adds a DISTINCT target to every base query and recomputes ground truths.
inline Workload gen_distinct(const Catalog& cat, const Workload& base, uint64_t seed,
                             const ColumnChooser& chooser = uniform_column_chooser) {
  Workload w;
  w.family = "distinct";
  w.seed = seed;
  w.params = {{"base_family", base.family}, {"base_seed", base.seed}};
  size_t qindex = 0;
  for (const auto& item : base.items) {
    const QueryAst* q = item.query();
    if (!q) continue;
    Rng rng(mix_seed(seed, qindex++));
    QueryAst ast = *q;
    ast.distinct_on = chooser(ast, cat, rng);
    WorkloadItem copy;
    copy.ground_truth = execute_count(cat, ast);
    copy.statement = std::move(ast);
    copy.split = item.split;
    w.items.push_back(std::move(copy));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Workload files: one JSON header line (format/seed/params), then one JSON
// record per statement.

inline std::string save_workload(const Workload& w) {
  std::ostringstream out;
  nlohmann::json header{{"format", "cardbench-workload"},
                        {"version", 1},
                        {"family", w.family},
                        {"seed", w.seed},
                        {"params", w.params}};
  out << header.dump() << "\n";
  for (const auto& item : w.items) {
    nlohmann::json j;
    if (const QueryAst* q = item.query()) {
      j["kind"] = "query";
      j["sql"] = render_query(*q);
      if (item.ground_truth) j["truth"] = *item.ground_truth;
      j["split"] = to_string(item.split);
      if (!item.tag.empty()) j["tag"] = item.tag;
    } else {
      const WriteOp& op = *item.write();
      switch (op.kind) {
        case WriteOp::Kind::Insert: {
          j["kind"] = "insert";
          j["table"] = op.table;
          j["values"] = nlohmann::json::array();
          for (const auto& cell : op.insert_row) j["values"].push_back(detail::cell_to_json(cell));
          break;
        }
        case WriteOp::Kind::Update:
          j["kind"] = "update";
          j["table"] = op.table;
          j["row"] = op.row_position;
          j["column"] = op.update_column;
          j["value"] = detail::cell_to_json(op.update_value);
          break;
        case WriteOp::Kind::Delete:
          j["kind"] = "delete";
          j["table"] = op.table;
          j["row"] = op.row_position;
          break;
      }
    }
    out << j.dump() << "\n";
  }
  return out.str();
}

inline Workload load_workload(const std::string& text, const Catalog& cat) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DecodeError("empty workload file");
  Workload w;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("format", "") != "cardbench-workload" || header.value("version", 0) != 1)
      throw DecodeError("not a workload file");
    w.family = header.at("family").get<std::string>();
    w.seed = header.at("seed").get<uint64_t>();
    w.params = header.value("params", nlohmann::json::object());
    size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      WorkloadItem item;
      std::string kind = j.at("kind").get<std::string>();
      if (kind == "query") {
        item.statement = parse_query(j.at("sql").get<std::string>(), cat);
        if (j.contains("truth")) item.ground_truth = j.at("truth").get<uint64_t>();
        item.split = split_from_string(j.value("split", "test"));
        item.tag = j.value("tag", "");
      } else {
        WriteOp op;
        op.table = j.at("table").get<std::string>();
        const TableData& t = cat.table(op.table);
        if (kind == "insert") {
          op.kind = WriteOp::Kind::Insert;
          const auto& vals = j.at("values");
          if (vals.size() != t.columns.size())
            throw DecodeError("insert width mismatch at line " + std::to_string(lineno));
          for (size_t c = 0; c < t.columns.size(); ++c)
            op.insert_row.push_back(detail::cell_from_json(vals[c], t.columns[c].type));
        } else if (kind == "update") {
          op.kind = WriteOp::Kind::Update;
          op.row_position = j.at("row").get<size_t>();
          op.update_column = j.at("column").get<std::string>();
          int c = t.column_index(op.update_column);
          if (c < 0) throw DecodeError("unknown column in update at line " + std::to_string(lineno));
          op.update_value = detail::cell_from_json(j.at("value"), t.columns[c].type);
        } else if (kind == "delete") {
          op.kind = WriteOp::Kind::Delete;
          op.row_position = j.at("row").get<size_t>();
        } else {
          throw DecodeError("unknown statement kind '" + kind + "'");
        }
        item.statement = std::move(op);
      }
      w.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("corrupt workload file: ") + e.what());
  }
  return w;
}

}  // namespace cardbench
