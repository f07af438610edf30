#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "cardbench/ast.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/error.hpp"
#include "cardbench/estimators.hpp"
#include "cardbench/value.hpp"

namespace cardbench {

// Frozen role statement; ablations toggle prompt content, never this text.
inline constexpr const char* kPromptInstruction =
    "You are a cardinality estimator for a relational database. Given a SQL query, "
    "coarse column statistics, and cardinality estimates from other estimators, respond "
    "with the estimated number of result rows as a single integer in digits.";

inline constexpr const char* kFeedbackDirectiveA = "your previous estimate ";
inline constexpr const char* kFeedbackDirectiveB = " deviates from a reference estimate ";
inline constexpr const char* kFeedbackDirectiveC = "; produce a corrected cardinality";

struct PromptColumn {
  std::string name;  // qualified, as referenced by the query
  Cell min;
  Cell max;
  uint64_t ndv = 0;
  std::vector<std::pair<Value, uint64_t>> mcv;
  std::vector<Value> histogram_bounds;
  uint64_t rowcount = 0;  // of the owning table, so MCV counts convert to ratios
  bool operator==(const PromptColumn&) const = default;
};

struct FeedbackTurn {
  std::string previous_output;
  double reference = 0;
  std::string directive;
  bool operator==(const FeedbackTurn&) const = default;
};

struct FewShotExample {
  std::string query;
  uint64_t cardinality = 0;
  bool operator==(const FewShotExample&) const = default;
};

struct Prompt {
  std::string instruction;
  std::string query_text;
  std::vector<PromptColumn> columns;
  std::vector<std::pair<std::string, double>> estimates;  // (source tag, value)
  std::vector<FeedbackTurn> feedback;
  std::vector<FewShotExample> fewshot;
  size_t max_feedback = 5;
  bool operator==(const Prompt&) const = default;
};

struct PromptOptions {
  bool include_stats = true;      // off = "w/o coarse-grained statistics"
  bool include_estimates = true;  // off = "w/o other estimator information"
  std::vector<FewShotExample> fewshot;  // empty by default; few-shot hurts accuracy
  size_t max_feedback = 5;
};

// Columns referenced by joins, filters, and DISTINCT, in first-appearance
// order of the canonical query form.
inline std::vector<ColumnRef> referenced_columns(const QueryAst& ast) {
  std::vector<ColumnRef> refs;
  auto add = [&](const ColumnRef& r) {
    for (const auto& seen : refs)
      if (seen == r) return;
    refs.push_back(r);
  };
  for (const auto& j : ast.joins) {
    add(j.left);
    add(j.right);
  }
  for (const auto& f : ast.filters) add(f.col);
  if (ast.distinct_on) add(*ast.distinct_on);
  return refs;
}

inline Prompt build_prompt(const QueryAst& ast, const Catalog& cat,
                           const std::vector<Estimate>& estimates,
                           const PromptOptions& options = {}) {
  if (options.include_estimates && estimates.empty())
    throw Error("prompt requires other-estimator estimates (or the ablation toggle)");
  Prompt p;
  p.instruction = kPromptInstruction;
  p.query_text = render_query(ast);
  p.max_feedback = options.max_feedback;
  if (options.include_stats) {
    for (const auto& ref : referenced_columns(ast)) {
      const TableRef* t = ast.find_alias(ref.alias);
      if (!t) throw SchemaError("unknown alias '" + ref.alias + "'");
      const ColumnStats& st = cat.column_stats(t->table, ref.column);
      PromptColumn col;
      col.name = ref.qualified();
      col.min = st.min;
      col.max = st.max;
      col.ndv = st.ndv;
      col.mcv = st.mcv;
      col.histogram_bounds = st.histogram_bounds;
      col.rowcount = cat.stats_rows(t->table);
      p.columns.push_back(std::move(col));
    }
  }
  if (options.include_estimates)
    for (const auto& e : estimates) p.estimates.emplace_back(e.source, e.value);
  p.fewshot = options.fewshot;
  return p;
}

inline Prompt append_feedback(const Prompt& p, const std::string& previous_output,
                              const Estimate& reference) {
  if (p.feedback.size() >= p.max_feedback)
    throw Error("feedback budget exhausted (" + std::to_string(p.max_feedback) + " turns)");
  Prompt out = p;
  FeedbackTurn turn;
  turn.previous_output = previous_output;
  turn.reference = reference.value;
  turn.directive = kFeedbackDirectiveA + previous_output + kFeedbackDirectiveB +
                   format_number(reference.value) + kFeedbackDirectiveC;
  out.feedback.push_back(std::move(turn));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization. The writer is hand-rolled so key order and number rendering
// are pinned down to the byte; golden files freeze the result.

namespace prompt_detail {

inline void json_escape_to(std::string& out, const std::string& s) {
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
}

inline void write_string(std::string& out, const std::string& s) {
  out += '"';
  json_escape_to(out, s);
  out += '"';
}

inline void write_value(std::string& out, const Value& v) {
  if (std::holds_alternative<std::string>(v))
    write_string(out, std::get<std::string>(v));
  else
    out += format_value(v);
}

inline void write_cell(std::string& out, const Cell& c) {
  if (!c.has_value())
    out += "null";
  else
    write_value(out, *c);
}

}  // namespace prompt_detail

inline std::string serialize_prompt(const Prompt& p) {
  using namespace prompt_detail;
  std::string out = "{\"instruction\":";
  write_string(out, p.instruction);
  out += ",\"input\":{\"query\":";
  write_string(out, p.query_text);
  for (size_t i = 0; i < p.columns.size(); ++i) {
    const PromptColumn& c = p.columns[i];
    out += ",\"column_" + std::to_string(i + 1) + "\":{\"name\":";
    write_string(out, c.name);
    out += ",\"min\":";
    write_cell(out, c.min);
    out += ",\"max\":";
    write_cell(out, c.max);
    out += ",\"ndv\":" + std::to_string(c.ndv);
    out += ",\"mcv\":[";
    for (size_t m = 0; m < c.mcv.size(); ++m) {
      if (m) out += ',';
      out += '[';
      write_value(out, c.mcv[m].first);
      out += ',' + std::to_string(c.mcv[m].second) + ']';
    }
    out += "],\"histogram_bounds\":[";
    for (size_t b = 0; b < c.histogram_bounds.size(); ++b) {
      if (b) out += ',';
      write_value(out, c.histogram_bounds[b]);
    }
    out += "],\"rowcount\":" + std::to_string(c.rowcount) + "}";
  }
  out += ",\"estimates\":[";
  for (size_t i = 0; i < p.estimates.size(); ++i) {
    if (i) out += ',';
    out += "{\"source\":";
    write_string(out, p.estimates[i].first);
    out += ",\"value\":" + format_number(p.estimates[i].second) + "}";
  }
  out += "],\"feedback\":[";
  for (size_t i = 0; i < p.feedback.size(); ++i) {
    if (i) out += ',';
    out += "{\"previous_output\":";
    write_string(out, p.feedback[i].previous_output);
    out += ",\"reference\":" + format_number(p.feedback[i].reference);
    out += ",\"directive\":";
    write_string(out, p.feedback[i].directive);
    out += '}';
  }
  out += ']';
  if (!p.fewshot.empty()) {
    out += ",\"examples\":[";
    for (size_t i = 0; i < p.fewshot.size(); ++i) {
      if (i) out += ',';
      out += "{\"query\":";
      write_string(out, p.fewshot[i].query);
      out += ",\"cardinality\":" + std::to_string(p.fewshot[i].cardinality) + "}";
    }
    out += ']';
  }
  out += "}}";
  return out;
}

}  // namespace cardbench
