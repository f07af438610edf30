#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "cardbench/error.hpp"

namespace cardbench {

enum class ColumnType { Int64, Float64, Text };

inline const char* to_string(ColumnType t) {
  switch (t) {
    case ColumnType::Int64: return "int64";
    case ColumnType::Float64: return "float64";
    case ColumnType::Text: return "text";
  }
  return "?";
}

inline ColumnType column_type_from_string(const std::string& s) {
  if (s == "int64") return ColumnType::Int64;
  if (s == "float64") return ColumnType::Float64;
  if (s == "text") return ColumnType::Text;
  throw DecodeError("unknown column type '" + s + "'");
}

inline bool is_numeric(ColumnType t) { return t != ColumnType::Text; }

// A single non-null cell value. Alternatives follow ColumnType order, so the
// variant's built-in comparison is total within a column (values of one column
// always share a type).
using Value = std::variant<int64_t, double, std::string>;
using Cell = std::optional<Value>;

inline double as_double(const Value& v) {
  if (std::holds_alternative<int64_t>(v)) return static_cast<double>(std::get<int64_t>(v));
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  throw SchemaError("text value used where a number is required");
}

struct ValueHash {
  size_t operator()(const Value& v) const {
    switch (v.index()) {
      case 0: return std::hash<int64_t>{}(std::get<int64_t>(v));
      case 1: return std::hash<double>{}(std::get<double>(v));
      default: return std::hash<std::string>{}(std::get<std::string>(v));
    }
  }
};

// Decimal rendering without exponent notation. Integral doubles print as
// integers; fractional ones get the fewest digits that round-trip via strtod.
inline std::string format_number(double v) {
  if (std::isnan(v) || std::isinf(v)) throw Error("cannot render non-finite number");
  if (v == std::floor(v) && std::fabs(v) < 9.007199254740992e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[512];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string format_value(const Value& v) {
  switch (v.index()) {
    case 0: return std::to_string(std::get<int64_t>(v));
    case 1: return format_number(std::get<double>(v));
    default: return std::get<std::string>(v);
  }
}

// SQL LIKE with '%' (any sequence) and '_' (any single char), case-sensitive.
// Iterative two-pointer match with backtracking to the last '%'.
inline bool like_match(const std::string& text, const std::string& pattern) {
  size_t t = 0, p = 0;
  size_t star_p = std::string::npos, star_t = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '_' || pattern[p] == text[t])) {
      ++t;
      ++p;
    } else if (p < pattern.size() && pattern[p] == '%') {
      star_p = p++;
      star_t = t;
    } else if (star_p != std::string::npos) {
      p = star_p + 1;
      t = ++star_t;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '%') ++p;
  return p == pattern.size();
}

}  // namespace cardbench
