#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "cardbench/ast.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/error.hpp"

namespace cardbench {

// Recursive-descent parser for the supported subset (see docs/grammar.ebnf):
//
//   SELECT COUNT(*) | COUNT(DISTINCT a.c)
//   FROM t1 [alias] (, t2 [alias])*
//   [WHERE pred (AND pred)*]
//
// where pred is `a.c OP constant` (OP in =,<,<=,>,>=,LIKE) or the equi-join
// `a.c = b.c`. Keywords are case-insensitive, identifiers case-sensitive.
namespace parser_detail {

enum class TokKind { Ident, Number, String, Punct, End };

struct Token {
  TokKind kind;
  std::string text;   // Ident: as written; Number: literal; String: unescaped; Punct: symbol
  size_t pos;
  bool is_decimal = false;  // Number with a fractional part
};

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline std::vector<Token> tokenize(const std::string& sql) {
  std::vector<Token> toks;
  size_t i = 0;
  while (i < sql.size()) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    size_t start = i;
    if (ident_start(c)) {
      while (i < sql.size() && ident_char(sql[i])) ++i;
      toks.push_back({TokKind::Ident, sql.substr(start, i - start), start});
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '-' && i + 1 < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      if (c == '-') ++i;
      while (i < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i]))) ++i;
      bool dec = false;
      if (i + 1 < sql.size() && sql[i] == '.' && std::isdigit(static_cast<unsigned char>(sql[i + 1]))) {
        dec = true;
        ++i;
        while (i < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i]))) ++i;
      }
      toks.push_back({TokKind::Number, sql.substr(start, i - start), start, dec});
    } else if (c == '\'') {
      std::string s;
      ++i;
      bool closed = false;
      while (i < sql.size()) {
        if (sql[i] == '\'') {
          if (i + 1 < sql.size() && sql[i + 1] == '\'') {
            s += '\'';
            i += 2;
          } else {
            ++i;
            closed = true;
            break;
          }
        } else {
          s += sql[i++];
        }
      }
      if (!closed) throw ParseError("unterminated string literal", start);
      toks.push_back({TokKind::String, std::move(s), start});
    } else if (c == '<' || c == '>') {
      if (i + 1 < sql.size() && sql[i + 1] == '=') {
        toks.push_back({TokKind::Punct, sql.substr(i, 2), start});
        i += 2;
      } else {
        toks.push_back({TokKind::Punct, std::string(1, c), start});
        ++i;
      }
    } else if (c == ',' || c == '(' || c == ')' || c == '.' || c == '=' || c == '*') {
      toks.push_back({TokKind::Punct, std::string(1, c), start});
      ++i;
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", start);
    }
  }
  toks.push_back({TokKind::End, "", sql.size()});
  return toks;
}

inline std::string upper(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_keyword(const std::string& ident) {
  static const char* kw[] = {"SELECT", "COUNT", "DISTINCT", "FROM", "WHERE", "AND", "LIKE"};
  std::string u = upper(ident);
  for (const char* k : kw)
    if (u == k) return true;
  return false;
}

class Parser {
 public:
  Parser(const std::string& sql, const Catalog& cat) : toks_(tokenize(sql)), cat_(cat) {}

  QueryAst parse() {
    QueryAst ast;
    expect_keyword("SELECT");
    expect_keyword("COUNT");
    expect_punct("(");
    if (peek_keyword("DISTINCT")) {
      next();
      ast.distinct_on = parse_column_ref();
    } else {
      expect_punct("*");
    }
    expect_punct(")");
    expect_keyword("FROM");
    do {
      TableRef t;
      t.table = expect_ident("table name");
      if (cur().kind == TokKind::Ident && !is_keyword(cur().text))
        t.alias = expect_ident("alias");
      else
        t.alias = t.table;
      ast.tables.push_back(std::move(t));
    } while (accept_punct(","));
    if (peek_keyword("WHERE")) {
      next();
      do {
        parse_predicate(ast);
      } while (accept_keyword("AND"));
    }
    if (cur().kind != TokKind::End)
      throw ParseError("unexpected trailing input '" + cur().text + "'", cur().pos);
    canonicalize(ast);
    validate_ast(ast, cat_);
    return ast;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& lookahead(size_t k) const {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  void next() { ++pos_; }

  bool peek_keyword(const char* kw) const {
    return cur().kind == TokKind::Ident && upper(cur().text) == kw;
  }
  void expect_keyword(const char* kw) {
    if (!peek_keyword(kw)) throw ParseError(std::string("expected ") + kw, cur().pos);
    next();
  }
  bool accept_keyword(const char* kw) {
    if (!peek_keyword(kw)) return false;
    next();
    return true;
  }
  void expect_punct(const char* p) {
    if (cur().kind != TokKind::Punct || cur().text != p)
      throw ParseError(std::string("expected '") + p + "'", cur().pos);
    next();
  }
  bool accept_punct(const char* p) {
    if (cur().kind != TokKind::Punct || cur().text != p) return false;
    next();
    return true;
  }
  std::string expect_ident(const char* what) {
    if (cur().kind != TokKind::Ident || is_keyword(cur().text))
      throw ParseError(std::string("expected ") + what, cur().pos);
    std::string s = cur().text;
    next();
    return s;
  }

  ColumnRef parse_column_ref() {
    ColumnRef ref;
    ref.alias = expect_ident("alias");
    expect_punct(".");
    ref.column = expect_ident("column name");
    return ref;
  }

  ColumnType column_type(const QueryAst& ast, const ColumnRef& ref, size_t pos) {
    const TableRef* t = ast.find_alias(ref.alias);
    if (!t) throw ParseError("unknown alias '" + ref.alias + "'", pos);
    const TableData& table = cat_.table(t->table);
    if (table.column_index(ref.column) < 0)
      throw ParseError("unknown column '" + ref.qualified() + "'", pos);
    return table.column_type(ref.column);
  }

  Value typed_constant(const Token& tok, ColumnType type) {
    if (tok.kind == TokKind::String) {
      if (type != ColumnType::Text)
        throw ParseError("string constant on a numeric column", tok.pos);
      return Value(tok.text);
    }
    if (tok.kind != TokKind::Number) throw ParseError("expected a constant", tok.pos);
    if (type == ColumnType::Text)
      throw ParseError("numeric constant on a text column", tok.pos);
    if (type == ColumnType::Int64) {
      if (tok.is_decimal) throw ParseError("decimal constant on an integer column", tok.pos);
      return Value(static_cast<int64_t>(std::strtoll(tok.text.c_str(), nullptr, 10)));
    }
    return Value(std::strtod(tok.text.c_str(), nullptr));
  }

  void parse_predicate(QueryAst& ast) {
    size_t col_pos = cur().pos;
    ColumnRef lhs = parse_column_ref();
    ColumnType lhs_type = column_type(ast, lhs, col_pos);

    if (accept_keyword("LIKE")) {
      if (lhs_type != ColumnType::Text)
        throw ParseError("LIKE on non-text column '" + lhs.qualified() + "'", col_pos);
      if (cur().kind != TokKind::String) throw ParseError("LIKE requires a string pattern", cur().pos);
      ast.filters.push_back({lhs, CompareOp::Like, Value(cur().text)});
      next();
      return;
    }

    CompareOp op;
    if (accept_punct("=")) {
      // `a.c = b.c` is a join; `a.c = constant` a filter
      if (cur().kind == TokKind::Ident && !is_keyword(cur().text) &&
          lookahead(1).kind == TokKind::Punct && lookahead(1).text == ".") {
        size_t rhs_pos = cur().pos;
        ColumnRef rhs = parse_column_ref();
        ColumnType rhs_type = column_type(ast, rhs, rhs_pos);
        if (lhs_type != rhs_type)
          throw ParseError("join between differently typed columns", rhs_pos);
        ast.joins.push_back({lhs, rhs});
        return;
      }
      op = CompareOp::Eq;
    } else if (accept_punct("<=")) {
      op = CompareOp::Le;
    } else if (accept_punct("<")) {
      op = CompareOp::Lt;
    } else if (accept_punct(">=")) {
      op = CompareOp::Ge;
    } else if (accept_punct(">")) {
      op = CompareOp::Gt;
    } else {
      throw ParseError("expected a comparison operator", cur().pos);
    }
    if (op != CompareOp::Eq && !is_numeric(lhs_type))
      throw ParseError("range comparison on non-numeric column '" + lhs.qualified() + "'", col_pos);
    Value constant = typed_constant(cur(), lhs_type);
    next();
    ast.filters.push_back({lhs, op, std::move(constant)});
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
  const Catalog& cat_;
};

}  // namespace parser_detail

inline QueryAst parse_query(const std::string& sql, const Catalog& catalog) {
  return parser_detail::Parser(sql, catalog).parse();
}

}  // namespace cardbench
