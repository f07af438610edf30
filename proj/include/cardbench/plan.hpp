#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cardbench/ast.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/error.hpp"

namespace cardbench {

using CardinalityFn = std::function<double(const QueryAst&)>;

namespace plan_detail {

// card_fn calls can be expensive (oracle, model); memoize per alias subset.
class SubsetCard {
 public:
  SubsetCard(const QueryAst& ast, const CardinalityFn& card) : ast_(ast), card_(card) {}

  double operator()(const std::set<std::string>& aliases) {
    auto it = memo_.find(aliases);
    if (it != memo_.end()) return it->second;
    double v = card_(induced_subquery(ast_, aliases));
    memo_.emplace(aliases, v);
    return v;
  }

 private:
  const QueryAst& ast_;
  const CardinalityFn& card_;
  std::map<std::set<std::string>, double> memo_;
};

}  // namespace plan_detail

// Left-deep join order grown greedily by smallest estimated sub-result; ties
// break on alias name. Cross products are avoided while a connected extension
// exists.
inline std::vector<std::string> choose_left_deep_order(const QueryAst& ast,
                                                       const CardinalityFn& card) {
  plan_detail::SubsetCard sub(ast, card);
  std::vector<std::string> order;
  std::set<std::string> chosen;

  auto connected_to_chosen = [&](const std::string& alias) {
    for (const auto& j : ast.joins) {
      if (j.left.alias == alias && chosen.count(j.right.alias)) return true;
      if (j.right.alias == alias && chosen.count(j.left.alias)) return true;
    }
    return false;
  };

  while (order.size() < ast.tables.size()) {
    const std::string* best = nullptr;
    double best_card = 0;
    for (const auto& t : ast.tables) {
      if (chosen.count(t.alias)) continue;
      if (!chosen.empty() && !connected_to_chosen(t.alias)) continue;
      std::set<std::string> trial = chosen;
      trial.insert(t.alias);
      double c = sub(trial);
      if (!best || c < best_card || (c == best_card && t.alias < *best)) {
        best = &t.alias;
        best_card = c;
      }
    }
    if (!best) throw SchemaError("join graph is not connected");
    order.push_back(*best);
    chosen.insert(*best);
  }
  return order;
}

// Cost of a fixed left-deep order: every node charges its input cardinalities
// plus its output cardinality. Scans read the raw table and emit the filtered
// single-table result; each join reads both inputs and emits the new prefix.
inline double plan_cost_for_order(const QueryAst& ast, const Catalog& cat,
                                  const std::vector<std::string>& order,
                                  const CardinalityFn& card) {
  plan_detail::SubsetCard sub(ast, card);
  double cost = 0;
  std::set<std::string> prefix;
  for (const auto& alias : order) {
    const TableRef* t = ast.find_alias(alias);
    if (!t) throw SchemaError("unknown alias '" + alias + "' in plan order");
    double scan_out = sub({alias});
    cost += static_cast<double>(cat.stats_rows(t->table)) + scan_out;
    if (!prefix.empty()) {
      double left = sub(prefix);
      std::set<std::string> next = prefix;
      next.insert(alias);
      cost += left + scan_out + sub(next);
    }
    prefix.insert(alias);
  }
  return cost;
}

// Greedy left-deep plan costed under the same cardinality function.
inline double plan_cost(const QueryAst& ast, const Catalog& cat, const CardinalityFn& card) {
  return plan_cost_for_order(ast, cat, choose_left_deep_order(ast, card), card);
}

// Cost-based selective routing: a sub-query goes to the expensive estimator
// iff its cheap-estimator plan cost exceeds the threshold.
enum class Route { Cheap, Expensive };

inline Route route(double cheap_cost, double threshold) {
  return cheap_cost > threshold ? Route::Expensive : Route::Cheap;
}

}  // namespace cardbench
