#pragma once

#include <algorithm>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "cardbench/error.hpp"
#include "cardbench/estimators.hpp"
#include "cardbench/metrics.hpp"
#include "cardbench/parallel.hpp"
#include "cardbench/rng.hpp"

namespace cardbench {

// One bootstrap-trained copy of an estimator. Replicas differ only in their
// resample seed; ids mirror the replica-1..replica-N naming.
template <typename Model>
struct Replica {
  int id = 0;  // 1-based
  uint64_t resample_seed = 0;
  Model model;
};

inline std::vector<size_t> bootstrap_resample_indices(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = rng.uniform_index(n);
  return idx;
}

// Trains N replicas, each on a with-replacement resample of the full training
// set drawn with seed base_seed + id. trainer(items, seed) -> Model.
template <typename Item, typename Trainer>
auto bootstrap_train(const std::vector<Item>& train_set, int n_replicas, uint64_t base_seed,
                     Trainer&& trainer, int threads = 1) {
  using Model = std::remove_cvref_t<
      std::invoke_result_t<Trainer&, const std::vector<Item>&, uint64_t>>;
  if (train_set.empty()) throw Error("bootstrap training needs a nonempty training set");
  if (n_replicas < 1) throw Error("replica count must be >= 1");
  std::vector<Replica<Model>> replicas(n_replicas);
  parallel_for(static_cast<size_t>(n_replicas), threads, [&](size_t i) {
    int id = static_cast<int>(i) + 1;
    uint64_t seed = base_seed + static_cast<uint64_t>(id);
    std::vector<Item> resample;
    resample.reserve(train_set.size());
    for (size_t j : bootstrap_resample_indices(train_set.size(), seed))
      resample.push_back(train_set[j]);
    replicas[i] = Replica<Model>{id, seed, trainer(resample, seed)};
  });
  return replicas;
}

struct ConfidenceInterval {
  double low = 0;
  double high = 0;
};

// Runs run(seed_r) for R derived seeds and takes the 2.5th/97.5th percentiles
// (for the default 95% level) of the resulting estimate distribution.
template <typename RunFn>
ConfidenceInterval confidence_interval(RunFn&& run, int run_count, uint64_t base_seed,
                                       double level = 0.95) {
  if (run_count < 2) throw Error("confidence interval needs at least 2 runs");
  if (!(level > 0.0 && level < 1.0)) throw Error("confidence level must be in (0, 1)");
  std::vector<double> values;
  values.reserve(run_count);
  for (int r = 0; r < run_count; ++r)
    values.push_back(run(mix_seed(base_seed, static_cast<uint64_t>(r))));
  std::sort(values.begin(), values.end());
  double tail = (1.0 - level) / 2.0 * 100.0;
  return {nearest_rank_percentile(values, tail), nearest_rank_percentile(values, 100.0 - tail)};
}

// confidence = 1 / (CI_high - CI_low + eps); wider interval, lower score.
inline double confidence_score(double low, double high, double eps = 1e-6) {
  if (high < low) throw Error("confidence interval has high < low");
  return 1.0 / (high - low + eps);
}

struct Selection {
  size_t index = 0;  // position in the input list (replica id - 1 for replica lists)
  Estimate estimate;
};

// argmax over confidence scores; ties go to the smallest index. Scores come
// from the estimate's confidence field when set, else from its interval.
inline Selection select_most_confident(const std::vector<Estimate>& estimates, double eps = 1e-6) {
  if (estimates.empty()) throw Error("cannot select from an empty estimate list");
  size_t best = 0;
  double best_score = -1.0;
  for (size_t i = 0; i < estimates.size(); ++i) {
    double score;
    if (estimates[i].confidence.has_value()) {
      score = *estimates[i].confidence;
    } else if (estimates[i].ci.has_value()) {
      score = confidence_score(estimates[i].ci->first, estimates[i].ci->second, eps);
    } else {
      throw Error("estimate has neither confidence nor interval");
    }
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  Selection sel;
  sel.index = best;
  sel.estimate = estimates[best];
  if (!sel.estimate.confidence) sel.estimate.confidence = best_score;
  return sel;
}

}  // namespace cardbench
