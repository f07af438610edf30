#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cardbench/ensemble.hpp"
#include "cardbench/estimators.hpp"
#include "cardbench/inference.hpp"
#include "cardbench/metrics.hpp"
#include "cardbench/oracle.hpp"
#include "cardbench/parallel.hpp"
#include "cardbench/plan.hpp"
#include "cardbench/prompt.hpp"
#include "cardbench/workloads.hpp"

namespace cardbench {

// ---------------------------------------------------------------------------
// Estimator pipelines: everything the benchmark runner needs to turn a query
// into one estimate. query_index seeds any per-query randomness.

struct PipelineResult {
  Estimate estimate;
  int iterations = 1;  // self-correction turns taken (1 = no correction)
  bool exhausted = false;
  std::optional<double> first_estimate;  // first-turn numeric output, if any
};

class EstimatorPipeline {
 public:
  virtual ~EstimatorPipeline() = default;
  virtual PipelineResult estimate(const QueryAst& ast, size_t query_index) = 0;
  virtual std::string name() const = 0;
  virtual bool thread_safe() const { return true; }
};

class OraclePipeline : public EstimatorPipeline {
 public:
  explicit OraclePipeline(const Catalog& db) : db_(db) {}
  PipelineResult estimate(const QueryAst& ast, size_t) override {
    PipelineResult r;
    r.estimate = {static_cast<double>(execute_count(db_, ast)), "oracle", std::nullopt, std::nullopt};
    return r;
  }
  std::string name() const override { return "oracle"; }

 private:
  const Catalog& db_;
};

class IndependencePipeline : public EstimatorPipeline {
 public:
  explicit IndependencePipeline(const Catalog& cat, IndependenceOptions opt = {})
      : cat_(cat), opt_(opt) {}
  PipelineResult estimate(const QueryAst& ast, size_t) override {
    PipelineResult r;
    r.estimate = estimate_independence(cat_, ast, opt_);
    return r;
  }
  std::string name() const override { return kSourceIndependence; }

 private:
  const Catalog& cat_;
  IndependenceOptions opt_;
};

class SamplingPipeline : public EstimatorPipeline {
 public:
  SamplingPipeline(const Catalog& db, double rate, uint64_t seed)
      : db_(db), rate_(rate), seed_(seed) {}
  PipelineResult estimate(const QueryAst& ast, size_t query_index) override {
    PipelineResult r;
    r.estimate = estimate_sampling(db_, ast, rate_, mix_seed(seed_, query_index));
    return r;
  }
  std::string name() const override { return kSourceSampling; }

 private:
  const Catalog& db_;
  double rate_;
  uint64_t seed_;
};

// The full prompt -> backend -> self-correction pipeline. Other-estimator
// estimates are the independence baseline plus the sampling estimator; the
// sampling estimate (optionally the most confident of N bootstrap replicas)
// doubles as the self-correction reference. With include_estimates off,
// prompts carry no estimates and self-correction is disabled (it needs a
// reference); the independence estimate remains the non-numeric fallback.
struct LlmPipelineConfig {
  PromptOptions prompt;
  double tau = 5.0;
  int i_max = 5;  // 0 = self-correction off
  double sampling_rate = 0.05;
  uint64_t seed = 17;
  bool bootstrap_reference = false;
  int replicas = 8;
  int ci_runs = 32;
  CompletionOptions completion;
};

// Misconfiguration surfaces here, before the first query runs.
inline void validate_pipeline_config(const LlmPipelineConfig& cfg) {
  if (cfg.tau < 1.0) throw Error("self-correction threshold must be >= 1");
  if (cfg.i_max < 0) throw Error("i_max must be >= 0");
  if (!(cfg.sampling_rate > 0.0 && cfg.sampling_rate <= 1.0))
    throw Error("sampling rate must be in (0, 1]");
  if (cfg.replicas < 1) throw Error("replica count must be >= 1");
  if (cfg.ci_runs < 2) throw Error("confidence intervals need at least 2 runs");
}

class LlmPipeline : public EstimatorPipeline {
 public:
  LlmPipeline(const Catalog& db, Backend& backend, LlmPipelineConfig cfg)
      : db_(db), backend_(backend), cfg_(std::move(cfg)) {
    validate_pipeline_config(cfg_);
  }

  PipelineResult estimate(const QueryAst& ast, size_t query_index) override {
    Estimate pg = estimate_independence(db_, ast);
    Estimate sampled;
    std::vector<Estimate> others;
    if (cfg_.bootstrap_reference) {
      std::vector<Estimate> replica_estimates;
      for (int id = 1; id <= cfg_.replicas; ++id) {
        uint64_t replica_seed = cfg_.seed + static_cast<uint64_t>(id);
        auto run = [&](uint64_t run_seed) {
          return estimate_sampling(db_, ast, cfg_.sampling_rate, run_seed).value;
        };
        ConfidenceInterval ci =
            confidence_interval(run, cfg_.ci_runs, mix_seed(replica_seed, query_index));
        Estimate e = estimate_sampling(db_, ast, cfg_.sampling_rate,
                                       mix_seed(replica_seed, query_index));
        e.ci = {ci.low, ci.high};
        e.confidence = confidence_score(ci.low, ci.high);
        replica_estimates.push_back(std::move(e));
      }
      sampled = select_most_confident(replica_estimates).estimate;
    } else {
      sampled = estimate_sampling(db_, ast, cfg_.sampling_rate, mix_seed(cfg_.seed, query_index));
    }
    others.push_back(pg);
    others.push_back(sampled);  // raw: a zero marks an empty sample

    // an empty sample carries no signal; the independence estimate is then
    // the best available self-correction reference
    Estimate reference = sampled.value >= 1.0 ? sampled : pg;
    reference.value = std::max(reference.value, 1.0);

    Prompt prompt = build_prompt(ast, db_, others, cfg_.prompt);
    int i_max = cfg_.prompt.include_estimates ? cfg_.i_max : 0;
    CorrectionTrace trace =
        self_correct(backend_, prompt, reference, cfg_.tau, i_max, cfg_.completion);

    PipelineResult r;
    r.estimate = trace.final;
    r.iterations = static_cast<int>(trace.iterations.size());
    r.exhausted = trace.exhausted;
    if (!trace.iterations.empty() && trace.iterations.front().parsed)
      r.first_estimate = *trace.iterations.front().parsed;
    return r;
  }

  std::string name() const override { return "llm-" + backend_.source_tag(); }
  bool thread_safe() const override { return backend_.is_deterministic(); }

 private:
  const Catalog& db_;
  Backend& backend_;
  LlmPipelineConfig cfg_;
};

// Builds one (features, target) pair exactly the way LlmPipeline composes
// prompts, so training and inference see the same featurization.
inline TrainExample make_train_example(const Catalog& db, const QueryAst& ast, uint64_t truth,
                                       size_t query_index, const LlmPipelineConfig& cfg,
                                       const FeatureSpec& spec = {}) {
  Estimate pg = estimate_independence(db, ast);
  Estimate smp =
      estimate_sampling(db, ast, cfg.sampling_rate, mix_seed(cfg.seed, query_index));
  std::vector<std::pair<std::string, double>> ests{{pg.source, pg.value},
                                                   {smp.source, smp.value}};
  return {featurize(ast, db, ests, {}, spec), tokenize_cardinality(truth)};
}

inline std::vector<TrainExample> make_train_set(const Catalog& db, const Workload& workload,
                                                const LlmPipelineConfig& cfg,
                                                Split split = Split::Train,
                                                const FeatureSpec& spec = {}) {
  std::vector<TrainExample> out;
  size_t index = 0;
  for (const auto& item : workload.items) {
    const QueryAst* q = item.query();
    if (!q) continue;
    size_t idx = index++;
    if (item.split != split || !item.ground_truth) continue;
    out.push_back(make_train_example(db, *q, *item.ground_truth, idx, cfg, spec));
  }
  return out;
}

// N bootstrap-trained digit models: per query each replica contributes a
// greedy point estimate plus a confidence interval from sampled decodes, the
// most confident replica wins, and its backend runs the self-correction loop.
class DigitEnsemblePipeline : public EstimatorPipeline {
 public:
  DigitEnsemblePipeline(const Catalog& db, std::vector<DigitModel> replicas,
                        LlmPipelineConfig cfg, FeatureSpec spec = {})
      : db_(db), cfg_(std::move(cfg)), spec_(spec) {
    validate_pipeline_config(cfg_);
    if (replicas.empty()) throw Error("ensemble pipeline needs at least one replica");
    for (auto& m : replicas) backends_.push_back(std::make_unique<DigitModelBackend>(db_, std::move(m), spec_));
  }

  PipelineResult estimate(const QueryAst& ast, size_t query_index) override {
    Estimate pg = estimate_independence(db_, ast);
    Estimate sampled =
        estimate_sampling(db_, ast, cfg_.sampling_rate, mix_seed(cfg_.seed, query_index));
    std::vector<Estimate> others{pg, sampled};
    Estimate reference = sampled.value >= 1.0 ? sampled : pg;
    reference.value = std::max(reference.value, 1.0);
    Prompt prompt = build_prompt(ast, db_, others, cfg_.prompt);

    std::vector<std::pair<std::string, double>> prompt_estimates;
    for (const auto& e : others) prompt_estimates.emplace_back(e.source, e.value);
    auto features = featurize(ast, db_, prompt_estimates, {}, spec_);

    std::vector<Estimate> replica_estimates;
    for (size_t r = 0; r < backends_.size(); ++r) {
      const DigitModel& model = backends_[r]->model();
      auto run = [&](uint64_t run_seed) -> double {
        DecodeResult d = decode(model, features, DecodeMode::sample(0.7, run_seed));
        if (d.overflow || !well_formed_tokens(d.tokens)) return reference.value;
        return static_cast<double>(detokenize(d.tokens));
      };
      ConfidenceInterval ci =
          confidence_interval(run, cfg_.ci_runs, mix_seed(cfg_.seed + r + 1, query_index));
      DecodeResult point = decode(model, features, DecodeMode::greedy());
      Estimate e;
      e.source = kSourceDigitModel;
      e.value = point.overflow || !well_formed_tokens(point.tokens)
                    ? reference.value
                    : static_cast<double>(detokenize(point.tokens));
      e.ci = {ci.low, ci.high};
      replica_estimates.push_back(std::move(e));
    }
    Selection sel = select_most_confident(replica_estimates);

    int i_max = cfg_.prompt.include_estimates ? cfg_.i_max : 0;
    CorrectionTrace trace = self_correct(*backends_[sel.index], prompt, reference, cfg_.tau,
                                         i_max, cfg_.completion);
    PipelineResult r;
    r.estimate = trace.final;
    r.iterations = static_cast<int>(trace.iterations.size());
    r.exhausted = trace.exhausted;
    if (!trace.iterations.empty() && trace.iterations.front().parsed)
      r.first_estimate = *trace.iterations.front().parsed;
    return r;
  }

  std::string name() const override {
    return "digit-ensemble-" + std::to_string(backends_.size());
  }

 private:
  const Catalog& db_;
  LlmPipelineConfig cfg_;
  FeatureSpec spec_;
  std::vector<std::unique_ptr<DigitModelBackend>> backends_;
};

// ---------------------------------------------------------------------------
// Benchmark runner

struct QueryTrace {
  std::string sql;
  double truth = 0;
  double estimate = 0;
  double qerr = 1;
  int iterations = 1;
  bool exhausted = false;
  double first_qerr = 1;  // before any self-correction
  double inference_ms = 0;
  std::string tag;
  Split split = Split::Test;
};

struct BenchResult {
  QErrorReport report;
  std::vector<QueryTrace> traces;
  double total_inference_ms = 0;
};

struct BenchOptions {
  std::optional<Split> split = Split::Test;
  std::vector<double> quantiles = default_quantiles();
  int threads = 1;
};

// Evaluates every selected query through the pipeline. Static workloads may
// fan out across threads; workloads containing writes replay sequentially so
// each query sees the database state at its position (the pipeline must have
// been built over `db`, which is mutated in place).
inline BenchResult run_benchmark(Catalog& db, const Workload& workload,
                                 EstimatorPipeline& pipeline, const BenchOptions& options = {}) {
  bool has_writes = false;
  for (const auto& item : workload.items) has_writes |= item.write() != nullptr;

  BenchResult result;
  auto evaluate = [&](const WorkloadItem& item, size_t index, QueryTrace& out) {
    const QueryAst& ast = *item.query();
    if (!item.ground_truth) throw Error("benchmark query lacks a ground truth");
    auto t0 = std::chrono::steady_clock::now();
    PipelineResult pr = pipeline.estimate(ast, index);
    auto t1 = std::chrono::steady_clock::now();
    out.sql = render_query(ast);
    out.truth = static_cast<double>(*item.ground_truth);
    out.estimate = pr.estimate.value;
    out.qerr = qerror(pr.estimate.value, out.truth);
    out.iterations = pr.iterations;
    out.exhausted = pr.exhausted;
    out.first_qerr = pr.first_estimate ? qerror(*pr.first_estimate, out.truth) : out.qerr;
    out.inference_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    out.tag = item.tag;
    out.split = item.split;
  };

  if (has_writes) {
    size_t index = 0;
    for (const auto& item : workload.items) {
      if (const WriteOp* op = item.write()) {
        apply_write(db, *op);
        continue;
      }
      if (options.split && item.split != *options.split) {
        ++index;
        continue;
      }
      QueryTrace trace;
      evaluate(item, index++, trace);
      result.traces.push_back(std::move(trace));
    }
  } else {
    // seed by the query's position among all workload queries, matching the
    // write-replay path and make_train_set
    std::vector<std::pair<const WorkloadItem*, size_t>> selected;
    size_t index = 0;
    for (const auto& item : workload.items) {
      if (!item.query()) continue;
      size_t idx = index++;
      if (!options.split || item.split == *options.split) selected.push_back({&item, idx});
    }
    result.traces.resize(selected.size());
    int threads = pipeline.thread_safe() ? options.threads : 1;
    parallel_for(selected.size(), threads, [&](size_t i) {
      evaluate(*selected[i].first, selected[i].second, result.traces[i]);
    });
  }

  if (result.traces.empty()) throw Error("no queries matched the benchmark selection");
  std::vector<double> errors;
  std::map<std::string, std::vector<double>> tagged;
  for (const auto& t : result.traces) {
    errors.push_back(t.qerr);
    result.total_inference_ms += t.inference_ms;
    if (!t.tag.empty()) tagged[t.tag].push_back(t.qerr);
  }
  result.report = percentile_report(std::move(errors), options.quantiles);
  result.report.estimator = pipeline.name();
  result.report.family = workload.family;
  for (auto& [tag, errs] : tagged)
    result.report.breakdown[tag] = percentile_report(std::move(errs), options.quantiles).quantiles;
  return result;
}

// ---------------------------------------------------------------------------
// Simulated end-to-end accounting: plans chosen under estimated sub-query
// cardinalities, costed under true ones, plus per-call inference latencies.

struct LatencyModel {
  double cheap_ms_per_call = 0.1;       // statistics-only estimators
  double expensive_ms_per_call = 1.0;   // digit model
  double execution_ms_per_cost_unit = 0.01;  // plan-cost proxy -> simulated time
};

struct E2EConfigReport {
  std::string name;
  double execution_cost = 0;  // plan-cost proxy, cost units
  double execution_ms = 0;
  double inference_ms = 0;
  double total_ms = 0;
  double routed_fraction = 0;
  size_t subquery_calls = 0;
};

struct E2EReport {
  std::vector<E2EConfigReport> configs;
  double threshold = 0;
  double threshold_percentile = 0;

  const E2EConfigReport& config(const std::string& name) const {
    for (const auto& c : configs)
      if (c.name == name) return c;
    throw Error("no e2e config named '" + name + "'");
  }
};

using SubqueryEstimator = std::function<double(const QueryAst&, size_t query_index)>;

// Compares all-cheap, all-expensive, and cost-routed configurations on the
// test split. The router's threshold sits at the given percentile of the
// cheap-estimator plan costs over all sub-queries of the workload.
inline E2EReport simulate_e2e(const Catalog& db, const Workload& workload,
                              const SubqueryEstimator& cheap, const SubqueryEstimator& expensive,
                              double threshold_percentile = 80.0, const LatencyModel& latency = {},
                              std::optional<Split> split = Split::Test) {
  struct QueryWork {
    const QueryAst* ast;
    size_t index;
    std::vector<QueryAst> subqueries;
    std::vector<double> cheap_estimates;
    std::vector<double> cheap_costs;
    std::vector<double> true_cards;
  };
  std::vector<QueryWork> work;
  size_t index = 0;
  for (const auto& item : workload.items) {
    const QueryAst* q = item.query();
    if (!q || (split && item.split != *split)) continue;
    if (q->distinct_on) continue;  // decomposition covers SPJ shapes only
    QueryWork qw;
    qw.ast = q;
    qw.index = index++;
    qw.subqueries = decompose_subqueries(*q);
    work.push_back(std::move(qw));
  }
  if (work.empty()) throw Error("no queries eligible for e2e simulation");

  // cheap estimates, routing costs, and truths per sub-query
  std::vector<double> all_costs;
  for (auto& qw : work) {
    for (const auto& sub : qw.subqueries) {
      double est = std::max(cheap(sub, qw.index), 1.0);
      qw.cheap_estimates.push_back(est);
      qw.true_cards.push_back(static_cast<double>(execute_count(db, sub)));
    }
    auto cheap_card = [&](const QueryAst& sub) -> double {
      for (size_t i = 0; i < qw.subqueries.size(); ++i)
        if (qw.subqueries[i] == sub) return qw.cheap_estimates[i];
      return std::max(cheap(sub, qw.index), 1.0);
    };
    for (const auto& sub : qw.subqueries) {
      qw.cheap_costs.push_back(plan_cost(sub, db, cheap_card));
      all_costs.push_back(qw.cheap_costs.back());
    }
  }
  std::sort(all_costs.begin(), all_costs.end());
  double threshold = nearest_rank_percentile(all_costs, threshold_percentile);

  E2EReport report;
  report.threshold = threshold;
  report.threshold_percentile = threshold_percentile;

  for (const char* config_name : {"all-cheap", "all-expensive", "routed"}) {
    std::string config = config_name;
    E2EConfigReport cr;
    cr.name = config;
    size_t expensive_calls = 0;
    for (auto& qw : work) {
      std::map<std::string, double> est_by_sql;
      for (size_t i = 0; i < qw.subqueries.size(); ++i) {
        ++cr.subquery_calls;
        bool exp;
        if (config == "all-cheap")
          exp = false;
        else if (config == "all-expensive")
          exp = true;
        else
          exp = route(qw.cheap_costs[i], threshold) == Route::Expensive;
        double est = qw.cheap_estimates[i];
        cr.inference_ms += latency.cheap_ms_per_call;  // routing/prompting needs the cheap call
        if (exp) {
          est = std::max(expensive(qw.subqueries[i], qw.index), 1.0);
          cr.inference_ms += latency.expensive_ms_per_call;
          ++expensive_calls;
        }
        est_by_sql[render_query(qw.subqueries[i])] = est;
      }
      auto est_card = [&](const QueryAst& sub) -> double {
        auto it = est_by_sql.find(render_query(sub));
        return it != est_by_sql.end() ? it->second : 1.0;
      };
      auto true_card = [&](const QueryAst& sub) -> double {
        for (size_t i = 0; i < qw.subqueries.size(); ++i)
          if (qw.subqueries[i] == sub) return qw.true_cards[i];
        return static_cast<double>(execute_count(db, sub));
      };
      auto order = choose_left_deep_order(*qw.ast, est_card);
      cr.execution_cost += plan_cost_for_order(*qw.ast, db, order, true_card);
    }
    cr.execution_ms = cr.execution_cost * latency.execution_ms_per_cost_unit;
    cr.total_ms = cr.execution_ms + cr.inference_ms;
    cr.routed_fraction =
        cr.subquery_calls ? static_cast<double>(expensive_calls) / cr.subquery_calls : 0.0;
    report.configs.push_back(std::move(cr));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report emission

inline std::string report_to_csv(const QErrorReport& rep) {
  std::ostringstream out;
  out << "estimator,family,tag,quantile,qerror,count\n";
  for (const auto& [q, v] : rep.quantiles)
    out << rep.estimator << "," << rep.family << ",all," << format_number(q) << ","
        << format_number(v) << "," << rep.count << "\n";
  for (const auto& [tag, quantiles] : rep.breakdown)
    for (const auto& [q, v] : quantiles)
      out << rep.estimator << "," << rep.family << "," << tag << "," << format_number(q) << ","
          << format_number(v) << "," << rep.count << "\n";
  return out.str();
}

inline nlohmann::json report_to_json(const QErrorReport& rep) {
  nlohmann::json j;
  j["estimator"] = rep.estimator;
  j["family"] = rep.family;
  j["count"] = rep.count;
  j["quantiles"] = nlohmann::json::object();
  for (const auto& [q, v] : rep.quantiles) j["quantiles"][format_number(q)] = v;
  for (const auto& [tag, quantiles] : rep.breakdown)
    for (const auto& [q, v] : quantiles) j["breakdown"][tag][format_number(q)] = v;
  return j;
}

inline std::string traces_to_jsonl(const std::vector<QueryTrace>& traces) {
  std::ostringstream out;
  for (const auto& t : traces) {
    nlohmann::json j{{"sql", t.sql},           {"truth", t.truth},
                     {"estimate", t.estimate}, {"qerror", t.qerr},
                     {"iterations", t.iterations}, {"exhausted", t.exhausted},
                     {"first_qerror", t.first_qerr}, {"inference_ms", t.inference_ms},
                     {"split", to_string(t.split)}};
    if (!t.tag.empty()) j["tag"] = t.tag;
    out << j.dump() << "\n";
  }
  return out.str();
}

inline std::string e2e_report_to_csv(const E2EReport& rep) {
  std::ostringstream out;
  out << "config,execution_cost,execution_ms,inference_ms,total_ms,routed_fraction,subquery_calls\n";
  for (const auto& c : rep.configs)
    out << c.name << "," << format_number(c.execution_cost) << "," << format_number(c.execution_ms)
        << "," << format_number(c.inference_ms) << "," << format_number(c.total_ms) << ","
        << format_number(c.routed_fraction) << "," << c.subquery_calls << "\n";
  return out.str();
}

// Per-figure plot data: E2E decomposition, self-correction iteration counts,
// and per-query q-error before/after correction.
inline std::string iterations_histogram_csv(const std::vector<QueryTrace>& traces) {
  std::map<int, size_t> hist;
  for (const auto& t : traces) ++hist[t.iterations];
  std::ostringstream out;
  out << "iterations,queries\n";
  for (const auto& [iters, count] : hist) out << iters << "," << count << "\n";
  return out.str();
}

inline std::string qerror_reduction_csv(const std::vector<QueryTrace>& traces) {
  std::ostringstream out;
  out << "qerror_before,qerror_after\n";
  for (const auto& t : traces)
    out << format_number(t.first_qerr) << "," << format_number(t.qerr) << "\n";
  return out.str();
}

}  // namespace cardbench
