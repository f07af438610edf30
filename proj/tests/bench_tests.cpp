#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "cardbench/bench.hpp"
#include "support.hpp"

using namespace cardbench;

TEST_CASE("qerror formula and clamping") {
  CHECK(qerror(16, 8) == 2.0);
  CHECK(qerror(8, 16) == 2.0);  // symmetric
  CHECK(qerror(123, 123) == 1.0);
  CHECK(qerror(0, 0) == 1.0);  // both clamped to 1
  CHECK(qerror(0, 5) == 5.0);
  CHECK(qerror(3, 7) == qerror(7, 3));
  // scale invariance away from the clamp
  CHECK(qerror(30, 70) == Catch::Approx(qerror(300, 700)));
}

TEST_CASE("percentile_report uses nearest-rank on the sorted list") {
  std::vector<double> errors;
  for (int i = 1; i <= 100; ++i) errors.push_back(i);
  QErrorReport rep = percentile_report(errors, {50, 90, 99});
  CHECK(rep.at(50) == 50.0);
  CHECK(rep.at(90) == 90.0);
  CHECK(rep.at(99) == 99.0);
  CHECK(rep.count == 100);

  QErrorReport single = percentile_report({7.5}, {50, 90, 99});
  CHECK(single.at(50) == 7.5);
  CHECK(single.at(99) == 7.5);

  // monotone in the quantile; permutation-invariant
  Rng rng(4);
  std::vector<double> random_errs;
  for (int i = 0; i < 500; ++i) random_errs.push_back(rng.uniform_real(1, 100));
  QErrorReport a = percentile_report(random_errs, default_quantiles());
  double prev = 0;
  for (const auto& [q, v] : a.quantiles) {
    CHECK(v >= prev);
    prev = v;
  }
  rng.shuffle(random_errs);
  QErrorReport b = percentile_report(random_errs, default_quantiles());
  CHECK(a.quantiles == b.quantiles);
}

TEST_CASE("percentile matches an independent oracle on random lists") {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    size_t n = 1 + rng.uniform_index(2000);
    std::vector<double> errs;
    for (size_t i = 0; i < n; ++i) errs.push_back(rng.uniform_real(1, 1e6));
    double q = rng.uniform_real(0.5, 100.0);
    std::vector<double> sorted = errs;
    std::sort(sorted.begin(), sorted.end());
    // oracle: the smallest element with at least ceil(q/100*n) values <= it
    size_t rank = static_cast<size_t>(std::ceil(q / 100.0 * n));
    rank = std::clamp<size_t>(rank, 1, n);
    double expected = sorted[rank - 1];
    CHECK(nearest_rank_percentile(sorted, q) == expected);
  }
}

TEST_CASE("run_benchmark with the oracle pipeline reports all-1.0 q-errors") {
  Catalog cat = testsupport::micro_db(91, 60);
  SpjOptions opt;
  Workload w = gen_spj(cat, 60, opt, 3);
  OraclePipeline pipeline(cat);
  BenchOptions bo;
  bo.split = std::nullopt;  // every query
  BenchResult r = run_benchmark(cat, w, pipeline, bo);
  for (const auto& [q, v] : r.report.quantiles) CHECK(v == 1.0);
  CHECK(r.report.count == 60);
  CHECK(r.report.estimator == "oracle");
}

TEST_CASE("run_benchmark is deterministic and thread-count independent") {
  Catalog cat = testsupport::micro_db(92, 60);
  SpjOptions opt;
  Workload w = gen_spj(cat, 80, opt, 5);
  SamplingPipeline pipeline(cat, 0.3, 99);
  BenchOptions seq;
  seq.split = std::nullopt;
  BenchOptions par = seq;
  par.threads = 4;
  BenchResult a = run_benchmark(cat, w, pipeline, seq);
  BenchResult b = run_benchmark(cat, w, pipeline, par);
  CHECK(a.report.quantiles == b.report.quantiles);
  REQUIRE(a.traces.size() == b.traces.size());
  for (size_t i = 0; i < a.traces.size(); ++i) CHECK(a.traces[i].estimate == b.traces[i].estimate);
}

TEST_CASE("run_benchmark splits and tags flow into the report") {
  Catalog cat = testsupport::micro_db(93, 60);
  Workload w = gen_like(cat, "t1", "name", 50, {}, 9);
  IndependencePipeline pipeline(cat);
  BenchOptions bo;
  bo.split = std::nullopt;
  BenchResult r = run_benchmark(cat, w, pipeline, bo);
  CHECK(r.report.count == 50);
  CHECK(r.report.breakdown.count("high-freq"));
  CHECK(r.report.breakdown.count("low-freq"));

  bo.split = Split::Test;
  size_t test_count = w.queries(Split::Test).size();
  if (test_count > 0) {
    BenchResult t = run_benchmark(cat, w, pipeline, bo);
    CHECK(t.report.count == test_count);
  }
}

TEST_CASE("run_benchmark replays writes sequentially for dynamic workloads") {
  Catalog cat = testsupport::micro_db(94, 90);
  SpjOptions opt;
  opt.max_joins = 1;
  Workload base = gen_spj(cat, 30, opt, 11);
  DynamicOptions dopt;
  dopt.writes = 100;
  DynamicWorkload dyn = gen_dynamic(cat, base, dopt, 13);

  Catalog working = dyn.initial;
  OraclePipeline pipeline(working);
  BenchOptions bo;
  bo.split = std::nullopt;
  BenchResult r = run_benchmark(working, dyn.workload, pipeline, bo);
  // the oracle sees the evolving state, so every q-error is exactly 1
  for (const auto& [q, v] : r.report.quantiles) CHECK(v == 1.0);

  // stale statistics: the independence estimator reads frozen stats while the
  // data evolves; the run completes and the report stays finite
  Catalog working2 = dyn.initial;
  IndependencePipeline stale(working2);
  BenchResult s = run_benchmark(working2, dyn.workload, stale, bo);
  CHECK(s.report.count == r.report.count);
  for (const auto& [q, v] : s.report.quantiles) CHECK(std::isfinite(v));
}

TEST_CASE("llm pipeline with a mock backend runs the full loop deterministically") {
  Catalog cat = testsupport::micro_db(95, 60);
  SpjOptions opt;
  Workload w = gen_spj(cat, 40, opt, 15);

  // map query text -> truth for the mock
  auto truths = std::make_shared<std::map<std::string, double>>();
  for (const auto& item : w.items)
    (*truths)[render_query(*item.query())] = static_cast<double>(*item.ground_truth);
  auto lookup = [truths](const std::string& sql) { return truths->at(sql); };
  MockBackend mock(hallucinating_script(lookup, 0.15, 0.05, 77));

  LlmPipelineConfig cfg;
  cfg.tau = 5.0;
  cfg.i_max = 5;
  LlmPipeline pipeline(cat, mock, cfg);
  BenchOptions bo;
  bo.split = std::nullopt;
  BenchResult a = run_benchmark(cat, w, pipeline, bo);
  BenchResult b = run_benchmark(cat, w, pipeline, bo);
  CHECK(a.report.quantiles == b.report.quantiles);  // same seed, same report
  // corrected runs recover the truth: median must be exactly 1 (mock truth)
  CHECK(a.report.at(50) == 1.0);
  // some queries needed more than one turn
  bool any_multi = false;
  for (const auto& t : a.traces) any_multi |= t.iterations > 1;
  CHECK(any_multi);
}

TEST_CASE("digit ensemble pipeline selects among replicas and stays deterministic") {
  Catalog cat = testsupport::micro_db(98, 60);
  SpjOptions opt;
  opt.max_joins = 1;
  Workload w = gen_spj(cat, 60, opt, 21);
  LlmPipelineConfig cfg;
  cfg.sampling_rate = 0.3;
  cfg.seed = 5;
  cfg.ci_runs = 6;
  cfg.i_max = 2;
  auto train_set = make_train_set(cat, w, cfg, Split::Train);
  REQUIRE(train_set.size() > 20);
  DigitModelHyper hyper;
  hyper.epochs = 8;
  hyper.hidden = 16;
  auto replicas = bootstrap_train(train_set, 2, 3,
                                  [&](const std::vector<TrainExample>& items, uint64_t seed) {
                                    DigitModelHyper h = hyper;
                                    h.seed = seed;
                                    return train_digit_model(items, h).model;
                                  });
  std::vector<DigitModel> models;
  for (auto& r : replicas) models.push_back(std::move(r.model));
  DigitEnsemblePipeline pipeline(cat, std::move(models), cfg);
  BenchOptions bo;
  bo.split = std::nullopt;
  BenchResult a = run_benchmark(cat, w, pipeline, bo);
  BenchResult b = run_benchmark(cat, w, pipeline, bo);
  CHECK(a.report.quantiles == b.report.quantiles);
  CHECK(a.report.count == 60);
  for (const auto& t : a.traces) CHECK(t.estimate >= 1.0);
}

TEST_CASE("pipeline misconfiguration surfaces before the first query") {
  Catalog cat = testsupport::micro_db(99, 30);
  MockBackend mock([](const std::string&, const CompletionOptions&) { return "1"; });
  LlmPipelineConfig bad_tau;
  bad_tau.tau = 0.5;
  CHECK_THROWS_AS(LlmPipeline(cat, mock, bad_tau), Error);
  LlmPipelineConfig bad_rate;
  bad_rate.sampling_rate = 0;
  CHECK_THROWS_AS(LlmPipeline(cat, mock, bad_rate), Error);
  LlmPipelineConfig bad_imax;
  bad_imax.i_max = -1;
  CHECK_THROWS_AS(LlmPipeline(cat, mock, bad_imax), Error);
  CHECK_THROWS_AS(DigitEnsemblePipeline(cat, {}, LlmPipelineConfig{}), Error);
}

TEST_CASE("dropping other-estimator info changes only the pipeline (paired run)") {
  Catalog cat = testsupport::micro_db(100, 70);
  SpjOptions opt;
  opt.max_joins = 1;
  Workload w = gen_spj(cat, 400, opt, 23);
  LlmPipelineConfig cfg;
  cfg.sampling_rate = 0.3;
  cfg.seed = 9;
  auto train_set = make_train_set(cat, w, cfg);
  DigitModelHyper hyper;
  hyper.epochs = 60;
  hyper.hidden = 32;
  hyper.seed = 12;
  TrainResult tr = train_digit_model(train_set, hyper);
  DigitModelBackend backend(cat, tr.model);

  LlmPipeline with(cat, backend, cfg);
  LlmPipelineConfig ablated_cfg = cfg;
  ablated_cfg.prompt.include_estimates = false;
  LlmPipeline without(cat, backend, ablated_cfg);

  BenchOptions bo;
  bo.split = std::nullopt;
  BenchResult a = run_benchmark(cat, w, with, bo);
  BenchResult b = run_benchmark(cat, w, without, bo);
  // the ablation disables self-correction entirely
  for (const auto& t : b.traces) CHECK(t.iterations == 1);
  // estimates-off blinds the model to its strongest features: per-query
  // estimates change and the direction is a regression (worse or equal median)
  size_t changed = 0;
  REQUIRE(a.traces.size() == b.traces.size());
  for (size_t i = 0; i < a.traces.size(); ++i) changed += a.traces[i].estimate != b.traces[i].estimate;
  CHECK(changed > 0);
  CHECK(b.report.at(50) >= a.report.at(50));
  // both configurations stay deterministic
  BenchResult b2 = run_benchmark(cat, w, without, bo);
  CHECK(b.report.quantiles == b2.report.quantiles);
}

TEST_CASE("simulate_e2e orders configurations sensibly") {
  Catalog cat = testsupport::micro_db(96, 70);
  SpjOptions opt;
  opt.max_joins = 2;
  opt.max_filters = 2;
  Workload w = gen_spj(cat, 40, opt, 17);

  SubqueryEstimator cheap = [&](const QueryAst& sub, size_t) {
    return estimate_independence(cat, sub).value;
  };
  SubqueryEstimator oracle_est = [&](const QueryAst& sub, size_t) {
    return static_cast<double>(execute_count(cat, sub));
  };
  E2EReport rep = simulate_e2e(cat, w, cheap, oracle_est, 80.0, {}, std::nullopt);
  const auto& all_cheap = rep.config("all-cheap");
  const auto& all_exp = rep.config("all-expensive");
  const auto& routed = rep.config("routed");

  CHECK(all_cheap.routed_fraction == 0.0);
  CHECK(all_exp.routed_fraction == 1.0);
  CHECK(routed.routed_fraction > 0.0);
  CHECK(routed.routed_fraction < 1.0);
  // inference time of the routed mixture sits strictly between the extremes
  CHECK(routed.inference_ms > all_cheap.inference_ms);
  CHECK(routed.inference_ms < all_exp.inference_ms);
  // an oracle-estimated plan never executes worse than an independence plan
  CHECK(all_exp.execution_cost <= all_cheap.execution_cost);
  // totals are additive
  CHECK(routed.total_ms == Catch::Approx(routed.execution_ms + routed.inference_ms));
}

TEST_CASE("report and trace emission formats") {
  Catalog cat = testsupport::micro_db(97, 50);
  SpjOptions opt;
  Workload w = gen_spj(cat, 20, opt, 19);
  IndependencePipeline pipeline(cat);
  BenchOptions bo;
  bo.split = std::nullopt;
  BenchResult r = run_benchmark(cat, w, pipeline, bo);

  std::string csv = report_to_csv(r.report);
  CHECK(csv.find("estimator,family,tag,quantile,qerror,count") == 0);
  CHECK(csv.find("pg-independence") != std::string::npos);

  nlohmann::json j = report_to_json(r.report);
  CHECK(j.at("estimator") == "pg-independence");
  CHECK(j.at("quantiles").contains("50"));

  std::string jsonl = traces_to_jsonl(r.traces);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 20);
  std::string hist = iterations_histogram_csv(r.traces);
  CHECK(hist.find("iterations,queries") == 0);
  std::string red = qerror_reduction_csv(r.traces);
  CHECK(red.find("qerror_before,qerror_after") == 0);
}
