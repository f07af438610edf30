// cardbench: command-line front end for the cardinality-estimation workbench.
//
// Subcommands: ingest, stats, gen, train, estimate, bench, e2e, plot-data.
// Every flag can come from an INI config file (--config / bench --pipeline);
// flags given on the command line win. Exit codes: 0 ok, 2 usage, 3 missing
// file, 4 bad input/format, 5 transport, 6 training.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cardbench/bench.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/csv.hpp"
#include "cardbench/digit_model.hpp"
#include "cardbench/ensemble.hpp"
#include "cardbench/error.hpp"
#include "cardbench/inference.hpp"
#include "cardbench/oracle.hpp"
#include "cardbench/parser.hpp"
#include "cardbench/plan.hpp"
#include "cardbench/prompt.hpp"
#include "cardbench/remote.hpp"
#include "cardbench/workloads.hpp"

namespace fs = std::filesystem;
using namespace cardbench;

namespace {

struct GlobalOptions {
  std::string workdir = ".";
  int threads = default_threads();

  std::string resolve(const std::string& path) const {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(workdir) / path).string();
  }
};

Catalog load_catalog(const GlobalOptions& g, const std::string& path) {
  return restore(read_file(g.resolve(path)));
}

Workload load_workload_file(const GlobalOptions& g, const std::string& path, const Catalog& cat) {
  return load_workload(read_file(g.resolve(path)), cat);
}

// ---------------------------------------------------------------------------
// Model bundles: one or more digit models plus the pipeline settings they
// were trained with.

struct ModelBundle {
  FeatureSpec spec;
  LlmPipelineConfig pipeline;
  std::vector<DigitModel> replicas;
};

std::string save_bundle(const ModelBundle& b) {
  nlohmann::json j;
  j["format"] = "cardbench-model-bundle";
  j["version"] = 1;
  j["feature_spec"] = {{"filter_slots", b.spec.filter_slots},
                       {"estimate_slots", b.spec.estimate_slots},
                       {"table_slots", b.spec.table_slots}};
  j["pipeline"] = {{"tau", b.pipeline.tau},
                   {"i_max", b.pipeline.i_max},
                   {"sampling_rate", b.pipeline.sampling_rate},
                   {"seed", b.pipeline.seed},
                   {"ci_runs", b.pipeline.ci_runs}};
  j["replicas"] = nlohmann::json::array();
  for (const auto& m : b.replicas) j["replicas"].push_back(digit_model_to_json(m));
  return j.dump();
}

ModelBundle load_bundle(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("corrupt model bundle: ") + e.what());
  }
  if (j.value("format", "") != "cardbench-model-bundle" || j.value("version", 0) != 1)
    throw DecodeError("not a model bundle file");
  ModelBundle b;
  const auto& spec = j.at("feature_spec");
  b.spec.filter_slots = spec.at("filter_slots").get<int>();
  b.spec.estimate_slots = spec.at("estimate_slots").get<int>();
  b.spec.table_slots = spec.at("table_slots").get<int>();
  const auto& p = j.at("pipeline");
  b.pipeline.tau = p.at("tau").get<double>();
  b.pipeline.i_max = p.at("i_max").get<int>();
  b.pipeline.sampling_rate = p.at("sampling_rate").get<double>();
  b.pipeline.seed = p.at("seed").get<uint64_t>();
  b.pipeline.ci_runs = p.at("ci_runs").get<int>();
  for (const auto& jm : j.at("replicas")) b.replicas.push_back(digit_model_from_json(jm));
  if (b.replicas.empty()) throw DecodeError("model bundle holds no replicas");
  return b;
}

// Offline plumbing backend: echoes the reference (last prompt estimate).
MockBackend echo_mock() {
  return MockBackend([](const std::string& prompt_text, const CompletionOptions&) {
    PromptFields f = read_prompt_fields(prompt_text);
    double v = f.estimates.empty() ? 1.0 : f.estimates.back().second;
    return std::to_string(static_cast<uint64_t>(std::llround(std::max(v, 1.0))));
  });
}

void write_meta(const std::string& out_path, const nlohmann::json& meta) {
  nlohmann::json j = meta;
  j["tool"] = "cardbench";
  write_file(out_path + ".meta.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Subcommand options

struct IngestOptions {
  std::string data_dir;
  std::string schema_file;
  std::string out = "catalog.json";
  int buckets = 10;
  int mcv = 5;
};

struct StatsOptions {
  std::string catalog;
  std::string out;
  int buckets = 10;
  int mcv = 5;
};

struct GenOptions {
  std::string family;
  std::string catalog;
  std::string out = "workload.jsonl";
  uint64_t seed = 0;
  int n = 1000;
  int max_joins = 2;
  int max_filters = 3;
  double train_frac = 0.8;
  double val_frac = 0.1;
  // like
  std::string table, column;
  // distinct / dynamic / shift-split
  std::string base;
  int writes = 200;
  std::string ratio = "2:1:1";
  std::string initial_out = "dynamic_initial.json";
  // shift-split
  std::string by = "joins";
  int lo = 3, hi = 3;
  std::string out_train = "train.jsonl", out_test = "test.jsonl";
};

struct TrainOptions {
  std::string catalog;
  std::string workload;
  std::string out = "model.json";
  int replicas = 1;
  uint64_t seed = 0;
  int epochs = 50;
  double lr = 1e-2;
  int hidden = 64;
  int batch = 32;
  double sampling_rate = 0.05;
  double tau = 5.0;
  int i_max = 5;
  int ci_runs = 32;
};

struct PipelineFlags {
  std::string backend = "pg";  // pg | sampling | model | remote | mock
  std::string model_path;
  double tau = 5.0;
  int i_max = 5;
  bool no_stats = false;
  bool no_estimates = false;
  bool fewshot = false;
  bool bootstrap_reference = false;
  int replicas = 8;
  int ci_runs = 32;
  double rate = 0.05;
  uint64_t seed = 17;
  // remote backend
  std::string remote_url;
  std::string remote_model = "default";
  double remote_timeout = 30.0;
  int remote_inflight = 4;
};

struct EstimateOptions {
  std::string catalog;
  std::string query;
  PipelineFlags pipe;
  bool show_trace = false;
};

struct BenchCmdOptions {
  std::string pipeline_file;
  std::string catalog;
  std::string workload;
  std::string initial;  // dynamic workloads: catalog snapshot to start from
  std::string report = "report.csv";
  std::string report_json;
  std::string traces;
  std::string split = "test";
  PipelineFlags pipe;
};

struct E2eOptions {
  std::string catalog;
  std::string workload;
  std::string model_path;
  std::string report = "e2e.csv";
  double percentile = 80.0;
  double cheap_ms = 0.1;
  double expensive_ms = 1.0;
  double cost_unit_ms = 0.01;
  std::string split = "test";
  double tau = 5.0;
  int i_max = 0;
  double rate = 0.05;
  uint64_t seed = 17;
};

struct PlotOptions {
  std::string traces;
  std::string e2e_json;
  std::string out_dir = "plots";
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& p) {
  cmd->add_option("--backend", p.backend, "oracle | pg | sampling | model | remote | mock")
      ->check(CLI::IsMember({"oracle", "pg", "sampling", "model", "remote", "mock"}));
  cmd->add_option("--model", p.model_path, "model bundle (backend=model)");
  cmd->add_option("--self-correct", p.tau, "self-correction threshold tau (>= 1)");
  cmd->add_option("--imax", p.i_max, "max self-correction iterations (0 = off)");
  cmd->add_flag("--no-stats", p.no_stats, "drop coarse statistics from prompts");
  cmd->add_flag("--no-estimates", p.no_estimates,
                "drop other-estimator estimates (disables self-correction)");
  cmd->add_flag("--fewshot", p.fewshot, "attach few-shot examples to prompts");
  cmd->add_flag("--bootstrap-reference", p.bootstrap_reference,
                "pick the prompt reference from bootstrap replicas");
  cmd->add_option("--replicas", p.replicas, "bootstrap replica count");
  cmd->add_option("--ci-runs", p.ci_runs, "runs per confidence interval");
  cmd->add_option("--rate", p.rate, "sampling estimator rate");
  cmd->add_option("--seed", p.seed, "pipeline seed");
  cmd->add_option("--remote-url", p.remote_url, "remote chat endpoint base URL");
  cmd->add_option("--remote-model", p.remote_model, "remote model name");
  cmd->add_option("--remote-timeout", p.remote_timeout, "remote timeout (s)");
  cmd->add_option("--remote-inflight", p.remote_inflight, "max in-flight remote calls");
}

// Applies an INI-style pipeline file (key=value lines mirroring the pipeline
// flags); flags given on the command line keep precedence.
void apply_pipeline_file(const CLI::App* cmd, const GlobalOptions& g, const std::string& path,
                         PipelineFlags& p) {
  std::istringstream in(read_file(g.resolve(path)));
  std::string line;
  size_t lineno = 0;
  auto unset = [&](const char* flag) { return cmd->count(flag) == 0; };
  while (std::getline(in, line)) {
    ++lineno;
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos || line[a] == '#' || line[a] == ';' || line[a] == '[') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DecodeError("bad pipeline file line " + std::to_string(lineno) + ": " + line);
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    bool truthy = value == "true" || value == "1" || value == "yes";
    if (key == "backend" && unset("--backend")) p.backend = value;
    else if (key == "model" && unset("--model")) p.model_path = value;
    else if (key == "self-correct" && unset("--self-correct")) p.tau = std::stod(value);
    else if (key == "imax" && unset("--imax")) p.i_max = std::stoi(value);
    else if (key == "no-stats" && unset("--no-stats")) p.no_stats = truthy;
    else if (key == "no-estimates" && unset("--no-estimates")) p.no_estimates = truthy;
    else if (key == "fewshot" && unset("--fewshot")) p.fewshot = truthy;
    else if (key == "bootstrap-reference" && unset("--bootstrap-reference")) p.bootstrap_reference = truthy;
    else if (key == "replicas" && unset("--replicas")) p.replicas = std::stoi(value);
    else if (key == "ci-runs" && unset("--ci-runs")) p.ci_runs = std::stoi(value);
    else if (key == "rate" && unset("--rate")) p.rate = std::stod(value);
    else if (key == "seed" && unset("--seed")) p.seed = std::stoull(value);
    else if (key == "remote-url" && unset("--remote-url")) p.remote_url = value;
    else if (key == "remote-model" && unset("--remote-model")) p.remote_model = value;
    else if (key == "remote-timeout" && unset("--remote-timeout")) p.remote_timeout = std::stod(value);
    else if (key == "remote-inflight" && unset("--remote-inflight")) p.remote_inflight = std::stoi(value);
    else if (cmd->get_option_no_throw("--" + key) == nullptr)
      throw DecodeError("unknown pipeline setting '" + key + "'");
  }
}

struct BuiltPipeline {
  std::unique_ptr<Backend> backend;
  std::unique_ptr<EstimatorPipeline> pipeline;
};

BuiltPipeline build_pipeline(const GlobalOptions& g, const Catalog& cat, const PipelineFlags& p,
                             const Workload* workload_for_mock) {
  BuiltPipeline out;
  LlmPipelineConfig cfg;
  cfg.tau = p.tau;
  cfg.i_max = p.i_max;
  cfg.sampling_rate = p.rate;
  cfg.seed = p.seed;
  cfg.bootstrap_reference = p.bootstrap_reference;
  cfg.replicas = p.replicas;
  cfg.ci_runs = p.ci_runs;
  cfg.prompt.include_stats = !p.no_stats;
  cfg.prompt.include_estimates = !p.no_estimates;

  if (p.backend == "oracle") {
    out.pipeline = std::make_unique<OraclePipeline>(cat);
    return out;
  }
  if (p.backend == "pg") {
    out.pipeline = std::make_unique<IndependencePipeline>(cat);
    return out;
  }
  if (p.backend == "sampling") {
    out.pipeline = std::make_unique<SamplingPipeline>(cat, p.rate, p.seed);
    return out;
  }
  if (p.backend == "mock") {
    if (workload_for_mock) {
      // deterministic offline stand-in: answers with the recorded truth
      auto truths = std::make_shared<std::map<std::string, double>>();
      for (const auto& item : workload_for_mock->items)
        if (item.query() && item.ground_truth)
          (*truths)[render_query(*item.query())] = static_cast<double>(*item.ground_truth);
      out.backend = std::make_unique<MockBackend>(MockBackend(
          [truths](const std::string& text, const CompletionOptions&) -> std::string {
            PromptFields f = read_prompt_fields(text);
            auto it = truths->find(f.query);
            if (it == truths->end()) return "unknown query";
            return std::to_string(static_cast<uint64_t>(it->second));
          }));
    } else {
      out.backend = std::make_unique<MockBackend>(echo_mock());
    }
  } else if (p.backend == "remote") {
    if (p.remote_url.empty()) throw Error("--remote-url is required for the remote backend");
    RemoteConfig rc;
    rc.base_url = p.remote_url;
    rc.model = p.remote_model;
    rc.timeout_seconds = p.remote_timeout;
    rc.max_in_flight = p.remote_inflight;
    out.backend = std::make_unique<RemoteBackend>(rc);
  } else {  // model
    if (p.model_path.empty()) throw Error("--model is required for the model backend");
    ModelBundle bundle = load_bundle(read_file(g.resolve(p.model_path)));
    cfg.sampling_rate = bundle.pipeline.sampling_rate;
    cfg.seed = bundle.pipeline.seed;
    if (bundle.replicas.size() > 1) {
      out.pipeline = std::make_unique<DigitEnsemblePipeline>(cat, std::move(bundle.replicas),
                                                             cfg, bundle.spec);
      return out;
    }
    out.backend =
        std::make_unique<DigitModelBackend>(cat, std::move(bundle.replicas[0]), bundle.spec);
  }
  out.pipeline = std::make_unique<LlmPipeline>(cat, *out.backend, cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_ingest(const GlobalOptions& g, const IngestOptions& o) {
  SchemaDecl decl = load_schema(g.resolve(o.schema_file));
  Catalog cat;
  for (const auto& t : decl.tables) {
    fs::path file = fs::path(g.resolve(o.data_dir)) / t.file;
    cat.add_table(ingest_table(file.string(), t.name, t.columns));
  }
  for (const auto& [lt, lc, rt, rc] : decl.joins) cat.add_join_edge(lt, lc, rt, rc);
  build_all_stats(cat, o.buckets, o.mcv);
  write_file(g.resolve(o.out), snapshot(cat));
  std::cout << "catalog written to " << o.out << " (" << cat.tables.size() << " tables)\n";
  return 0;
}

int cmd_stats(const GlobalOptions& g, const StatsOptions& o) {
  Catalog cat = load_catalog(g, o.catalog);
  build_all_stats(cat, o.buckets, o.mcv);
  std::string out = o.out.empty() ? o.catalog : o.out;
  write_file(g.resolve(out), snapshot(cat));
  std::cout << "statistics rebuilt with B=" << o.buckets << ", k=" << o.mcv << "\n";
  return 0;
}

int cmd_gen(const GlobalOptions& g, const GenOptions& o) {
  Catalog cat = load_catalog(g, o.catalog);
  if (o.family == "spj") {
    SpjOptions opt;
    opt.max_joins = o.max_joins;
    opt.max_filters = o.max_filters;
    opt.train_fraction = o.train_frac;
    opt.validation_fraction = o.val_frac;
    Workload w = gen_spj(cat, o.n, opt, o.seed);
    write_file(g.resolve(o.out), save_workload(w));
  } else if (o.family == "like") {
    if (o.table.empty() || o.column.empty()) throw Error("gen like needs --table and --column");
    LikeOptions opt;
    opt.train_fraction = o.train_frac;
    opt.validation_fraction = o.val_frac;
    Workload w = gen_like(cat, o.table, o.column, o.n, opt, o.seed);
    write_file(g.resolve(o.out), save_workload(w));
  } else if (o.family == "distinct") {
    if (o.base.empty()) throw Error("gen distinct needs --base");
    Workload base = load_workload_file(g, o.base, cat);
    Workload w = gen_distinct(cat, base, o.seed);
    write_file(g.resolve(o.out), save_workload(w));
  } else if (o.family == "dynamic") {
    if (o.base.empty()) throw Error("gen dynamic needs --base");
    Workload base = load_workload_file(g, o.base, cat);
    DynamicOptions opt;
    opt.writes = o.writes;
    if (std::sscanf(o.ratio.c_str(), "%d:%d:%d", &opt.insert_ratio, &opt.delete_ratio,
                    &opt.update_ratio) != 3)
      throw Error("--ratio must look like 2:1:1");
    DynamicWorkload dyn = gen_dynamic(cat, base, opt, o.seed);
    write_file(g.resolve(o.out), save_workload(dyn.workload));
    write_file(g.resolve(o.initial_out), snapshot(dyn.initial));
    std::cout << "initial snapshot written to " << o.initial_out << "\n";
  } else if (o.family == "shift-split") {
    if (o.base.empty()) throw Error("gen shift-split needs --base");
    Workload base = load_workload_file(g, o.base, cat);
    auto [train, test] = o.by == "filters" ? split_by_filters(base, o.lo, o.hi)
                                           : split_by_joins(base, o.lo, o.hi);
    write_file(g.resolve(o.out_train), save_workload(train));
    write_file(g.resolve(o.out_test), save_workload(test));
    std::cout << "train=" << train.items.size() << " test=" << test.items.size() << "\n";
    return 0;
  } else {
    throw Error("unknown family '" + o.family + "'");
  }
  std::cout << "workload written to " << o.out << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& g, const TrainOptions& o) {
  Catalog cat = load_catalog(g, o.catalog);
  Workload w = load_workload_file(g, o.workload, cat);

  ModelBundle bundle;
  bundle.pipeline.sampling_rate = o.sampling_rate;
  bundle.pipeline.seed = o.seed;
  bundle.pipeline.tau = o.tau;
  bundle.pipeline.i_max = o.i_max;
  bundle.pipeline.ci_runs = o.ci_runs;

  auto train_set = make_train_set(cat, w, bundle.pipeline, Split::Train, bundle.spec);
  if (train_set.empty()) throw Error("workload has no train-split queries");
  DigitModelHyper hyper;
  hyper.epochs = o.epochs;
  hyper.lr = o.lr;
  hyper.hidden = o.hidden;
  hyper.batch = o.batch;
  hyper.seed = o.seed;

  if (o.replicas <= 1) {
    TrainResult r = train_digit_model(train_set, hyper);
    std::cout << "trained on " << train_set.size() << " examples; loss " << r.loss_trace.front()
              << " -> " << r.loss_trace.back() << "\n";
    bundle.replicas.push_back(std::move(r.model));
  } else {
    auto replicas = bootstrap_train(
        train_set, o.replicas, o.seed,
        [&](const std::vector<TrainExample>& items, uint64_t seed) {
          DigitModelHyper h = hyper;
          h.seed = seed;
          return train_digit_model(items, h).model;
        },
        g.threads);
    for (auto& r : replicas) bundle.replicas.push_back(std::move(r.model));
    std::cout << "trained " << o.replicas << " bootstrap replicas on " << train_set.size()
              << " examples\n";
  }
  write_file(g.resolve(o.out), save_bundle(bundle));
  std::cout << "model bundle written to " << o.out << "\n";
  return 0;
}

int cmd_estimate(const GlobalOptions& g, const EstimateOptions& o) {
  Catalog cat = load_catalog(g, o.catalog);
  QueryAst ast = parse_query(o.query, cat);
  BuiltPipeline built = build_pipeline(g, cat, o.pipe, nullptr);
  PipelineResult r = built.pipeline->estimate(ast, 0);
  std::cout << static_cast<uint64_t>(std::llround(r.estimate.value)) << "\n";
  if (o.show_trace)
    std::cerr << "source=" << r.estimate.source << " iterations=" << r.iterations
              << " exhausted=" << (r.exhausted ? "yes" : "no") << "\n";
  return 0;
}

int cmd_bench(const GlobalOptions& g, const CLI::App* cmd, BenchCmdOptions& o) {
  if (!o.pipeline_file.empty()) apply_pipeline_file(cmd, g, o.pipeline_file, o.pipe);
  Catalog cat = o.initial.empty() ? load_catalog(g, o.catalog) : load_catalog(g, o.initial);
  Catalog full = load_catalog(g, o.catalog);
  Workload w = load_workload_file(g, o.workload, full);

  BuiltPipeline built = build_pipeline(g, cat, o.pipe, &w);
  BenchOptions bo;
  bo.threads = g.threads;
  if (o.split == "all")
    bo.split = std::nullopt;
  else
    bo.split = split_from_string(o.split);
  BenchResult r = run_benchmark(cat, w, *built.pipeline, bo);

  write_file(g.resolve(o.report), report_to_csv(r.report));
  if (!o.report_json.empty())
    write_file(g.resolve(o.report_json), report_to_json(r.report).dump(2) + "\n");
  if (!o.traces.empty()) write_file(g.resolve(o.traces), traces_to_jsonl(r.traces));
  write_meta(g.resolve(o.report), {{"command", "bench"},
                                   {"catalog", o.catalog},
                                   {"workload", o.workload},
                                   {"backend", o.pipe.backend},
                                   {"tau", o.pipe.tau},
                                   {"imax", o.pipe.i_max},
                                   {"seed", o.pipe.seed},
                                   {"split", o.split}});
  std::cout << report_to_csv(r.report);
  std::cout << "total inference ms: " << r.total_inference_ms << "\n";
  return 0;
}

int cmd_e2e(const GlobalOptions& g, const E2eOptions& o) {
  Catalog cat = load_catalog(g, o.catalog);
  Workload w = load_workload_file(g, o.workload, cat);

  SubqueryEstimator cheap = [&cat](const QueryAst& sub, size_t) {
    return estimate_independence(cat, sub).value;
  };
  std::unique_ptr<Backend> backend;
  std::unique_ptr<EstimatorPipeline> pipeline;
  if (!o.model_path.empty()) {
    ModelBundle bundle = load_bundle(read_file(g.resolve(o.model_path)));
    backend = std::make_unique<DigitModelBackend>(cat, std::move(bundle.replicas[0]), bundle.spec);
    LlmPipelineConfig cfg;
    cfg.tau = o.tau;
    cfg.i_max = o.i_max;
    cfg.sampling_rate = bundle.pipeline.sampling_rate;
    cfg.seed = bundle.pipeline.seed;
    pipeline = std::make_unique<LlmPipeline>(cat, *backend, cfg);
  } else {
    pipeline = std::make_unique<SamplingPipeline>(cat, o.rate, o.seed);
  }
  SubqueryEstimator expensive = [&pipeline](const QueryAst& sub, size_t idx) {
    return pipeline->estimate(sub, idx).estimate.value;
  };

  LatencyModel latency;
  latency.cheap_ms_per_call = o.cheap_ms;
  latency.expensive_ms_per_call = o.expensive_ms;
  latency.execution_ms_per_cost_unit = o.cost_unit_ms;
  std::optional<Split> split =
      o.split == "all" ? std::nullopt : std::optional<Split>(split_from_string(o.split));
  E2EReport rep = simulate_e2e(cat, w, cheap, expensive, o.percentile, latency, split);

  write_file(g.resolve(o.report), e2e_report_to_csv(rep));
  nlohmann::json j{{"threshold", rep.threshold},
                   {"threshold_percentile", rep.threshold_percentile}};
  for (const auto& c : rep.configs)
    j["configs"][c.name] = {{"execution_cost", c.execution_cost},
                            {"execution_ms", c.execution_ms},
                            {"inference_ms", c.inference_ms},
                            {"total_ms", c.total_ms},
                            {"routed_fraction", c.routed_fraction}};
  write_file(g.resolve(o.report) + ".json", j.dump(2) + "\n");
  write_meta(g.resolve(o.report), {{"command", "e2e"},
                                   {"catalog", o.catalog},
                                   {"workload", o.workload},
                                   {"percentile", o.percentile},
                                   {"seed", o.seed}});
  std::cout << e2e_report_to_csv(rep);
  return 0;
}

int cmd_plot_data(const GlobalOptions& g, const PlotOptions& o) {
  fs::create_directories(g.resolve(o.out_dir));
  if (!o.traces.empty()) {
    std::vector<QueryTrace> traces;
    std::istringstream in(read_file(g.resolve(o.traces)));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      QueryTrace t;
      t.qerr = j.at("qerror").get<double>();
      t.first_qerr = j.value("first_qerror", t.qerr);
      t.iterations = j.value("iterations", 1);
      traces.push_back(std::move(t));
    }
    write_file((fs::path(g.resolve(o.out_dir)) / "fig_iterations.csv").string(),
               iterations_histogram_csv(traces));
    write_file((fs::path(g.resolve(o.out_dir)) / "fig_qerror_reduction.csv").string(),
               qerror_reduction_csv(traces));
  }
  if (!o.e2e_json.empty()) {
    nlohmann::json j = nlohmann::json::parse(read_file(g.resolve(o.e2e_json)));
    std::ostringstream csv;
    csv << "config,execution_ms,inference_ms,total_ms,routed_fraction\n";
    for (auto it = j.at("configs").begin(); it != j.at("configs").end(); ++it)
      csv << it.key() << "," << format_number(it.value().at("execution_ms").get<double>()) << ","
          << format_number(it.value().at("inference_ms").get<double>()) << ","
          << format_number(it.value().at("total_ms").get<double>()) << ","
          << format_number(it.value().at("routed_fraction").get<double>()) << "\n";
    write_file((fs::path(g.resolve(o.out_dir)) / "fig_e2e.csv").string(), csv.str());
  }
  std::cout << "plot data written to " << o.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cardinality-estimation workbench"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file with any of the flags below");

  GlobalOptions g;
  app.add_option("--workdir", g.workdir, "base directory for relative paths");
  app.add_option("--threads", g.threads, "parallelism for static benchmarks");

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "build a catalog snapshot from CSV files");
  c_ingest->add_option("data_dir", ingest.data_dir)->required();
  c_ingest->add_option("schema_file", ingest.schema_file)->required();
  c_ingest->add_option("--out", ingest.out);
  c_ingest->add_option("--buckets", ingest.buckets);
  c_ingest->add_option("--mcv", ingest.mcv);

  StatsOptions stats;
  auto* c_stats = app.add_subcommand("stats", "rebuild column statistics");
  c_stats->add_option("--catalog", stats.catalog)->required();
  c_stats->add_option("--out", stats.out);
  c_stats->add_option("--buckets", stats.buckets);
  c_stats->add_option("--mcv", stats.mcv);

  GenOptions gen;
  auto* c_gen = app.add_subcommand("gen", "generate workloads");
  c_gen->add_option("family", gen.family, "spj | like | distinct | dynamic | shift-split")
      ->required();
  c_gen->add_option("--catalog", gen.catalog)->required();
  c_gen->add_option("--out", gen.out);
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--n", gen.n);
  c_gen->add_option("--max-joins", gen.max_joins);
  c_gen->add_option("--max-filters", gen.max_filters);
  c_gen->add_option("--train-frac", gen.train_frac);
  c_gen->add_option("--val-frac", gen.val_frac);
  c_gen->add_option("--table", gen.table);
  c_gen->add_option("--column", gen.column);
  c_gen->add_option("--base", gen.base);
  c_gen->add_option("--writes", gen.writes);
  c_gen->add_option("--ratio", gen.ratio);
  c_gen->add_option("--initial-out", gen.initial_out);
  c_gen->add_option("--by", gen.by)->check(CLI::IsMember({"joins", "filters"}));
  c_gen->add_option("--lo", gen.lo);
  c_gen->add_option("--hi", gen.hi);
  c_gen->add_option("--out-train", gen.out_train);
  c_gen->add_option("--out-test", gen.out_test);

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "train the digit model (optionally N replicas)");
  c_train->add_option("--catalog", train.catalog)->required();
  c_train->add_option("--workload", train.workload)->required();
  c_train->add_option("--out", train.out);
  c_train->add_option("--replicas", train.replicas);
  c_train->add_option("--seed", train.seed);
  c_train->add_option("--epochs", train.epochs);
  c_train->add_option("--lr", train.lr);
  c_train->add_option("--hidden", train.hidden);
  c_train->add_option("--batch", train.batch);
  c_train->add_option("--rate", train.sampling_rate);
  c_train->add_option("--tau", train.tau);
  c_train->add_option("--imax", train.i_max);
  c_train->add_option("--ci-runs", train.ci_runs);

  EstimateOptions est;
  auto* c_est = app.add_subcommand("estimate", "estimate one query's cardinality");
  c_est->add_option("--catalog", est.catalog)->required();
  c_est->add_option("--query", est.query)->required();
  c_est->add_flag("--trace", est.show_trace, "print pipeline details to stderr");
  add_pipeline_flags(c_est, est.pipe);

  BenchCmdOptions bench;
  auto* c_bench = app.add_subcommand("bench", "q-error benchmark over a workload");
  c_bench->add_option("--pipeline", bench.pipeline_file,
                      "INI file holding the pipeline flags (flags override it)");
  c_bench->add_option("--catalog", bench.catalog)->required();
  c_bench->add_option("--workload", bench.workload)->required();
  c_bench->add_option("--initial", bench.initial,
                      "starting snapshot for dynamic workloads (from gen dynamic)");
  c_bench->add_option("--report", bench.report);
  c_bench->add_option("--report-json", bench.report_json);
  c_bench->add_option("--traces", bench.traces);
  c_bench->add_option("--split", bench.split)->check(CLI::IsMember({"train", "validation", "test", "all"}));
  add_pipeline_flags(c_bench, bench.pipe);

  E2eOptions e2e;
  auto* c_e2e = app.add_subcommand("e2e", "simulated end-to-end accounting");
  c_e2e->add_option("--catalog", e2e.catalog)->required();
  c_e2e->add_option("--workload", e2e.workload)->required();
  c_e2e->add_option("--model", e2e.model_path);
  c_e2e->add_option("--report", e2e.report);
  c_e2e->add_option("--route-threshold-percentile", e2e.percentile);
  c_e2e->add_option("--cheap-ms", e2e.cheap_ms);
  c_e2e->add_option("--expensive-ms", e2e.expensive_ms);
  c_e2e->add_option("--cost-unit-ms", e2e.cost_unit_ms);
  c_e2e->add_option("--split", e2e.split);
  c_e2e->add_option("--tau", e2e.tau);
  c_e2e->add_option("--imax", e2e.i_max);
  c_e2e->add_option("--rate", e2e.rate);
  c_e2e->add_option("--seed", e2e.seed);

  PlotOptions plot;
  auto* c_plot = app.add_subcommand("plot-data", "emit per-figure CSVs from traces/reports");
  c_plot->add_option("--traces", plot.traces);
  c_plot->add_option("--e2e", plot.e2e_json);
  c_plot->add_option("--out", plot.out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_ingest) return cmd_ingest(g, ingest);
    if (*c_stats) return cmd_stats(g, stats);
    if (*c_gen) return cmd_gen(g, gen);
    if (*c_train) return cmd_train(g, train);
    if (*c_est) return cmd_estimate(g, est);
    if (*c_bench) return cmd_bench(g, c_bench, bench);
    if (*c_e2e) return cmd_e2e(g, e2e);
    if (*c_plot) return cmd_plot_data(g, plot);
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return 5;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 6;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 4;
  } catch (const DecodeError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 4;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    // missing-file errors surface here with a distinct code
    return std::string(e.what()).find("cannot open file") != std::string::npos ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
