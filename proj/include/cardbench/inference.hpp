#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cardbench/digit_model.hpp"
#include "cardbench/ensemble.hpp"
#include "cardbench/error.hpp"
#include "cardbench/estimators.hpp"
#include "cardbench/metrics.hpp"
#include "cardbench/parser.hpp"
#include "cardbench/prompt.hpp"

namespace cardbench {

// Accepts an optionally whitespace-padded decimal integer of at most 12
// digits. Anything else is a hallucination signal, not a crash.
inline std::optional<uint64_t> parse_estimate(const std::string& raw) {
  size_t b = 0, e = raw.size();
  while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
  if (b == e || e - b > kMaxDigits) return std::nullopt;
  uint64_t v = 0;
  for (size_t i = b; i < e; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(raw[i]))) return std::nullopt;
    v = v * 10 + static_cast<uint64_t>(raw[i] - '0');
  }
  return v;
}

struct CompletionOptions {
  bool sampled = false;
  double temperature = 0.7;
  uint64_t seed = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const std::string& prompt_text, const CompletionOptions& opts) = 0;
  virtual bool supports_seeded_sampling() const = 0;
  virtual bool is_deterministic() const = 0;
  virtual std::string source_tag() const = 0;
};

// ---------------------------------------------------------------------------
// Wire-side prompt reader: the fields a backend needs from the serialized
// prompt (the prompt JSON doubles as the featurization input record).

struct PromptFields {
  std::string query;
  std::vector<std::pair<std::string, double>> estimates;
  size_t feedback_turns = 0;
  double last_reference = 0;
};

inline PromptFields read_prompt_fields(const std::string& prompt_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(prompt_text);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad prompt payload: ") + e.what());
  }
  try {
    PromptFields f;
    const auto& input = j.at("input");
    f.query = input.at("query").get<std::string>();
    for (const auto& je : input.at("estimates"))
      f.estimates.emplace_back(je.at("source").get<std::string>(), je.at("value").get<double>());
    const auto& fb = input.at("feedback");
    f.feedback_turns = fb.size();
    if (!fb.empty()) f.last_reference = fb.back().at("reference").get<double>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad prompt payload: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Built-in backends

// Runs the trained digit model on features extracted from the prompt text.
class DigitModelBackend : public Backend {
 public:
  DigitModelBackend(const Catalog& catalog, DigitModel model, FeatureSpec spec = {})
      : catalog_(catalog), model_(std::move(model)), spec_(spec) {}

  std::string complete(const std::string& prompt_text, const CompletionOptions& opts) override {
    PromptFields f = read_prompt_fields(prompt_text);
    QueryAst ast = parse_query(f.query, catalog_);
    FeedbackSummary fb{f.last_reference, static_cast<int>(f.feedback_turns)};
    auto features = featurize(ast, catalog_, f.estimates, fb, spec_);
    DecodeMode mode = opts.sampled ? DecodeMode::sample(opts.temperature, opts.seed)
                                   : DecodeMode::greedy();
    DecodeResult r = decode(model_, features, mode);
    if (r.overflow) return "<overflow>";
    if (!well_formed_tokens(r.tokens)) return "<malformed>";
    return std::to_string(detokenize(r.tokens));
  }

  bool supports_seeded_sampling() const override { return true; }
  bool is_deterministic() const override { return true; }
  std::string source_tag() const override { return kSourceDigitModel; }

  const DigitModel& model() const { return model_; }

 private:
  const Catalog& catalog_;
  DigitModel model_;
  FeatureSpec spec_;
};

// Fully scriptable offline backend.
class MockBackend : public Backend {
 public:
  using Script = std::function<std::string(const std::string&, const CompletionOptions&)>;

  explicit MockBackend(Script script) : script_(std::move(script)) {}

  std::string complete(const std::string& prompt_text, const CompletionOptions& opts) override {
    return script_(prompt_text, opts);
  }
  bool supports_seeded_sampling() const override { return true; }
  bool is_deterministic() const override { return true; }
  std::string source_tag() const override { return kSourceMock; }

 private:
  Script script_;
};

// Mock profile used for the self-correction studies: answers with a supplied
// per-query base value, but corrupts a seeded fraction of first attempts with
// x`factor` blowups or non-numeric output. Feedback turns get the base value.
inline MockBackend::Script hallucinating_script(
    std::function<double(const std::string& query)> base_value, double extreme_rate,
    double nonnumeric_rate, uint64_t seed, double factor = 1000.0) {
  return [=](const std::string& prompt_text, const CompletionOptions&) -> std::string {
    PromptFields f = read_prompt_fields(prompt_text);
    double base = base_value(f.query);
    uint64_t clean = static_cast<uint64_t>(std::llround(std::max(base, 0.0)));
    if (f.feedback_turns > 0) return std::to_string(clean);
    double u = static_cast<double>(mix_seed(seed, hash_str(f.query)) >> 11) * 0x1.0p-53;
    if (u < extreme_rate) {
      double blown = std::min(std::max(base, 1.0) * factor, 999999999999.0);
      return std::to_string(static_cast<uint64_t>(std::llround(blown)));
    }
    if (u < extreme_rate + nonnumeric_rate) return "approximately many rows";
    return std::to_string(clean);
  };
}

// ---------------------------------------------------------------------------
// Self-correction (feedback loop against a reference estimate)

struct CorrectionTurn {
  std::string raw_output;
  std::optional<double> parsed;  // nullopt = non-numeric output
  double reference = 0;
  double ratio = 0;  // max(est/ref, ref/est); +inf when non-numeric
};

struct CorrectionTrace {
  std::vector<CorrectionTurn> iterations;  // <= i_max + 1
  Estimate final;
  bool exhausted = false;
};

// Transport failures surface with the turns completed so far attached.
class SelfCorrectTransportError : public TransportError {
 public:
  SelfCorrectTransportError(const TransportError& cause, CorrectionTrace partial)
      : TransportError(cause.kind(), cause.what()), partial_(std::move(partial)) {}
  const CorrectionTrace& partial_trace() const { return partial_; }

 private:
  CorrectionTrace partial_;
};

// Queries the backend up to i_max+1 times, appending a feedback turn whenever
// the output is non-numeric or deviates from the reference by more than tau.
// On a numeric but still-deviating final turn the model's answer is kept
// (exhausted=true); on a non-numeric final turn the reference is the fallback.
inline CorrectionTrace self_correct(Backend& backend, const Prompt& prompt,
                                    const Estimate& reference, double tau, int i_max,
                                    const CompletionOptions& opts = {}) {
  if (tau < 1.0) throw Error("self-correction threshold must be >= 1");
  if (i_max < 0) throw Error("i_max must be >= 0");
  if (reference.value < 1.0) throw Error("reference estimate must be >= 1");

  Prompt working = prompt;
  working.max_feedback = std::max(prompt.max_feedback, static_cast<size_t>(i_max));
  CorrectionTrace trace;
  for (int turn = 0; turn <= i_max; ++turn) {
    std::string raw;
    try {
      raw = backend.complete(serialize_prompt(working), opts);
    } catch (const TransportError& e) {
      throw SelfCorrectTransportError(e, std::move(trace));
    }
    CorrectionTurn rec;
    rec.raw_output = raw;
    rec.reference = reference.value;
    auto parsed = parse_estimate(raw);
    if (parsed.has_value()) {
      double v = std::max(static_cast<double>(*parsed), 1.0);
      rec.parsed = v;
      rec.ratio = std::max(v / reference.value, reference.value / v);
    } else {
      rec.ratio = std::numeric_limits<double>::infinity();
    }
    trace.iterations.push_back(rec);

    if (rec.parsed.has_value() && rec.ratio <= tau) {
      trace.final = Estimate{*rec.parsed, backend.source_tag(), std::nullopt, std::nullopt};
      trace.exhausted = false;
      return trace;
    }
    if (turn == i_max) break;
    working = append_feedback(working, raw, reference);
  }

  trace.exhausted = true;
  const CorrectionTurn& last = trace.iterations.back();
  if (last.parsed.has_value())
    trace.final = Estimate{*last.parsed, backend.source_tag(), std::nullopt, std::nullopt};
  else
    trace.final = Estimate{std::max(reference.value, 1.0), reference.source, std::nullopt,
                           std::nullopt};
  return trace;
}

// ---------------------------------------------------------------------------
// Threshold grid search (per reference-estimator source; callers group cases
// by the source of their reference estimates)

struct ValidationCase {
  Prompt prompt;
  Estimate reference;
  double truth = 0;
};

inline double grid_search_threshold(Backend& backend, const std::vector<ValidationCase>& cases,
                                    const std::vector<double>& candidates, int i_max = 5,
                                    const CompletionOptions& opts = {}) {
  if (candidates.empty()) throw Error("threshold grid is empty");
  if (cases.empty()) throw Error("grid search needs a validation set");
  double best_tau = 0;
  double best_median = std::numeric_limits<double>::infinity();
  bool first = true;
  for (double tau : candidates) {
    std::vector<double> errs;
    errs.reserve(cases.size());
    for (const auto& vc : cases) {
      CorrectionTrace t = self_correct(backend, vc.prompt, vc.reference, tau, i_max, opts);
      errs.push_back(qerror(t.final.value, vc.truth));
    }
    std::sort(errs.begin(), errs.end());
    double median = nearest_rank_percentile(errs, 50);
    if (first || median < best_median || (median == best_median && tau < best_tau)) {
      best_median = median;
      best_tau = tau;
      first = false;
    }
  }
  return best_tau;
}

inline const std::vector<double>& default_threshold_grid() {
  static const std::vector<double> grid{2, 5, 10, 50, 100};
  return grid;
}

}  // namespace cardbench
