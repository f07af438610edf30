#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "cardbench/ast.hpp"
#include "cardbench/catalog.hpp"
#include "cardbench/error.hpp"
#include "cardbench/estimators.hpp"
#include "cardbench/rng.hpp"

namespace cardbench {

// ---------------------------------------------------------------------------
// Digit tokens

inline constexpr int kStopToken = 10;
inline constexpr int kPadToken = 11;
inline constexpr int kVocabSize = 12;
inline constexpr int kMaxDigits = 12;

// Decimal digits most-significant first, then STOP. 0 -> [0, STOP].
inline std::vector<int> tokenize_cardinality(uint64_t c) {
  std::vector<int> digits;
  do {
    digits.push_back(static_cast<int>(c % 10));
    c /= 10;
  } while (c > 0);
  std::reverse(digits.begin(), digits.end());
  digits.push_back(kStopToken);
  return digits;
}

inline bool well_formed_tokens(const std::vector<int>& seq) {
  if (seq.size() < 2 || seq.size() > kMaxDigits + 1) return false;
  if (seq.back() != kStopToken) return false;
  for (size_t i = 0; i + 1 < seq.size(); ++i)
    if (seq[i] < 0 || seq[i] > 9) return false;
  return true;
}

// Inverse of tokenize on well-formed sequences; rejects PAD, missing or
// misplaced STOP, and more than 12 digits.
inline uint64_t detokenize(const std::vector<int>& seq) {
  if (!well_formed_tokens(seq)) throw DecodeError("malformed digit token sequence");
  uint64_t v = 0;
  for (size_t i = 0; i + 1 < seq.size(); ++i) v = v * 10 + static_cast<uint64_t>(seq[i]);
  return v;
}

// ---------------------------------------------------------------------------
// Featurization of prompts. The conditional model consumes a fixed-length
// numeric vector rather than text; entries beyond the slot counts are truncated.

struct FeatureSpec {
  int filter_slots = 8;
  int estimate_slots = 4;
  int table_slots = 6;
  int dim() const { return 3 + filter_slots + estimate_slots + table_slots + 4; }
  bool operator==(const FeatureSpec&) const = default;
};

struct FeedbackSummary {
  double last_reference = 0;  // 0 when no feedback yet
  int iteration = 0;
};

inline std::vector<double> featurize(const QueryAst& ast, const Catalog& cat,
                                     const std::vector<std::pair<std::string, double>>& estimates,
                                     const FeedbackSummary& feedback = {},
                                     const FeatureSpec& spec = {}) {
  static std::atomic<bool> warned{false};
  std::vector<double> f;
  f.reserve(spec.dim());
  f.push_back(static_cast<double>(ast.tables.size()));
  f.push_back(static_cast<double>(ast.joins.size()));
  f.push_back(static_cast<double>(ast.filters.size()));

  bool truncated = false;
  for (int i = 0; i < spec.filter_slots; ++i) {
    if (i < static_cast<int>(ast.filters.size())) {
      const auto& filt = ast.filters[i];
      f.push_back(independence_filter_selectivity(cat, ast.find_alias(filt.col.alias)->table, filt));
    } else {
      f.push_back(0.0);
    }
  }
  truncated |= static_cast<int>(ast.filters.size()) > spec.filter_slots;

  for (int i = 0; i < spec.estimate_slots; ++i)
    f.push_back(i < static_cast<int>(estimates.size()) ? std::log10(1.0 + estimates[i].second)
                                                       : 0.0);
  truncated |= static_cast<int>(estimates.size()) > spec.estimate_slots;

  for (int i = 0; i < spec.table_slots; ++i)
    f.push_back(i < static_cast<int>(ast.tables.size())
                    ? std::log10(1.0 + static_cast<double>(cat.stats_rows(ast.tables[i].table)))
                    : 0.0);
  truncated |= static_cast<int>(ast.tables.size()) > spec.table_slots;

  bool has_like = false;
  for (const auto& filt : ast.filters) has_like |= filt.op == CompareOp::Like;
  f.push_back(has_like ? 1.0 : 0.0);
  f.push_back(ast.distinct_on ? 1.0 : 0.0);
  f.push_back(std::log10(1.0 + std::max(feedback.last_reference, 0.0)));
  f.push_back(static_cast<double>(feedback.iteration));

  if (truncated && !warned.exchange(true))
    std::fprintf(stderr, "cardbench: feature slots exceeded, extra entries truncated\n");
  return f;
}

// ---------------------------------------------------------------------------
// Model: affine+tanh encoder over the feature vector feeding a recurrent
// digit predictor with a categorical output over the 12-token vocabulary.

struct DigitModelHyper {
  int epochs = 50;
  double lr = 1e-2;
  int hidden = 64;
  uint64_t seed = 0;
  int batch = 32;  // 0 = full batch
  double clip_norm = 5.0;
};

struct DigitModel {
  int hidden = 0;
  int feature_dim = 0;
  std::vector<double> w_f;  // hidden x feature_dim
  std::vector<double> b_f;  // hidden
  std::vector<double> w_e;  // hidden x vocab (previous-token embedding)
  std::vector<double> w_h;  // hidden x hidden
  std::vector<double> b_h;  // hidden
  std::vector<double> w_o;  // vocab x hidden
  std::vector<double> b_o;  // vocab

  bool operator==(const DigitModel&) const = default;

  std::vector<std::vector<double>*> param_blocks() {
    return {&w_f, &b_f, &w_e, &w_h, &b_h, &w_o, &b_o};
  }
  std::vector<const std::vector<double>*> param_blocks() const {
    return {&w_f, &b_f, &w_e, &w_h, &b_h, &w_o, &b_o};
  }
  size_t param_count() const {
    size_t n = 0;
    for (const auto* b : param_blocks()) n += b->size();
    return n;
  }
};

namespace digit_detail {

inline void softmax_inplace(std::vector<double>& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (double& v : logits) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

// exact per-step state for forward/backward
struct StepState {
  std::vector<double> state;   // tanh output, size H
  std::vector<double> probs;   // size V
  int prev_token = kPadToken;
};

struct ForwardPass {
  std::vector<double> encoded;  // size H
  std::vector<StepState> steps;
  double nll = 0;
};

inline ForwardPass forward(const DigitModel& m, const std::vector<double>& x,
                           const std::vector<int>& targets) {
  int H = m.hidden, V = kVocabSize;
  ForwardPass fp;
  fp.encoded.assign(H, 0.0);
  for (int i = 0; i < H; ++i) {
    double a = m.b_f[i];
    for (int j = 0; j < m.feature_dim; ++j) a += m.w_f[i * m.feature_dim + j] * x[j];
    fp.encoded[i] = std::tanh(a);
  }
  const std::vector<double>* prev_state = &fp.encoded;
  int prev_token = kPadToken;
  for (int target : targets) {
    StepState st;
    st.prev_token = prev_token;
    st.state.assign(H, 0.0);
    for (int i = 0; i < H; ++i) {
      double a = m.b_h[i] + m.w_e[i * V + prev_token];
      for (int j = 0; j < H; ++j) a += m.w_h[i * H + j] * (*prev_state)[j];
      st.state[i] = std::tanh(a);
    }
    st.probs.assign(V, 0.0);
    for (int k = 0; k < V; ++k) {
      double a = m.b_o[k];
      for (int j = 0; j < H; ++j) a += m.w_o[k * H + j] * st.state[j];
      st.probs[k] = a;
    }
    softmax_inplace(st.probs);
    fp.nll -= std::log(std::max(st.probs[target], 1e-300));
    fp.steps.push_back(std::move(st));
    prev_state = &fp.steps.back().state;
    prev_token = target;
  }
  return fp;
}

struct Gradients {
  std::vector<double> w_f, b_f, w_e, w_h, b_h, w_o, b_o;

  explicit Gradients(const DigitModel& m)
      : w_f(m.w_f.size(), 0.0),
        b_f(m.b_f.size(), 0.0),
        w_e(m.w_e.size(), 0.0),
        w_h(m.w_h.size(), 0.0),
        b_h(m.b_h.size(), 0.0),
        w_o(m.w_o.size(), 0.0),
        b_o(m.b_o.size(), 0.0) {}

  std::vector<std::vector<double>*> blocks() {
    return {&w_f, &b_f, &w_e, &w_h, &b_h, &w_o, &b_o};
  }
};

// Backpropagation through the recurrence (teacher forcing). Accumulates into g.
inline void backward(const DigitModel& m, const std::vector<double>& x,
                     const std::vector<int>& targets, const ForwardPass& fp, Gradients& g) {
  int H = m.hidden, V = kVocabSize;
  size_t L = targets.size();
  std::vector<double> d_state(H, 0.0);  // gradient flowing into step state
  for (size_t t = L; t-- > 0;) {
    const StepState& st = fp.steps[t];
    std::vector<double> d_logits(st.probs);
    d_logits[targets[t]] -= 1.0;
    for (int k = 0; k < V; ++k) {
      g.b_o[k] += d_logits[k];
      for (int j = 0; j < H; ++j) g.w_o[k * H + j] += d_logits[k] * st.state[j];
    }
    std::vector<double> ds(H, 0.0);
    for (int j = 0; j < H; ++j) {
      double v = d_state[j];
      for (int k = 0; k < V; ++k) v += m.w_o[k * H + j] * d_logits[k];
      ds[j] = v;
    }
    const std::vector<double>& prev = t == 0 ? fp.encoded : fp.steps[t - 1].state;
    std::vector<double> da(H);
    for (int i = 0; i < H; ++i) da[i] = ds[i] * (1.0 - st.state[i] * st.state[i]);
    for (int i = 0; i < H; ++i) {
      g.b_h[i] += da[i];
      g.w_e[i * V + st.prev_token] += da[i];
      for (int j = 0; j < H; ++j) g.w_h[i * H + j] += da[i] * prev[j];
    }
    std::fill(d_state.begin(), d_state.end(), 0.0);
    for (int j = 0; j < H; ++j) {
      double v = 0;
      for (int i = 0; i < H; ++i) v += m.w_h[i * H + j] * da[i];
      d_state[j] = v;
    }
  }
  // into the encoder
  for (int i = 0; i < H; ++i) {
    double da = d_state[i] * (1.0 - fp.encoded[i] * fp.encoded[i]);
    g.b_f[i] += da;
    for (int j = 0; j < m.feature_dim; ++j) g.w_f[i * m.feature_dim + j] += da * x[j];
  }
}

}  // namespace digit_detail

// Per-step categorical distributions under teacher forcing; the raw material
// for the independent loss oracle in tests.
inline std::vector<std::vector<double>> step_distributions(const DigitModel& m,
                                                           const std::vector<double>& features,
                                                           const std::vector<int>& targets) {
  auto fp = digit_detail::forward(m, features, targets);
  std::vector<std::vector<double>> out;
  out.reserve(fp.steps.size());
  for (auto& st : fp.steps) out.push_back(st.probs);
  return out;
}

// Negative log-likelihood of the target token sequence given the features,
// conditioning each step on the true prefix.
inline double nll(const DigitModel& m, const std::vector<double>& features,
                  const std::vector<int>& targets) {
  if (!well_formed_tokens(targets)) throw Error("nll target sequence is malformed");
  if (static_cast<int>(features.size()) != m.feature_dim)
    throw Error("feature vector length mismatch");
  return digit_detail::forward(m, features, targets).nll;
}

inline DigitModel init_digit_model(int feature_dim, int hidden, uint64_t seed) {
  DigitModel m;
  m.hidden = hidden;
  m.feature_dim = feature_dim;
  Rng rng(mix_seed(seed, 0x6d6f64656cull));
  auto init = [&](std::vector<double>& w, size_t n, double fan_in) {
    double r = 1.0 / std::sqrt(std::max(fan_in, 1.0));
    w.resize(n);
    for (double& v : w) v = rng.uniform_real(-r, r);
  };
  init(m.w_f, static_cast<size_t>(hidden) * feature_dim, feature_dim);
  init(m.b_f, hidden, feature_dim);
  init(m.w_e, static_cast<size_t>(hidden) * kVocabSize, kVocabSize);
  init(m.w_h, static_cast<size_t>(hidden) * hidden, hidden);
  init(m.b_h, hidden, hidden);
  init(m.w_o, static_cast<size_t>(kVocabSize) * hidden, hidden);
  init(m.b_o, kVocabSize, hidden);
  return m;
}

struct TrainExample {
  std::vector<double> features;
  std::vector<int> targets;
};

struct TrainResult {
  DigitModel model;
  std::vector<double> loss_trace;  // mean training nll after each epoch
};

// Plain minibatch gradient descent with global-norm clipping. Deterministic
// per seed: init, shuffles, and updates all derive from hyper.seed.
inline TrainResult train_digit_model(const std::vector<TrainExample>& dataset,
                                     const DigitModelHyper& hyper) {
  using namespace digit_detail;
  if (dataset.empty()) throw Error("training set is empty");
  for (const auto& ex : dataset)
    if (!well_formed_tokens(ex.targets)) throw Error("training target is malformed");
  int feature_dim = static_cast<int>(dataset[0].features.size());

  TrainResult result;
  result.model = init_digit_model(feature_dim, hyper.hidden, hyper.seed);
  DigitModel& m = result.model;

  Rng shuffle_rng(mix_seed(hyper.seed, 0x7368756666ull));
  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t batch = hyper.batch <= 0 ? dataset.size() : static_cast<size_t>(hyper.batch);

  auto mean_loss = [&] {
    double total = 0;
    for (const auto& ex : dataset) total += forward(m, ex.features, ex.targets).nll;
    return total / static_cast<double>(dataset.size());
  };

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += batch) {
      size_t end = std::min(order.size(), start + batch);
      Gradients g(m);
      for (size_t i = start; i < end; ++i) {
        const auto& ex = dataset[order[i]];
        auto fp = forward(m, ex.features, ex.targets);
        backward(m, ex.features, ex.targets, fp, g);
      }
      double scale = 1.0 / static_cast<double>(end - start);
      double norm_sq = 0;
      for (auto* blk : g.blocks())
        for (double v : *blk) norm_sq += (v * scale) * (v * scale);
      double norm = std::sqrt(norm_sq);
      double clip = hyper.clip_norm > 0 && norm > hyper.clip_norm ? hyper.clip_norm / norm : 1.0;
      auto params = m.param_blocks();
      auto grads = g.blocks();
      for (size_t b = 0; b < params.size(); ++b)
        for (size_t k = 0; k < params[b]->size(); ++k)
          (*params[b])[k] -= hyper.lr * clip * scale * (*grads[b])[k];
    }
    double loss = mean_loss();
    if (!std::isfinite(loss))
      throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                          " (lr=" + format_number(hyper.lr) + ")");
    // descent monitor: full-batch descent must be monotone; stochastic runs
    // may wobble but must not blow past their starting loss
    if (!result.loss_trace.empty()) {
      double prev = result.loss_trace.front();
      double last = result.loss_trace.back();
      if (hyper.batch <= 0 && loss > last + 1e-9)
        throw TrainingError("full-batch loss increased at epoch " + std::to_string(epoch) +
                            " (" + format_number(last) + " -> " + format_number(loss) +
                            "); lower the learning rate");
      if (loss > 1.5 * prev && loss > last)
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                            " (loss " + format_number(prev) + " -> " + format_number(loss) + ")");
    }
    result.loss_trace.push_back(loss);
  }
  return result;
}

// Compares analytic gradients with central finite differences on a random
// subset of parameters; returns the max deviation relative to the larger
// gradient magnitude (absolute below 1e-3).
inline double grad_check(DigitModel model, const TrainExample& example, double h = 1e-5,
                         int sample_params = 48, uint64_t seed = 1) {
  using namespace digit_detail;
  Gradients g(model);
  auto fp = forward(model, example.features, example.targets);
  backward(model, example.features, example.targets, fp, g);

  auto params = model.param_blocks();
  auto grads = g.blocks();
  size_t total = model.param_count();
  Rng rng(mix_seed(seed, 0x67726164ull));
  double worst = 0;
  for (int s = 0; s < sample_params; ++s) {
    size_t flat = rng.uniform_index(total);
    size_t b = 0;
    while (flat >= params[b]->size()) flat -= params[b++]->size();
    double saved = (*params[b])[flat];
    (*params[b])[flat] = saved + h;
    double up = forward(model, example.features, example.targets).nll;
    (*params[b])[flat] = saved - h;
    double down = forward(model, example.features, example.targets).nll;
    (*params[b])[flat] = saved;
    double numeric = (up - down) / (2 * h);
    double analytic = (*grads[b])[flat];
    double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-3});
    worst = std::max(worst, std::fabs(numeric - analytic) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Decoding

struct DecodeMode {
  bool sampled = false;
  double temperature = 0.0;
  uint64_t seed = 0;

  static DecodeMode greedy() { return {}; }
  static DecodeMode sample(double temperature, uint64_t seed) {
    return {true, temperature, seed};
  }
};

struct DecodeResult {
  std::vector<int> tokens;
  bool overflow = false;  // 12-digit cap hit without STOP
};

// Autoregressive generation until STOP or the 12-token cap. Greedy is
// deterministic; sampling is deterministic given the seed. Temperature 0
// degenerates to greedy.
inline DecodeResult decode(const DigitModel& m, const std::vector<double>& features,
                           const DecodeMode& mode = DecodeMode::greedy()) {
  int H = m.hidden, V = kVocabSize;
  if (static_cast<int>(features.size()) != m.feature_dim)
    throw Error("feature vector length mismatch");
  std::vector<double> state(H, 0.0);
  for (int i = 0; i < H; ++i) {
    double a = m.b_f[i];
    for (int j = 0; j < m.feature_dim; ++j) a += m.w_f[i * m.feature_dim + j] * features[j];
    state[i] = std::tanh(a);
  }
  Rng rng(mix_seed(mode.seed, 0x6465636full));
  DecodeResult out;
  int prev = kPadToken;
  // up to 12 digit tokens plus the terminating STOP
  for (int step = 0; step <= kMaxDigits; ++step) {
    std::vector<double> next(H);
    for (int i = 0; i < H; ++i) {
      double a = m.b_h[i] + m.w_e[i * V + prev];
      for (int j = 0; j < H; ++j) a += m.w_h[i * H + j] * state[j];
      next[i] = std::tanh(a);
    }
    state = std::move(next);
    std::vector<double> logits(V);
    for (int k = 0; k < V; ++k) {
      double a = m.b_o[k];
      for (int j = 0; j < H; ++j) a += m.w_o[k * H + j] * state[j];
      logits[k] = a;
    }
    int token;
    if (mode.sampled && mode.temperature > 0) {
      for (double& v : logits) v /= mode.temperature;
      digit_detail::softmax_inplace(logits);
      double u = rng.uniform01();
      double acc = 0;
      token = V - 1;
      for (int k = 0; k < V; ++k) {
        acc += logits[k];
        if (u < acc) {
          token = k;
          break;
        }
      }
    } else {
      token = static_cast<int>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    if (token == kStopToken) {
      out.tokens.push_back(token);
      return out;
    }
    if (step == kMaxDigits) break;  // 12 digits and still no STOP
    out.tokens.push_back(token);
    prev = token;
  }
  out.overflow = true;
  return out;
}

// ---------------------------------------------------------------------------
// Save / load (canonical JSON; doubles round-trip exactly)

inline nlohmann::json digit_model_to_json(const DigitModel& m) {
  nlohmann::json j;
  j["hidden"] = m.hidden;
  j["feature_dim"] = m.feature_dim;
  j["params"] = {{"w_f", m.w_f}, {"b_f", m.b_f}, {"w_e", m.w_e}, {"w_h", m.w_h},
                 {"b_h", m.b_h}, {"w_o", m.w_o}, {"b_o", m.b_o}};
  return j;
}

inline DigitModel digit_model_from_json(const nlohmann::json& j) {
  try {
    DigitModel m;
    m.hidden = j.at("hidden").get<int>();
    m.feature_dim = j.at("feature_dim").get<int>();
    const auto& p = j.at("params");
    m.w_f = p.at("w_f").get<std::vector<double>>();
    m.b_f = p.at("b_f").get<std::vector<double>>();
    m.w_e = p.at("w_e").get<std::vector<double>>();
    m.w_h = p.at("w_h").get<std::vector<double>>();
    m.b_h = p.at("b_h").get<std::vector<double>>();
    m.w_o = p.at("w_o").get<std::vector<double>>();
    m.b_o = p.at("b_o").get<std::vector<double>>();
    size_t H = m.hidden;
    if (m.w_f.size() != H * m.feature_dim || m.b_f.size() != H ||
        m.w_e.size() != H * kVocabSize || m.w_h.size() != H * H || m.b_h.size() != H ||
        m.w_o.size() != kVocabSize * H || m.b_o.size() != kVocabSize)
      throw DecodeError("digit model parameter shapes are inconsistent");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("corrupt digit model: ") + e.what());
  }
}

inline std::string save_digit_model(const DigitModel& m) {
  nlohmann::json j = digit_model_to_json(m);
  j["format"] = "cardbench-digit-model";
  j["version"] = 1;
  return j.dump();
}

inline DigitModel load_digit_model(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("corrupt digit model: ") + e.what());
  }
  if (j.value("format", "") != "cardbench-digit-model" || j.value("version", 0) != 1)
    throw DecodeError("not a digit model file");
  return digit_model_from_json(j);
}

}  // namespace cardbench
