#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cardbench/digit_model.hpp"
#include "cardbench/parser.hpp"
#include "support.hpp"

using namespace cardbench;

namespace {

std::vector<double> random_features(int dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f(dim);
  for (double& v : f) v = rng.uniform_real(-2, 2);
  return f;
}

// All-zero output layer means uniform distributions everywhere.
DigitModel uniform_model(int feature_dim, int hidden, uint64_t seed) {
  DigitModel m = init_digit_model(feature_dim, hidden, seed);
  std::fill(m.w_o.begin(), m.w_o.end(), 0.0);
  std::fill(m.b_o.begin(), m.b_o.end(), 0.0);
  return m;
}

// Transition-table model that emits 2, then 1, then STOP with probability
// ~1: the hidden state is (almost) the one-hot pattern of the previous token
// and the output layer rewards exactly the wanted successor.
DigitModel near_deterministic_21_model() {
  DigitModel m;
  m.hidden = kVocabSize;
  m.feature_dim = 4;
  m.w_f.assign(static_cast<size_t>(m.hidden) * m.feature_dim, 0.0);
  m.b_f.assign(m.hidden, 0.0);
  m.w_e.assign(static_cast<size_t>(m.hidden) * kVocabSize, 0.0);
  for (int i = 0; i < kVocabSize; ++i) m.w_e[i * kVocabSize + i] = 40.0;
  m.w_h.assign(static_cast<size_t>(m.hidden) * m.hidden, 0.0);
  m.b_h.assign(m.hidden, 0.0);
  m.w_o.assign(static_cast<size_t>(kVocabSize) * m.hidden, 0.0);
  m.b_o.assign(kVocabSize, 0.0);
  auto reward = [&](int prev, int next) { m.w_o[next * m.hidden + prev] = 40.0; };
  reward(kPadToken, 2);
  reward(2, 1);
  reward(1, kStopToken);
  return m;
}

}  // namespace

TEST_CASE("tokenize: digits most-significant first, then STOP") {
  CHECK(tokenize_cardinality(21) == std::vector<int>{2, 1, kStopToken});
  CHECK(tokenize_cardinality(0) == std::vector<int>{0, kStopToken});
  CHECK(tokenize_cardinality(16) == std::vector<int>{1, 6, kStopToken});
  CHECK(tokenize_cardinality(999999999999ull).size() == 13);  // 12 digits + STOP
}

TEST_CASE("detokenize inverts tokenize and rejects malformed input") {
  CHECK(detokenize({1, 6, kStopToken}) == 16);
  CHECK_THROWS_AS(detokenize({kStopToken}), DecodeError);
  CHECK_THROWS_AS(detokenize({1, kPadToken, kStopToken}), DecodeError);
  CHECK_THROWS_AS(detokenize({1, 2, 3}), DecodeError);  // missing STOP
  CHECK_THROWS_AS(detokenize({1, kStopToken, 2, kStopToken}), DecodeError);
  CHECK_THROWS_AS(detokenize(std::vector<int>(14, 1)), DecodeError);  // too long

  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    uint64_t v = static_cast<uint64_t>(rng.uniform_int(0, 1000000));
    CHECK(detokenize(tokenize_cardinality(v)) == v);
  }
  CHECK(detokenize(tokenize_cardinality(999999999999ull)) == 999999999999ull);
}

TEST_CASE("uniform model: nll is L * ln(12)") {
  DigitModel m = uniform_model(6, 16, 1);
  auto x = random_features(6, 2);
  auto target = tokenize_cardinality(4096);  // length 5 incl STOP
  CHECK(nll(m, x, target) == Catch::Approx(5.0 * std::log(12.0)).epsilon(1e-12));
  CHECK(nll(m, x, tokenize_cardinality(7)) == Catch::Approx(2.0 * std::log(12.0)).epsilon(1e-12));
}

TEST_CASE("near-probability-1 model has ~zero loss on its own greedy output") {
  DigitModel m = near_deterministic_21_model();
  std::vector<double> x(4, 0.3);
  DecodeResult greedy = decode(m, x);
  CHECK(greedy.tokens == std::vector<int>{2, 1, kStopToken});
  CHECK(nll(m, x, greedy.tokens) < 1e-10);
}

TEST_CASE("per-step distributions are valid probability distributions") {
  DigitModel m = init_digit_model(8, 24, 5);
  auto x = random_features(8, 6);
  auto dists = step_distributions(m, x, tokenize_cardinality(31415));
  REQUIRE(dists.size() == 6);
  for (const auto& d : dists) {
    double sum = 0;
    for (double p : d) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("nll matches an independent log-sum oracle to 1e-10") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    int dim = 3 + static_cast<int>(rng.uniform_index(8));
    int hidden = 4 + static_cast<int>(rng.uniform_index(24));
    DigitModel m = init_digit_model(dim, hidden, rng.next_u64());
    auto x = random_features(dim, rng.next_u64());
    auto target = tokenize_cardinality(static_cast<uint64_t>(rng.uniform_int(0, 99999999)));
    // oracle: recompute -sum(log p) from the raw step distributions in long double
    auto dists = step_distributions(m, x, target);
    long double expected = 0;
    for (size_t t = 0; t < target.size(); ++t) expected -= std::log(static_cast<long double>(dists[t][target[t]]));
    CHECK(std::fabs(nll(m, x, target) - static_cast<double>(expected)) < 1e-10);
  }
}

TEST_CASE("nll rejects malformed targets") {
  DigitModel m = init_digit_model(4, 8, 0);
  std::vector<double> x(4, 0.0);
  CHECK_THROWS_AS(nll(m, x, {1, 2, 3}), Error);
  CHECK_THROWS_AS(nll(m, x, {kStopToken}), Error);
}

TEST_CASE("training memorizes a single repeated example") {
  std::vector<TrainExample> data(16, {{0.5, -1.0, 2.0}, tokenize_cardinality(21)});
  DigitModelHyper hyper;
  hyper.epochs = 200;
  hyper.hidden = 16;
  hyper.lr = 0.15;
  hyper.seed = 3;
  TrainResult r = train_digit_model(data, hyper);
  CHECK(r.loss_trace.back() < 0.01);
  DecodeResult d = decode(r.model, data[0].features);
  CHECK(d.tokens == std::vector<int>{2, 1, kStopToken});
}

TEST_CASE("training is deterministic per seed") {
  Rng rng(9);
  std::vector<TrainExample> data;
  for (int i = 0; i < 40; ++i)
    data.push_back({random_features(5, rng.next_u64()),
                    tokenize_cardinality(static_cast<uint64_t>(rng.uniform_int(0, 500)))});
  DigitModelHyper hyper;
  hyper.epochs = 5;
  hyper.hidden = 12;
  hyper.seed = 42;
  TrainResult a = train_digit_model(data, hyper);
  TrainResult b = train_digit_model(data, hyper);
  CHECK(a.loss_trace == b.loss_trace);  // bit-identical
  CHECK(a.model == b.model);
  hyper.seed = 43;
  TrainResult c = train_digit_model(data, hyper);
  CHECK(a.loss_trace != c.loss_trace);
}

TEST_CASE("full-batch descent with small lr is non-increasing") {
  Rng rng(10);
  std::vector<TrainExample> data;
  for (int i = 0; i < 30; ++i)
    data.push_back({random_features(4, rng.next_u64()),
                    tokenize_cardinality(static_cast<uint64_t>(rng.uniform_int(1, 999)))});
  DigitModelHyper hyper;
  hyper.epochs = 40;
  hyper.hidden = 10;
  hyper.lr = 1e-3;
  hyper.batch = 0;  // full batch
  hyper.seed = 4;
  TrainResult r = train_digit_model(data, hyper);
  for (size_t e = 1; e < r.loss_trace.size(); ++e)
    CHECK(r.loss_trace[e] <= r.loss_trace[e - 1] + 1e-12);
}

TEST_CASE("training rejects an empty dataset") {
  CHECK_THROWS_AS(train_digit_model({}, DigitModelHyper{}), Error);
}

TEST_CASE("full-batch descent violations abort the run") {
  Rng rng(14);
  std::vector<TrainExample> data;
  for (int i = 0; i < 24; ++i)
    data.push_back({random_features(4, rng.next_u64()),
                    tokenize_cardinality(static_cast<uint64_t>(rng.uniform_int(1, 99999)))});
  DigitModelHyper hyper;
  hyper.epochs = 200;
  hyper.hidden = 12;
  hyper.lr = 8.0;  // far past stable for full-batch descent
  hyper.batch = 0;
  hyper.clip_norm = 0;  // no clipping: let the step overshoot
  hyper.seed = 4;
  CHECK_THROWS_AS(train_digit_model(data, hyper), TrainingError);
}

TEST_CASE("the token cap matches the tokenizer's widest output") {
  auto t = tokenize_cardinality(999999999999ull);
  CHECK(t.size() == kMaxDigits + 1);  // 12 digits + STOP
  CHECK(well_formed_tokens(t));
  CHECK(detokenize(t) == 999999999999ull);
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(11);
  for (int restart = 0; restart < 10; ++restart) {
    int dim = 3 + static_cast<int>(rng.uniform_index(6));
    DigitModel m = init_digit_model(dim, 12, rng.next_u64());
    TrainExample ex{random_features(dim, rng.next_u64()),
                    tokenize_cardinality(static_cast<uint64_t>(rng.uniform_int(0, 99999)))};
    double dev = grad_check(m, ex, 1e-5, 48, rng.next_u64());
    CHECK(dev < 1e-4);
  }
}

TEST_CASE("grad_check deviation grows with the step size") {
  DigitModel m = init_digit_model(5, 12, 21);
  TrainExample ex{random_features(5, 22), tokenize_cardinality(777)};
  double fine = grad_check(m, ex, 1e-5, 64, 1);
  double coarse = grad_check(m, ex, 0.1, 64, 1);
  CHECK(fine < coarse);  // truncation error dominates at large h
}

TEST_CASE("grad_check at a near-stationary point reports ~zero") {
  DigitModel m = near_deterministic_21_model();
  TrainExample ex{{0.3, 0.3, 0.3, 0.3}, {2, 1, kStopToken}};
  CHECK(grad_check(m, ex, 1e-5, 64, 2) < 1e-6);
}

TEST_CASE("temperature-0 sampling equals greedy decoding") {
  DigitModel m = init_digit_model(6, 20, 31);
  for (uint64_t s = 0; s < 10; ++s) {
    auto x = random_features(6, 100 + s);
    DecodeResult greedy = decode(m, x, DecodeMode::greedy());
    DecodeResult zero = decode(m, x, DecodeMode::sample(0.0, s));
    CHECK(greedy.tokens == zero.tokens);
    CHECK(greedy.overflow == zero.overflow);
  }
}

TEST_CASE("sampled decoding is deterministic per seed") {
  DigitModel m = init_digit_model(6, 20, 32);
  auto x = random_features(6, 200);
  DecodeResult a = decode(m, x, DecodeMode::sample(0.7, 5));
  DecodeResult b = decode(m, x, DecodeMode::sample(0.7, 5));
  CHECK(a.tokens == b.tokens);
}

TEST_CASE("the 12-digit cap signals overflow") {
  DigitModel m = uniform_model(4, 8, 1);
  // strongly favor digit 5: STOP never fires
  m.b_o.assign(kVocabSize, 0.0);
  m.b_o[5] = 100.0;
  DecodeResult d = decode(m, std::vector<double>(4, 0.1));
  CHECK(d.overflow);
  CHECK(d.tokens.size() == kMaxDigits);
  CHECK_THROWS_AS(detokenize(d.tokens), DecodeError);
}

TEST_CASE("model save/load round-trips exactly") {
  DigitModel m = init_digit_model(7, 18, 99);
  std::string bytes = save_digit_model(m);
  DigitModel back = load_digit_model(bytes);
  CHECK(back == m);  // bitwise parameter equality
  CHECK_THROWS_AS(load_digit_model(bytes.substr(0, bytes.size() / 3)), DecodeError);
  CHECK_THROWS_AS(load_digit_model("{\"format\":\"other\"}"), DecodeError);
}

TEST_CASE("featurize layout and padding") {
  Catalog cat = testsupport::micro_db(50, 40);
  QueryAst ast = parse_query(
      "SELECT COUNT(*) FROM t1, t2 WHERE t1.a = t2.a AND t1.v >= 10 AND t1.name LIKE 's%'", cat);
  FeatureSpec spec;
  std::vector<std::pair<std::string, double>> ests{{kSourceIndependence, 30},
                                                   {kSourceSampling, 99}};
  auto f = featurize(ast, cat, ests, {}, spec);
  REQUIRE(static_cast<int>(f.size()) == spec.dim());
  CHECK(f[0] == 2.0);  // tables
  CHECK(f[1] == 1.0);  // joins
  CHECK(f[2] == 2.0);  // filters
  // estimate slots hold log10(1+v)
  CHECK(f[3 + spec.filter_slots] == Catch::Approx(std::log10(31.0)));
  CHECK(f[3 + spec.filter_slots + 1] == Catch::Approx(std::log10(100.0)));
  CHECK(f[3 + spec.filter_slots + 2] == 0.0);  // padding
  // flags
  CHECK(f[spec.dim() - 4] == 1.0);  // has_like
  CHECK(f[spec.dim() - 3] == 0.0);  // has_distinct
  for (double v : f) CHECK(std::isfinite(v));

  // the same query with feedback differs only in the last two slots
  auto g = featurize(ast, cat, ests, {1234.0, 2}, spec);
  CHECK(g[spec.dim() - 2] == Catch::Approx(std::log10(1235.0)));
  CHECK(g[spec.dim() - 1] == 2.0);
  for (int i = 0; i < spec.dim() - 2; ++i) CHECK(f[i] == g[i]);
}
