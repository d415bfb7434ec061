#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stabilex/corpus.hpp"
#include "stabilex/error.hpp"
#include "stabilex/relprop.hpp"

using namespace stabilex;
using namespace stabilex::relprop;
using tinyformer::Classifier;

namespace {

tinyformer::ModelConfig config() {
  tinyformer::ModelConfig c;
  c.vocab_size = 30;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_len = 12;
  return c;
}

// Freshly initialized models have zero biases.
Classifier zero_bias_model(std::uint64_t seed) {
  return tinyformer::init(config(), {seed, seed * 31 + 1});
}

std::vector<int> random_tokens(Stream& s, int vocab, int max_len) {
  std::vector<int> t(1 + s.below(static_cast<std::uint64_t>(max_len)));
  for (auto& v : t) v = static_cast<int>(s.below(static_cast<std::uint64_t>(vocab)));
  return t;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("relevance is conserved on zero-bias models") {
  Stream s(1, "conservation");
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto m = zero_bias_model(static_cast<std::uint64_t>(i % 10) + 1);
    const auto tokens = random_tokens(s, 30, 12);
    for (int target : {0, 1}) {
      const auto e = explain(m, tokens, target);
      const double logit = tinyformer::forward(m, tokens).logits(target);
      worst = std::max(worst, std::abs(sum(e.relevances) - logit) / std::abs(logit));
    }
  }
  MESSAGE("worst relative residual " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("one finite value per token, predicted class by default") {
  const auto m = zero_bias_model(2);
  const std::vector<int> tokens{1, 5, 9, 2, 2};
  const auto e = explain(m, tokens);
  CHECK(e.relevances.size() == tokens.size());
  for (double r : e.relevances) CHECK(std::isfinite(r));
  CHECK(e.target_class == tinyformer::predict(m, tokens));
  CHECK(explain(m, tokens).relevances == e.relevances);
}

TEST_CASE("scaling the head scales every relevance") {
  auto m = zero_bias_model(3);
  m.w.bc << 0.3, -0.2;
  const std::vector<int> tokens{3, 1, 4, 1, 5, 9};
  const auto base = explain(m, tokens, 1);
  const double lambda = 3.5;
  auto scaled = m;
  scaled.w.Wc *= lambda;
  scaled.w.bc *= lambda;
  const auto e = explain(scaled, tokens, 1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    CHECK(e.relevances[i] == doctest::Approx(lambda * base.relevances[i]).epsilon(1e-6));
  }
  auto argmax = [](const std::vector<double>& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
  CHECK(argmax(e.relevances) == argmax(base.relevances));
}

TEST_CASE("non-finite weights are reported") {
  auto m = zero_bias_model(4);
  m.w.W2(0, 0) = NAN;
  try {
    explain(m, std::vector<int>{1, 2});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumericalFailure);
  }
}

TEST_CASE("explain_matrix shape, identical models and dissent") {
  const auto a = zero_bias_model(5);
  const std::vector<int> tokens{2, 4, 6};
  const std::vector<std::string> words{"x", "y", "z"};
  std::vector<NamedModel> same = {{"m0", &a}, {"m1", &a}};
  const auto mat = explain_matrix(same, tokens, words, 42);
  CHECK(mat.text_id == 42);
  CHECK(mat.models() == 2);
  CHECK(mat.width() == 3);
  CHECK(mat.rows[0] == mat.rows[1]);

  // A model with a flipped head predicts the other class.
  auto flipped = a;
  flipped.w.Wc.col(0).swap(flipped.w.Wc.col(1));
  const int label = tinyformer::predict(a, tokens);
  REQUIRE(tinyformer::predict(flipped, tokens) != label);
  std::vector<NamedModel> mixed = {{"m0", &a}, {"m1", &a}, {"odd", &flipped}};
  try {
    explain_matrix(mixed, tokens, words, 1);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNotCompatible);
    CHECK(std::string(e.what()).find("odd") != std::string::npos);
  }
  std::vector<NamedModel> one = {{"m0", &a}};
  CHECK_THROWS_AS(explain_matrix(one, tokens, words, 1), Error);
}

TEST_CASE("trained models put the most relevance on the name") {
  const auto corpus = corpus::gen_ordered(600, 10, 21);
  tinyformer::TrainConfig tc;
  tc.learning_rate = 3e-3;
  int name_top = 0, total = 0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto model = tinyformer::train(corpus, {}, tc, {5, 100 + s}).model;
    for (const auto& t : corpus.test) {
      const auto e = explain(model, corpus.vocab.encode(t.words));
      const auto top = std::max_element(e.relevances.begin(), e.relevances.end()) - e.relevances.begin();
      const auto& w = t.words[static_cast<std::size_t>(top)];
      name_top += w == corpus::kClass0Name || w == corpus::kClass1Name;
      ++total;
    }
  }
  MESSAGE("name on top for " << name_top << " of " << total);
  CHECK(name_top * 2 > total);
}
