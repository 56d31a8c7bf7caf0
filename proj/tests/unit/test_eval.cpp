#include <cmath>
#include <random>

#include "doctest.h"
#include "kgf/eval/boundary.hpp"
#include "kgf/eval/drift.hpp"
#include "kgf/eval/metrics.hpp"
#include "kgf/eval/rouge.hpp"
#include "kgf/lm/corpus.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/tokenizer.hpp"

using namespace kgf;

namespace {

lm::Tokenizer toy_tokenizer() {
  return lm::Tokenizer::build({"what is the capital of vorland ? tesk", "where was ann born ? ulmo", "who made it ? bo",
                               "I do not know"});
}

lm::Model<float> toy_model(int vocab) {
  lm::ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_seq_len = 24;
  c.seed = 9;
  return lm::Model<float>(c);
}

}  // namespace

TEST_CASE("ROUGE-L") {
  const auto same = eval::rouge_l("paris", "paris");
  CHECK(same.recall == 1.0);
  CHECK(same.precision == 1.0);
  const auto partial = eval::rouge_l("the nobel peace prize", "nobel prize");
  CHECK(partial.recall == 1.0);
  CHECK(partial.precision == 0.5);
  const auto none = eval::rouge_l("alpha beta", "gamma");
  CHECK(none.recall == 0.0);
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(eval::rouge_l("Paris.", "paris").recall == 1.0);
}

TEST_CASE("unlearning efficacy, locality and knowledge consistency") {
  CHECK(eval::unlearning_efficacy({"a", "b"}, {"a", "b"}) == 0.0);
  CHECK(eval::unlearning_efficacy({"x", "y"}, {"a", "b"}) == 1.0);
  CHECK(eval::unlearning_efficacy({"a b", "a", "x"}, {"a b", "a b", "a b"}) == doctest::Approx(0.5));
  CHECK_THROWS(eval::unlearning_efficacy({}, {}));
  CHECK_THROWS(eval::unlearning_efficacy({"a"}, {"a", "b"}));
  CHECK(eval::locality({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(eval::locality({"x", "y"}, {"a", "b"}) == 0.0);
  CHECK(eval::locality({"a b c d", "a b c"}, {"a b c d x", "a b c x y"}) == doctest::Approx(0.7));
  CHECK(eval::kcs({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(eval::delta_kcs(0.5, 0.5) == 0.0);
  CHECK(eval::delta_kcs(0.9, 0.2) == doctest::Approx(-0.7));
}

TEST_CASE("refusal rate and harmonic mean") {
  CHECK(eval::refusal_rate({"I do not know."}) == 1.0);
  CHECK(eval::refusal_rate({"Paris"}) == 0.0);
  CHECK(eval::refusal_rate({"paris", "I DON'T KNOW", "tesk", "bo"}) == 0.25);
  CHECK(eval::is_refusal("Sorry, I cannot answer that"));
  CHECK(eval::is_refusal("there is no information"));
  CHECK(eval::harmonic_mean(0.4, 0.4) == doctest::Approx(0.4));
  CHECK(eval::harmonic_mean(1.0, 0.0) == 0.0);
  CHECK(eval::harmonic_mean(0.0, 0.0) == 0.0);
  CHECK(eval::harmonic_mean(0.8, 0.6) == doctest::Approx(0.685714).epsilon(1e-6));
}

TEST_CASE("ROC-AUC") {
  CHECK(eval::roc_auc({0.1, 0.2}, {0.3, 0.4}) == 1.0);
  CHECK(eval::roc_auc({0.2, 0.6}, {0.4, 0.8}) == 0.75);
  CHECK(eval::roc_auc({0.5}, {0.5}) == 0.5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double total = 0.0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> a(200), b(200);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    total += eval::roc_auc(a, b);
  }
  CHECK(std::abs(total / trials - 0.5) <= 0.05);
}

TEST_CASE("answer probability is the per-token geometric mean") {
  const auto tok = toy_tokenizer();
  auto m = toy_model(tok.size());
  auto prompt = lm::encode_prompt(tok, "who made it ?");
  const auto answer = tok.encode("I do not know");
  auto full = prompt;
  full.insert(full.end(), answer.begin(), answer.end());
  const auto p = m.next_token_probs(full);
  double log_sum = 0.0, best = 0.0;
  for (std::size_t i = 0; i < answer.size(); ++i) {
    const double step = p(prompt.size() - 1 + i, answer[i]);
    log_sum += std::log(step);
    best = std::max(best, step);
  }
  const double got = eval::answer_probability(m, tok, "who made it ?", "I do not know");
  CHECK(got == doctest::Approx(std::exp(log_sum / answer.size())).epsilon(1e-5));
  CHECK(got <= best);
  const double single = eval::answer_probability(m, tok, "who made it ?", "bo");
  CHECK(single == doctest::Approx(p(prompt.size() - 1, tok.id("bo"))).epsilon(1e-5));
  CHECK_THROWS(eval::answer_probability(m, tok, "who made it ?", ""));
}

TEST_CASE("boundary report against itself") {
  const auto tok = toy_tokenizer();
  auto m = toy_model(tok.size());
  auto ref = m;
  const std::vector<lm::TextPair> forget{{"what is the capital of vorland ?", "tesk"}};
  const std::vector<lm::TextPair> retain{{"where was ann born ?", "ulmo"}, {"who made it ?", "bo"}};
  const auto r = eval::boundary_report(m, ref, tok, forget, retain, retain, 0.1);
  CHECK(r.mean_kl_forget == 0.0);
  CHECK(r.mean_kl_neighbor == 0.0);
  CHECK(r.neighbor_within_epsilon_fraction == 1.0);
  CHECK(r.ratio == doctest::Approx(r.p_retain / r.p_forget));
  const auto again = eval::boundary_report(m, ref, tok, forget, retain, retain, 0.1);
  CHECK(again.logprob_gap == r.logprob_gap);
  CHECK(again.roc_auc == r.roc_auc);
  CHECK_THROWS(eval::boundary_report(m, ref, tok, {}, retain, retain, 0.1));
}

TEST_CASE("drift diagnostics") {
  const auto tok = toy_tokenizer();
  const auto m = toy_model(tok.size());
  eval::GradientProbe gp{{"who made it ?", "bo"}, {{"where was ann born ?", "ulmo"}}, {1.0}};
  const auto r = eval::drift_report(m, m, tok, {"who made it ?"}, {"where was ann born ?"},
                                    {"what is the capital of vorland ?"}, {gp});
  CHECK(r.drift_target == 0.0);
  CHECK(r.drift_neighbor == 0.0);
  CHECK(r.drift_distant == 0.0);
  CHECK(r.residual_norm <= r.forget_grad_norm + 1e-12);

  const std::vector<double> a{1.0, 0.0, 0.0}, b{0.0, 2.0, 0.0};
  CHECK(eval::cosine(a, b) == 0.0);
  CHECK(eval::norm(eval::residual_after_projection(a, {b})) == doctest::Approx(1.0));
  CHECK(eval::residual_after_projection({1.0, 1.0}, {{1.0, 0.0}}) == std::vector<double>{0.0, 1.0});

  auto other = toy_model(tok.size() + 1);
  CHECK_THROWS(eval::drift_report(m, other, tok, {"who made it ?"}, {}, {}, {}));
}
