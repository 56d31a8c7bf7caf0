#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "kgf/lm/checkpoint.hpp"
#include "kgf/lm/corpus.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/optim.hpp"
#include "kgf/lm/tokenizer.hpp"
#include "kgf/lm/train.hpp"

namespace fs = std::filesystem;
using namespace kgf;

namespace {

lm::ModelConfig tiny_config(int vocab) {
  lm::ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_seq_len = 24;
  c.seed = 5;
  return c;
}

lm::Tokenizer toy_tokenizer() {
  return lm::Tokenizer::build({"what is the capital of vorland ? tesk", "where was ann born ? ulmo", "I do not know"});
}

std::vector<int> random_tokens(std::mt19937_64& rng, int vocab, int n) {
  std::uniform_int_distribution<int> d(5, vocab - 1);
  std::vector<int> t{lm::Tokenizer::kBos};
  for (int i = 1; i < n; ++i) t.push_back(d(rng));
  return t;
}

/// Gives every adapter a nonzero up-projection so the adapter path contributes.
void perturb_adapters(lm::Model<float>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 0.2f);
  for (auto& x : m.adapter_params().data) x = x == 0.0f ? d(rng) : x;
}

}  // namespace

TEST_CASE("tokenizer round trip and closed vocabulary") {
  const auto tok = toy_tokenizer();
  const auto ids = tok.encode("what is the capital of vorland ?");
  CHECK(tok.encode(tok.decode(ids)) == ids);
  CHECK(tok.encode("[SEP]") == std::vector<int>{lm::Tokenizer::kSep});
  CHECK_THROWS_AS(tok.encode("unseen"), lm::TokenizerError);
}

TEST_CASE("next-token distributions are normalized and causal") {
  const auto tok = toy_tokenizer();
  lm::Model<float> m(tiny_config(tok.size()));
  std::mt19937_64 rng(1);
  const auto t = random_tokens(rng, tok.size(), 10);
  const auto p = m.next_token_probs(t);
  for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0f) < 1e-6f);

  auto changed = t;
  for (std::size_t i = 6; i < changed.size(); ++i) changed[i] = 5 + (changed[i] - 4) % (tok.size() - 5);
  const auto q = m.next_token_probs(changed);
  for (Eigen::Index r = 0; r < 6; ++r) CHECK((p.row(r) - q.row(r)).cwiseAbs().maxCoeff() == 0.0f);

  lm::Model<float> again(tiny_config(tok.size()));
  CHECK((again.next_token_probs(t) - p).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("parameter and gradient buffers are maximally aligned") {
  const auto tok = toy_tokenizer();
  for (int i = 0; i < 8; ++i) {
    std::vector<char> shift(static_cast<std::size_t>(8 * i + 1));
    lm::Model<float> m(tiny_config(tok.size()));
    m.attach_adapters({4, 8.0, 0.0}, 1);
    const auto g = m.make_gradients();
    for (const void* p : {static_cast<const void*>(m.params().data.data()), static_cast<const void*>(m.adapter_params().data.data()),
                          static_cast<const void*>(g.base.data()), static_cast<const void*>(g.adapter.data())}) {
      CHECK(reinterpret_cast<std::uintptr_t>(p) % EIGEN_MAX_ALIGN_BYTES == 0);
    }
  }
}

TEST_CASE("sequence log-probability is the sum of per-step log-probabilities") {
  const auto tok = toy_tokenizer();
  lm::Model<float> m(tiny_config(tok.size()));
  const auto prompt = lm::encode_prompt(tok, "where was ann born ?");
  const auto answer = tok.encode("I do not know");
  auto full = prompt;
  full.insert(full.end(), answer.begin(), answer.end());
  const auto p = m.next_token_probs(full);
  double want = 0.0;
  for (std::size_t i = 0; i < answer.size(); ++i) want += std::log(p(prompt.size() - 1 + i, answer[i]));
  const double got = lm::sequence_logprob(m, tok, "where was ann born ?", "I do not know");
  CHECK(got == doctest::Approx(want).epsilon(1e-5));
  CHECK(got <= 0.0);
  CHECK_THROWS(lm::sequence_logprob(m, tok, "where was ann born ?", ""));
}

TEST_CASE("AdamW updates") {
  lm::AdamWConfig c;
  c.lr = 0.1;
  lm::AdamW<double> opt(1, c);
  lm::Buffer<double> p{1.0};
  opt.step(p, {0.5});
  // m_hat = g, v_hat = g^2, so the first step moves by lr * g / (|g| + eps).
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));

  lm::AdamW<double> still(2, c);
  lm::Buffer<double> q{1.0, -2.0};
  still.step(q, {0.0, 0.0});
  CHECK(q == lm::Buffer<double>{1.0, -2.0});

  c.weight_decay = 0.01;
  lm::AdamW<double> decay(2, c);
  decay.step(q, {0.0, 0.0});
  CHECK(q[0] == doctest::Approx(1.0 * (1 - 0.1 * 0.01)));
  CHECK(q[1] == doctest::Approx(-2.0 * (1 - 0.1 * 0.01)));
}

TEST_CASE("gradient clipping") {
  lm::Buffer<double> g{3.0, 4.0};
  CHECK(lm::clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(lm::l2_norm(g) == doctest::Approx(1.0));
  lm::Buffer<double> small{0.3, 0.4};
  lm::clip_grad_norm(small, 1.0);
  CHECK(small == lm::Buffer<double>{0.3, 0.4});
}

TEST_CASE("zero loss gives zero gradient") {
  const auto tok = toy_tokenizer();
  lm::Model<double> m(tiny_config(tok.size()));
  lm::Example ex{lm::encode_prompt(tok, "where was ann born ?"), 0};
  ex.answer_start = ex.tokens.size();
  ex.tokens.push_back(tok.id("ulmo"));
  m.forward({ex}, {.keep_tape = true});
  auto grads = m.make_gradients();
  m.backward({0.0}, grads);
  for (double g : grads.base) CHECK(g == 0.0);
}

TEST_CASE("greedy decoding") {
  const auto tok = toy_tokenizer();
  lm::Model<float> m(tiny_config(tok.size()));
  const std::vector<std::vector<int>> prompts{lm::encode_prompt(tok, "where was ann born ?")};
  CHECK(m.greedy_decode(prompts, 0, lm::Tokenizer::kEos).front().empty());
  CHECK(m.greedy_decode(prompts, 5, lm::Tokenizer::kEos) == m.greedy_decode(prompts, 5, lm::Tokenizer::kEos));
}

TEST_CASE("pretraining memorizes a toy corpus") {
  const auto tok = toy_tokenizer();
  lm::Model<float> m(tiny_config(tok.size()));
  const std::vector<lm::TextPair> corpus{{"what is the capital of vorland ?", "tesk"}, {"where was ann born ?", "ulmo"}};
  lm::PretrainConfig pc;
  pc.max_epochs = 150;
  pc.min_epochs = 1;
  pc.eval_every = 10;
  pc.batch_size = 2;
  pc.warmup_steps = 5;
  pc.lr = 0.01;
  lm::Model<float> one = m;
  auto single = pc;
  single.max_epochs = 1;
  const auto first = lm::pretrain(one, tok, corpus, {}, single);
  CHECK(lm::mean_token_loss(one, tok, corpus) < first.initial_loss);

  std::vector<double> losses;
  const auto r = lm::pretrain(m, tok, corpus, corpus, pc, [&](int, double loss, double) { losses.push_back(loss); });
  REQUIRE_FALSE(losses.empty());
  CHECK(r.epoch_loss.back() < r.initial_loss);
  CHECK(r.probe_recall == 1.0);
  CHECK(lm::generate_answers(m, tok, {"what is the capital of vorland ?"}, {4}).front() == "tesk");
  CHECK_THROWS(lm::pretrain(m, tok, {}, {}, pc));
}

TEST_CASE("checkpoints") {
  const auto tok = toy_tokenizer();
  lm::Model<float> m(tiny_config(tok.size()));
  const auto dir = fs::temp_directory_path() / "kgf-unit-ckpt";
  fs::create_directories(dir);
  lm::save_checkpoint(m, dir / "m.ckpt");
  const auto back = lm::load_checkpoint(dir / "m.ckpt");
  CHECK(back.config() == m.config());
  CHECK(back.params().data == m.params().data);

  auto bytes = lm::serialize_checkpoint(m);
  bytes[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(lm::deserialize_checkpoint(bytes), lm::CheckpointError);
  auto magic = lm::serialize_checkpoint(m);
  magic[0] = 'X';
  CHECK_THROWS_AS(lm::deserialize_checkpoint(magic), lm::CheckpointError);
  CHECK_THROWS_AS(lm::deserialize_checkpoint(magic.substr(0, 40)), lm::CheckpointError);

  m.attach_adapters({4, 8.0, 0.0}, 3);
  perturb_adapters(m, 4);
  const auto adapted = lm::deserialize_checkpoint(lm::serialize_checkpoint(m));
  CHECK(adapted.has_adapters());
  CHECK(adapted.adapter_params().data == m.adapter_params().data);
}

TEST_CASE("adapters: zero init, merge and frozen base") {
  const auto tok = toy_tokenizer();
  lm::Model<float> base(tiny_config(tok.size()));
  std::mt19937_64 rng(2);
  std::vector<std::vector<int>> prompts;
  for (int i = 0; i < 10; ++i) prompts.push_back(random_tokens(rng, tok.size(), 8));

  lm::Model<float> adapted = base;
  adapted.attach_adapters({4, 8.0, 0.0}, 3);
  for (const auto& p : prompts) CHECK((adapted.next_token_probs(p) - base.next_token_probs(p)).cwiseAbs().maxCoeff() == 0.0f);

  perturb_adapters(adapted, 4);
  lm::Model<float> merged = adapted;
  merged.merge_adapters();
  CHECK_FALSE(merged.has_adapters());
  float worst = 0.0f;
  for (const auto& p : prompts) {
    lm::Example ex{p, 1};
    const auto a = adapted.forward({ex}, {.want_distributions = true}).log_probs;
    const auto b = merged.forward({ex}, {.want_distributions = true}).log_probs;
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-5f);

  adapted.set_base_trainable(false);
  const auto before = adapted.params().data;
  lm::Example ex{prompts[0], 1};
  adapted.forward({ex}, {.keep_tape = true});
  auto grads = adapted.make_gradients();
  CHECK(grads.base.empty());
  adapted.backward({1.0}, grads);
  lm::AdamW<float> opt(grads.adapter.size(), {});
  opt.step(adapted.adapter_params().data, grads.adapter);
  CHECK(adapted.params().data == before);
}
