#include "kgf/lm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kgf/eval/rouge.hpp"

namespace kgf::lm {
namespace {

constexpr std::size_t kDecodeBatch = 256;

double schedule(const PretrainConfig& cfg, long step, long total) {
  if (step < cfg.warmup_steps) return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) /
                                            std::max<long>(1, total - cfg.warmup_steps));
  const double floor = cfg.lr * cfg.min_lr_fraction;
  return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double probe_recall(Model<float>& model, const Tokenizer& tok, const std::vector<TextPair>& probes) {
  if (probes.empty()) return 1.0;
  std::vector<std::string> qs;
  std::vector<int> budgets;
  for (const auto& p : probes) {
    qs.push_back(p.question);
    budgets.push_back(static_cast<int>(tok.encode(p.answer).size()) + 2);
  }
  auto outs = generate_answers(model, tok, qs, budgets);
  double sum = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) sum += eval::rouge_l(outs[i], probes[i].answer).recall;
  return sum / static_cast<double>(probes.size());
}

}  // namespace

double mean_token_loss(Model<float>& model, const Tokenizer& tok, const std::vector<TextPair>& pairs) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < pairs.size(); start += 64) {
    std::vector<Example> batch;
    for (std::size_t i = start; i < std::min(pairs.size(), start + 64); ++i) {
      batch.push_back(encode_pair(tok, pairs[i].question, pairs[i].answer));
      tokens += batch.back().tokens.size() - batch.back().answer_start;
    }
    for (float lp : model.forward(batch).seq_logprob) nll -= lp;
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

PretrainResult pretrain(Model<float>& model, const Tokenizer& tok, const std::vector<TextPair>& corpus,
                        const std::vector<TextPair>& stop_probes, const PretrainConfig& cfg,
                        const EpochCallback& on_epoch) {
  if (corpus.empty()) throw std::invalid_argument("pretraining corpus is empty");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw std::invalid_argument("invalid pretraining schedule");
  std::vector<Example> examples;
  examples.reserve(corpus.size());
  for (const auto& p : corpus) examples.push_back(encode_pair(tok, p.question, p.answer));

  model.set_base_trainable(true);
  AdamW<float> opt(model.params().size(), AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  PretrainResult result;
  result.initial_loss = mean_token_loss(model, tok, corpus);
  if (!std::isfinite(result.initial_loss)) throw NumericError("initial loss is not finite");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  const auto batches_per_epoch = static_cast<long>((examples.size() + cfg.batch_size - 1) / cfg.batch_size);
  const long total_steps = batches_per_epoch * cfg.max_epochs;
  long step = 0;
  auto grads = model.make_gradients();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<Example> batch;
      std::size_t tokens = 0;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(examples[order[i]]);
        tokens += batch.back().tokens.size() - batch.back().answer_start;
      }
      auto out = model.forward(batch, ForwardOptions{true, true, false, 0});
      for (float lp : out.seq_logprob) epoch_nll -= lp;
      epoch_tokens += tokens;
      grads.zero();
      // Loss = -(1/tokens) * sum_s logp_s; backward takes dLoss/dlogp_s.
      std::vector<float> coeff(batch.size(), -1.0f / static_cast<float>(tokens));
      model.backward(coeff, grads);
      opt.set_lr(schedule(cfg, step++, total_steps));
      opt.step(model.params().data, grads.base);
    }
    const double loss = epoch_nll / static_cast<double>(epoch_tokens);
    if (!std::isfinite(loss)) {
      throw NumericError("pretraining diverged at epoch " + std::to_string(epoch));
    }
    result.epoch_loss.push_back(loss);
    result.epochs = epoch;
    double recall = -1.0;
    if (epoch >= cfg.min_epochs && (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs)) {
      recall = probe_recall(model, tok, stop_probes);
      result.probe_recall = recall;
    }
    if (on_epoch) on_epoch(epoch, loss, recall);
    if (recall >= cfg.target_recall) break;
  }
  if (result.probe_recall == 0.0 && !stop_probes.empty()) {
    result.probe_recall = probe_recall(model, tok, stop_probes);
  }
  return result;
}

std::vector<std::string> generate_answers(Model<float>& model, const Tokenizer& tok,
                                          const std::vector<std::string>& questions,
                                          const std::vector<int>& budgets) {
  if (budgets.size() != questions.size()) throw std::invalid_argument("one budget per question");
  std::vector<std::string> out(questions.size());
  // Group by budget so one decode call serves each group.
  std::vector<std::size_t> idx(questions.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return budgets[a] < budgets[b]; });
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start;
    std::vector<std::vector<int>> prompts;
    while (end < idx.size() && budgets[idx[end]] == budgets[idx[start]] && prompts.size() < kDecodeBatch) {
      prompts.push_back(encode_prompt(tok, questions[idx[end]]));
      ++end;
    }
    auto decoded = model.greedy_decode(prompts, budgets[idx[start]], Tokenizer::kEos);
    for (std::size_t k = start; k < end; ++k) out[idx[k]] = tok.decode(decoded[k - start]);
    start = end;
  }
  return out;
}

template <typename S>
S sequence_logprob(Model<S>& model, const Tokenizer& tok, const std::string& question,
                   const std::string& answer) {
  Example ex;
  ex.tokens = encode_prompt(tok, question);
  ex.answer_start = ex.tokens.size();
  auto a = tok.encode(answer);
  if (a.empty()) throw std::invalid_argument("sequence_logprob needs a non-empty answer");
  ex.tokens.insert(ex.tokens.end(), a.begin(), a.end());
  return model.forward({ex}).seq_logprob.front();
}

template float sequence_logprob<float>(Model<float>&, const Tokenizer&, const std::string&, const std::string&);
template double sequence_logprob<double>(Model<double>&, const Tokenizer&, const std::string&, const std::string&);

}  // namespace kgf::lm
