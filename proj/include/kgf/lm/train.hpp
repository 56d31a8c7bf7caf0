#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kgf/lm/corpus.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/optim.hpp"
#include "kgf/lm/tokenizer.hpp"

namespace kgf::lm {

struct PretrainConfig {
  int max_epochs = 120;
  int min_epochs = 20;
  int batch_size = 32;
  double lr = 2e-3;
  double min_lr_fraction = 0.1;
  double weight_decay = 0.0;
  int warmup_steps = 100;
  int eval_every = 5;
  double target_recall = 1.0;  // mean ROUGE-L recall on the probe set that stops training
  std::uint64_t seed = 1;
};

struct PretrainResult {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // mean answer-token cross-entropy per epoch
  int epochs = 0;
  double probe_recall = 0.0;
};

using EpochCallback = std::function<void(int epoch, double loss, double recall)>;

/// Trains on answer tokens only. Stops once mean ROUGE-L recall on
/// `stop_probes` reaches the target (checked every eval_every epochs, after
/// min_epochs) or at max_epochs.
PretrainResult pretrain(Model<float>& model, const Tokenizer& tok, const std::vector<TextPair>& corpus,
                        const std::vector<TextPair>& stop_probes, const PretrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

/// Mean answer-token cross-entropy over a set of pairs (no gradient).
double mean_token_loss(Model<float>& model, const Tokenizer& tok, const std::vector<TextPair>& pairs);

/// Batched greedy answers, detokenized. `budgets[i]` caps answer i's length.
std::vector<std::string> generate_answers(Model<float>& model, const Tokenizer& tok,
                                          const std::vector<std::string>& questions,
                                          const std::vector<int>& budgets);

/// Sum of answer-token log-probabilities given the question.
template <typename S>
S sequence_logprob(Model<S>& model, const Tokenizer& tok, const std::string& question,
                   const std::string& answer);

}  // namespace kgf::lm
