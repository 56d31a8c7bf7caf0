#pragma once

#include <vector>

#include "kgf/lm/corpus.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/tokenizer.hpp"

namespace kgf::eval {

inline constexpr double kDefaultEpsilon = 0.1;

struct BoundaryReport {
  double p_forget = 0.0;     // mean answer probability on forget probes
  double p_retain = 0.0;
  double ratio = 0.0;        // p_retain / p_forget
  double logprob_gap = 0.0;  // mean log answer probability, retain minus forget
  double roc_auc = 0.0;      // P(forget probability < retain probability)
  double mean_kl_forget = 0.0;
  double mean_kl_neighbor = 0.0;
  double neighbor_within_epsilon_fraction = 0.0;
  double epsilon = kDefaultEpsilon;
};

/// Answer-probability separation between forget and retain probes, plus
/// KL(policy || reference) over gold-answer positions and the share of
/// neighbors whose answer log-ratio stays within epsilon.
BoundaryReport boundary_report(lm::Model<float>& policy, lm::Model<float>& reference, const lm::Tokenizer& tok,
                               const std::vector<lm::TextPair>& forget, const std::vector<lm::TextPair>& retain,
                               const std::vector<lm::TextPair>& neighbors, double epsilon = kDefaultEpsilon);

struct AnswerScores {
  std::vector<double> logprob;  // summed over answer tokens
  std::vector<double> mean_logprob;
  std::vector<double> kl;       // mean KL per probe, filled when a reference is given
};

/// Scores every pair in batches; `reference` enables the per-probe KL.
AnswerScores score_answers(lm::Model<float>& policy, lm::Model<float>* reference, const lm::Tokenizer& tok,
                           const std::vector<lm::TextPair>& pairs);

}  // namespace kgf::eval
