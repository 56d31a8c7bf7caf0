#pragma once

#include <string>
#include <vector>

#include "kgf/bench/benchmark.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/tokenizer.hpp"

namespace kgf::eval {

/// 1 - mean ROUGE-L recall. Throws std::invalid_argument on empty or unequal lists.
double unlearning_efficacy(const std::vector<std::string>& outputs, const std::vector<std::string>& golds);
/// Mean ROUGE-L recall over retain probes.
double locality(const std::vector<std::string>& outputs, const std::vector<std::string>& golds);
/// Mean ROUGE-L recall over a target's neighborhood probes.
double kcs(const std::vector<std::string>& outputs, const std::vector<std::string>& golds);
double delta_kcs(double pre, double post);

bool is_refusal(const std::string& output);
double refusal_rate(const std::vector<std::string>& outputs);

/// 2ab/(a+b), 0 when both are 0.
double harmonic_mean(double ue, double loc);

/// P(forget score < retain score), ties counted as one half.
double roc_auc(const std::vector<double>& forget_scores, const std::vector<double>& retain_scores);

/// exp(mean answer-token log-probability).
template <typename S>
double answer_probability(lm::Model<S>& model, const lm::Tokenizer& tok, const std::string& question,
                          const std::string& answer);

/// Greedy answer budget: 8 tokens for single-hop probes, 12 for two-hop, 16 for three-hop.
int decode_budget(int hop);

struct ProbeOutcome {
  bench::Probe probe;
  std::string output;
  double recall = 0.0;
};

/// Decodes every probe (optionally behind the in-context unlearning prompt) and scores it.
std::vector<ProbeOutcome> run_probes(lm::Model<float>& model, const lm::Tokenizer& tok,
                                     const std::vector<bench::Probe>& probes, bool icu = false);

/// Probe types whose recall forms the target's knowledge neighborhood.
bool in_knowledge_neighborhood(bench::ProbeType t);

struct MetricsReport {
  double ue_direct = 0.0;
  double ue_paraphrase = 0.0;
  double ue_inverse = 0.0;
  double ue_multi_hop = 0.0;  // two- and three-hop pooled
  double locality = 0.0;
  double kcs_pre = 0.0;
  double kcs_post = 0.0;
  double delta_kcs = 0.0;
  double refusal_rate = 0.0;
  double hmean = 0.0;  // of direct UE and locality
};

/// UE over forget_eval probes by type, locality over retain_eval probes,
/// refusal rate over every output. kcs_pre is the pre-unlearning KCS.
MetricsReport summarize(const std::vector<ProbeOutcome>& outcomes, double kcs_pre);
/// Mean recall over the knowledge-neighborhood probes of `outcomes`.
double kcs_of(const std::vector<ProbeOutcome>& outcomes);

}  // namespace kgf::eval
