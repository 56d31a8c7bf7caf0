#include "kgf/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <stdexcept>

#include "kgf/eval/rouge.hpp"
#include "kgf/lm/train.hpp"
#include "kgf/unlearn/trainer.hpp"

namespace kgf::eval {
namespace {

double mean_recall(const std::vector<std::string>& outputs, const std::vector<std::string>& golds,
                   const char* what) {
  if (outputs.size() != golds.size()) throw std::invalid_argument(std::string(what) + ": unequal list lengths");
  if (outputs.empty()) throw std::invalid_argument(std::string(what) + " of an empty probe list is undefined");
  double s = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) s += rouge_l(outputs[i], golds[i]).recall;
  return s / static_cast<double>(outputs.size());
}

double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double unlearning_efficacy(const std::vector<std::string>& outputs, const std::vector<std::string>& golds) {
  return 1.0 - mean_recall(outputs, golds, "unlearning efficacy");
}

double locality(const std::vector<std::string>& outputs, const std::vector<std::string>& golds) {
  return mean_recall(outputs, golds, "locality");
}

double kcs(const std::vector<std::string>& outputs, const std::vector<std::string>& golds) {
  return mean_recall(outputs, golds, "knowledge consistency");
}

double delta_kcs(double pre, double post) { return post - pre; }

bool is_refusal(const std::string& output) {
  static const std::regex pattern(
      "i do not know|i don't know|i cannot answer|i can't answer|unable to answer|no information",
      std::regex::icase | std::regex::optimize);
  return std::regex_search(output, pattern);
}

double refusal_rate(const std::vector<std::string>& outputs) {
  if (outputs.empty()) return 0.0;
  const auto n = std::count_if(outputs.begin(), outputs.end(), [](const std::string& o) { return is_refusal(o); });
  return static_cast<double>(n) / static_cast<double>(outputs.size());
}

double harmonic_mean(double ue, double loc) {
  if (ue + loc == 0.0) return 0.0;
  return 2.0 * ue * loc / (ue + loc);
}

double roc_auc(const std::vector<double>& forget_scores, const std::vector<double>& retain_scores) {
  if (forget_scores.empty() || retain_scores.empty()) throw std::invalid_argument("roc_auc needs both score sets");
  // Rank-sum form: sort all scores once and give tied runs their average rank.
  struct Entry {
    double score;
    bool retain;
  };
  std::vector<Entry> all;
  for (double s : forget_scores) all.push_back({s, false});
  for (double s : retain_scores) all.push_back({s, true});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });
  double retain_rank_sum = 0.0;  // doubled ranks keep tie averages integral
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double doubled_avg = static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].retain) retain_rank_sum += doubled_avg;
    }
    i = j;
  }
  const double nr = static_cast<double>(retain_scores.size());
  const double nf = static_cast<double>(forget_scores.size());
  const double u = retain_rank_sum / 2.0 - nr * (nr + 1.0) / 2.0;
  return u / (nr * nf);
}

template <typename S>
double answer_probability(lm::Model<S>& model, const lm::Tokenizer& tok, const std::string& question,
                          const std::string& answer) {
  const auto n = tok.encode(answer).size();
  if (n == 0) throw std::invalid_argument("answer probability of an empty answer");
  const double lp = static_cast<double>(lm::sequence_logprob(model, tok, question, answer));
  return std::exp(lp / static_cast<double>(n));
}

template double answer_probability<float>(lm::Model<float>&, const lm::Tokenizer&, const std::string&, const std::string&);
template double answer_probability<double>(lm::Model<double>&, const lm::Tokenizer&, const std::string&, const std::string&);

int decode_budget(int hop) { return hop <= 1 ? 8 : hop == 2 ? 12 : 16; }

std::vector<ProbeOutcome> run_probes(lm::Model<float>& model, const lm::Tokenizer& tok,
                                     const std::vector<bench::Probe>& probes, bool icu) {
  std::vector<std::string> questions;
  std::vector<int> budgets;
  for (const auto& p : probes) {
    questions.push_back(icu ? unlearn::icu_wrap(p.question) : p.question);
    budgets.push_back(decode_budget(p.hop));
  }
  const auto outputs = lm::generate_answers(model, tok, questions, budgets);
  std::vector<ProbeOutcome> out;
  out.reserve(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    out.push_back(ProbeOutcome{probes[i], outputs[i], rouge_l(outputs[i], probes[i].answer).recall});
  }
  return out;
}

bool in_knowledge_neighborhood(bench::ProbeType t) {
  using bench::ProbeType;
  return t == ProbeType::Paraphrase || t == ProbeType::Inverse || t == ProbeType::TwoHop ||
         t == ProbeType::ThreeHop;
}

double kcs_of(const std::vector<ProbeOutcome>& outcomes) {
  std::vector<double> r;
  for (const auto& o : outcomes) {
    if (in_knowledge_neighborhood(o.probe.type)) r.push_back(o.recall);
  }
  if (r.empty()) throw std::invalid_argument("knowledge neighborhood is empty");
  return mean_or_nan(r);
}

MetricsReport summarize(const std::vector<ProbeOutcome>& outcomes, double kcs_pre) {
  using bench::ProbeType;
  std::vector<double> direct, para, inv, multi, retain;
  std::vector<std::string> outputs;
  for (const auto& o : outcomes) {
    outputs.push_back(o.output);
    if (o.probe.split == bench::Split::RetainEval) {
      retain.push_back(o.recall);
      continue;
    }
    if (o.probe.split != bench::Split::ForgetEval) continue;
    switch (o.probe.type) {
      case ProbeType::Direct: direct.push_back(o.recall); break;
      case ProbeType::Paraphrase: para.push_back(o.recall); break;
      case ProbeType::Inverse: inv.push_back(o.recall); break;
      case ProbeType::TwoHop:
      case ProbeType::ThreeHop: multi.push_back(o.recall); break;
      case ProbeType::Retain: break;
    }
  }
  MetricsReport r;
  r.ue_direct = 1.0 - mean_or_nan(direct);
  r.ue_paraphrase = 1.0 - mean_or_nan(para);
  r.ue_inverse = 1.0 - mean_or_nan(inv);
  r.ue_multi_hop = 1.0 - mean_or_nan(multi);
  r.locality = mean_or_nan(retain);
  r.kcs_pre = kcs_pre;
  r.kcs_post = kcs_of(outcomes);
  r.delta_kcs = delta_kcs(kcs_pre, r.kcs_post);
  r.refusal_rate = refusal_rate(outputs);
  r.hmean = harmonic_mean(r.ue_direct, r.locality);
  return r;
}

}  // namespace kgf::eval
