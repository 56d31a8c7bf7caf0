#include "kgf/eval/boundary.hpp"

#include <cmath>
#include <stdexcept>

#include "kgf/eval/metrics.hpp"
#include "kgf/unlearn/trainer.hpp"

namespace kgf::eval {
namespace {

constexpr std::size_t kBatch = 128;

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

AnswerScores score_answers(lm::Model<float>& policy, lm::Model<float>* reference, const lm::Tokenizer& tok,
                           const std::vector<lm::TextPair>& pairs) {
  AnswerScores out;
  const lm::ForwardOptions opts{false, false, reference != nullptr, 0};
  for (std::size_t s = 0; s < pairs.size(); s += kBatch) {
    std::vector<lm::Example> batch;
    for (std::size_t i = s; i < std::min(pairs.size(), s + kBatch); ++i) {
      batch.push_back(unlearn::scored_example(tok, pairs[i].question, pairs[i].answer));
    }
    const auto p = policy.forward(batch, opts);
    lm::BatchOutput<float> r;
    if (reference) r = reference->forward(batch, opts);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const double lp = p.seq_logprob[b];
      const auto n = static_cast<double>(p.answer_len[b]);
      out.logprob.push_back(lp);
      out.mean_logprob.push_back(lp / n);
      if (!reference) continue;
      double kl = 0.0;
      for (std::size_t row = p.answer_rows[b]; row < p.answer_rows[b] + p.answer_len[b]; ++row) {
        const auto lpp = p.log_probs.row(static_cast<Eigen::Index>(row)).template cast<double>();
        const auto lpr = r.log_probs.row(static_cast<Eigen::Index>(row)).template cast<double>();
        kl += (lpp.array().exp() * (lpp - lpr).array()).sum();
      }
      out.kl.push_back(std::max(0.0, kl / n));
    }
  }
  return out;
}

BoundaryReport boundary_report(lm::Model<float>& policy, lm::Model<float>& reference, const lm::Tokenizer& tok,
                               const std::vector<lm::TextPair>& forget, const std::vector<lm::TextPair>& retain,
                               const std::vector<lm::TextPair>& neighbors, double epsilon) {
  if (forget.empty() || retain.empty() || neighbors.empty()) {
    throw std::invalid_argument("boundary report needs forget, retain and neighbor probes");
  }
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  if (!(policy.config() == reference.config())) throw std::invalid_argument("policy and reference architectures differ");
  BoundaryReport rep;
  rep.epsilon = epsilon;
  const auto f = score_answers(policy, &reference, tok, forget);
  const auto r = score_answers(policy, nullptr, tok, retain);
  const auto n = score_answers(policy, &reference, tok, neighbors);
  const auto n_ref = score_answers(reference, nullptr, tok, neighbors);
  std::vector<double> pf, pr;
  for (double x : f.mean_logprob) pf.push_back(std::exp(x));
  for (double x : r.mean_logprob) pr.push_back(std::exp(x));
  rep.p_forget = mean(pf);
  rep.p_retain = mean(pr);
  rep.ratio = rep.p_retain / rep.p_forget;
  rep.logprob_gap = mean(r.mean_logprob) - mean(f.mean_logprob);
  rep.roc_auc = roc_auc(pf, pr);
  rep.mean_kl_forget = mean(f.kl);
  rep.mean_kl_neighbor = mean(n.kl);
  std::size_t within = 0;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    if (std::abs(n.logprob[i] - n_ref.logprob[i]) <= epsilon) ++within;
  }
  rep.neighbor_within_epsilon_fraction = static_cast<double>(within) / static_cast<double>(neighbors.size());
  return rep;
}

}  // namespace kgf::eval
