#pragma once

#include <string>
#include <vector>

#include "kgf/lm/corpus.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/tokenizer.hpp"

namespace kgf::eval {

struct DriftReport {
  double drift_target = 0.0;  // mean ||z_post - z_pre|| per probe group
  double drift_neighbor = 0.0;
  double drift_distant = 0.0;
  double gradient_cosine = 0.0;   // mean over targets of cos(g_forget, sum_n w_n g_n)
  double forget_grad_norm = 0.0;  // mean ||g_forget||
  double residual_norm = 0.0;     // mean ||g_forget|| left after removing the neighbor-gradient span
};

/// One target's forget probe with its weighted neighbor probes.
struct GradientProbe {
  lm::TextPair forget;
  std::vector<lm::TextPair> neighbors;
  std::vector<double> weights;
};

/// Representation drift at the last prompt token per group, and gradient
/// alignment measured on the pre-unlearning base weights. Gradients are of
/// the answer negative log-likelihood.
DriftReport drift_report(const lm::Model<float>& pre, const lm::Model<float>& post, const lm::Tokenizer& tok,
                         const std::vector<std::string>& target_prompts,
                         const std::vector<std::string>& neighbor_prompts,
                         const std::vector<std::string>& distant_prompts,
                         const std::vector<GradientProbe>& gradient_probes);

double cosine(const std::vector<double>& a, const std::vector<double>& b);
/// g minus its projection onto the Gram-Schmidt orthonormalization of `basis`.
std::vector<double> residual_after_projection(const std::vector<double>& g,
                                              const std::vector<std::vector<double>>& basis);
double norm(const std::vector<double>& v);

}  // namespace kgf::eval
