#include "kgf/unlearn/losses.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kgf::unlearn {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double loss_npo(double h, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
  return softplus(beta * h);
}

double loss_npo_grad(double h, double beta) { return beta * sigmoid(beta * h); }

double loss_anchor(const std::vector<double>& nll, const std::vector<double>& weights) {
  if (nll.size() != weights.size()) throw std::invalid_argument("one weight per neighbor");
  double s = 0.0;
  for (std::size_t i = 0; i < nll.size(); ++i) s += weights[i] * nll[i];
  return s;
}

LossTerms loss_neds(double npo, double anchor, double retain, double lambda, double mu) {
  return LossTerms{npo, anchor, retain, npo + lambda * anchor + mu * retain};
}

double loss_ga(double forget_ce, double retain_ce, double gamma) { return -forget_ce + gamma * retain_ce; }

double loss_gd(double refusal_ce, const std::vector<double>& retain_ce) {
  return retain_ce.empty() ? refusal_ce : refusal_ce + mean(retain_ce);
}

double loss_uldpo(double delta_preferred, double delta_dispreferred, double beta) {
  return softplus(-beta * (delta_preferred - delta_dispreferred));
}

double loss_uldpo_grad(double delta_preferred, double delta_dispreferred, double beta) {
  return -beta * sigmoid(-beta * (delta_preferred - delta_dispreferred));
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty list");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace kgf::unlearn
