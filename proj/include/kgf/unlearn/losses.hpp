#pragma once

#include <vector>

namespace kgf::unlearn {

/// Numerically stable log(1 + e^x) and logistic function.
double softplus(double x);
double sigmoid(double x);

/// -log sigma(-beta * h), h = log pi_theta(y|x) - log pi_0(y|x).
double loss_npo(double h, double beta);
/// d loss_npo / dh = beta * sigma(beta * h).
double loss_npo_grad(double h, double beta);

/// sum_n w_n * nll_n
double loss_anchor(const std::vector<double>& nll, const std::vector<double>& weights);

struct LossTerms {
  double forget = 0.0;
  double anchor = 0.0;
  double retain = 0.0;
  double total = 0.0;
};

/// npo + lambda * anchor + mu * retain
LossTerms loss_neds(double npo, double anchor, double retain, double lambda, double mu);

/// -forget_ce + gamma * retain_ce
double loss_ga(double forget_ce, double retain_ce, double gamma);

/// refusal_ce + retain_ce (the retain term is absent for an empty batch)
double loss_gd(double refusal_ce, const std::vector<double>& retain_ce);

/// -log sigma(beta * (delta_preferred - delta_dispreferred))
double loss_uldpo(double delta_preferred, double delta_dispreferred, double beta);
/// d loss_uldpo / d delta_preferred (the dispreferred derivative is its negation).
double loss_uldpo_grad(double delta_preferred, double delta_dispreferred, double beta);

double mean(const std::vector<double>& v);

}  // namespace kgf::unlearn
