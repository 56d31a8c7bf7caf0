#include "kgf/eval/drift.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kgf/unlearn/trainer.hpp"

namespace kgf::eval {
namespace {

constexpr double kDependentTolerance = 1e-10;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double mean_drift(lm::Model<float>& pre, lm::Model<float>& post, const lm::Tokenizer& tok,
                  const std::vector<std::string>& prompts) {
  if (prompts.empty()) return 0.0;
  std::vector<std::vector<int>> ids;
  for (const auto& q : prompts) ids.push_back(lm::encode_prompt(tok, q));
  const auto a = pre.final_hidden(ids);
  const auto b = post.final_hidden(ids);
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += (b.row(i) - a.row(i)).template cast<double>().norm();
  return s / static_cast<double>(a.rows());
}

std::vector<double> nll_gradient(lm::Model<float>& m, const lm::Tokenizer& tok, const lm::TextPair& p) {
  auto g = m.make_gradients();
  g.zero();
  m.forward({unlearn::scored_example(tok, p.question, p.answer)}, lm::ForwardOptions{true, false, false, 0});
  m.backward({-1.0f}, g);
  return {g.base.begin(), g.base.end()};
}

}  // namespace

double norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine of vectors with different sizes");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> residual_after_projection(const std::vector<double>& g,
                                              const std::vector<std::vector<double>>& basis) {
  std::vector<std::vector<double>> q;
  for (const auto& v : basis) {
    if (v.size() != g.size()) throw std::invalid_argument("basis vector size mismatch");
    std::vector<double> u = v;
    for (const auto& e : q) {
      const double c = dot(u, e);
      for (std::size_t i = 0; i < u.size(); ++i) u[i] -= c * e[i];
    }
    const double n = norm(u);
    if (n <= kDependentTolerance * std::max(1.0, norm(v))) continue;
    for (double& x : u) x /= n;
    q.push_back(std::move(u));
  }
  std::vector<double> r = g;
  for (const auto& e : q) {
    const double c = dot(r, e);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= c * e[i];
  }
  return r;
}

DriftReport drift_report(const lm::Model<float>& pre, const lm::Model<float>& post, const lm::Tokenizer& tok,
                         const std::vector<std::string>& target_prompts,
                         const std::vector<std::string>& neighbor_prompts,
                         const std::vector<std::string>& distant_prompts,
                         const std::vector<GradientProbe>& gradient_probes) {
  if (!(pre.config() == post.config())) throw std::invalid_argument("drift report needs matching architectures");
  lm::Model<float> a = pre;
  lm::Model<float> b = post;
  DriftReport rep;
  rep.drift_target = mean_drift(a, b, tok, target_prompts);
  rep.drift_neighbor = mean_drift(a, b, tok, neighbor_prompts);
  rep.drift_distant = mean_drift(a, b, tok, distant_prompts);
  if (gradient_probes.empty()) return rep;

  lm::Model<float> base = pre;
  if (base.has_adapters()) base.merge_adapters();
  base.set_base_trainable(true);
  for (const auto& gp : gradient_probes) {
    if (gp.weights.size() != gp.neighbors.size()) throw std::invalid_argument("one weight per neighbor");
    const auto gf = nll_gradient(base, tok, gp.forget);
    std::vector<std::vector<double>> gn;
    std::vector<double> anchor(gf.size(), 0.0);
    for (std::size_t n = 0; n < gp.neighbors.size(); ++n) {
      gn.push_back(nll_gradient(base, tok, gp.neighbors[n]));
      for (std::size_t i = 0; i < anchor.size(); ++i) anchor[i] += gp.weights[n] * gn.back()[i];
    }
    rep.gradient_cosine += cosine(gf, anchor);
    rep.forget_grad_norm += norm(gf);
    rep.residual_norm += norm(residual_after_projection(gf, gn));
  }
  const double n = static_cast<double>(gradient_probes.size());
  rep.gradient_cosine /= n;
  rep.forget_grad_norm /= n;
  rep.residual_norm /= n;
  return rep;
}

}  // namespace kgf::eval
