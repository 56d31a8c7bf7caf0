#include "kgf/lm/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "kgf/lm/model.hpp"

namespace kgf::lm {

template <typename S>
AdamW<S>::AdamW(std::size_t n, AdamWConfig config) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

template <typename S>
void AdamW<S>::step(Buffer<S>& params, const Buffer<S>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("AdamW: parameter and gradient sizes must match the optimizer");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.lr, wd = config_.weight_decay, eps = config_.eps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    double p = static_cast<double>(params[i]);
    p -= lr * wd * p;
    p -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    if (!std::isfinite(p)) throw NumericError("non-finite parameter after AdamW step");
    params[i] = static_cast<S>(p);
  }
}

template <typename S>
double l2_norm(const Buffer<S>& v) {
  double s = 0.0;
  for (S x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

template <typename S>
double clip_grad_norm(Buffer<S>& grads, double max_norm) {
  const double norm = l2_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<S>(max_norm / norm);
    for (S& g : grads) g *= scale;
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm<float>(Buffer<float>&, double);
template double clip_grad_norm<double>(Buffer<double>&, double);
template double l2_norm<float>(const Buffer<float>&);
template double l2_norm<double>(const Buffer<double>&);

}  // namespace kgf::lm
