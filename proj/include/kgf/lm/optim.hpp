#pragma once

#include <cstdint>
#include <vector>

#include "kgf/lm/model.hpp"

namespace kgf::lm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam over one flat parameter buffer.
template <typename S>
class AdamW {
 public:
  AdamW(std::size_t n, AdamWConfig config);

  /// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
  void step(Buffer<S>& params, const Buffer<S>& grads);

  void set_lr(double lr) { config_.lr = lr; }
  const AdamWConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }

 private:
  AdamWConfig config_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

/// Scales `grads` in place so its L2 norm is at most max_norm; returns the norm before clipping.
template <typename S>
double clip_grad_norm(Buffer<S>& grads, double max_norm);

template <typename S>
double l2_norm(const Buffer<S>& v);

}  // namespace kgf::lm
