#include "skillprobe/optim.hpp"

#include <cmath>

#include "skillprobe/error.hpp"
#include "skillprobe/kernels.hpp"

namespace skillprobe {

AdamW::AdamW(std::size_t n, AdamWConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
  if (!(cfg.lr > 0.0)) fail(ErrorCode::kInvalidArgument, "learning rate must be > 0");
}

void AdamW::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    fail(ErrorCode::kShapeError, "optimizer state does not match parameter count");
  }
  ++t_;
  const double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double mhat = m_[i] / b1t;
    const double vhat = v_[i] / b2t;
    params[i] -= cfg_.lr * cfg_.weight_decay * params[i];
    params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  const double norm = std::sqrt(kernels::dot(grads, grads));
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

}  // namespace skillprobe
