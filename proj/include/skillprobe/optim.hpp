#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace skillprobe {

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with bias-corrected moments and decoupled weight decay.
class AdamW {
 public:
  AdamW(std::size_t n, AdamWConfig cfg);

  void step(std::span<double> params, std::span<const double> grads);
  std::size_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// Scales `grads` in place so its L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_grad_norm(std::span<double> grads, double max_norm);

}  // namespace skillprobe
