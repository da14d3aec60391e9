#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

#include "dpn/autograd.hpp"

namespace dpn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // coupled L2: added to the gradient before the moments
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One ADAM update at step t (t >= 1). Throws NonFiniteGradient, leaving every
/// parameter untouched, if any gradient is NaN or infinite.
template <typename T>
void adam_step(std::span<BasicParam<T>* const> params, const AdamConfig& cfg, std::uint64_t t);

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}, std::uint64_t step = 0) : cfg_(cfg), step_(step) {}

  template <typename T>
  void step(std::span<BasicParam<T>* const> params) {
    adam_step(params, cfg_, step_ + 1);
    ++step_;
  }

  [[nodiscard]] std::uint64_t steps() const { return step_; }
  [[nodiscard]] const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_;
};

}  // namespace dpn
