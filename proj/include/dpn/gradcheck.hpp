#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "dpn/autograd.hpp"

namespace dpn {

struct GradCheckOptions {
  double step = 1e-5;
  std::uint64_t seed = 0;
  /// Coordinates sampled per parameter; parameters with fewer elements are checked exhaustively.
  std::size_t coords_per_param = 50;
};

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates replaced because the +-h stencil crossed a ReLU or maxpool switch.
  std::size_t skipped = 0;
  bool finite = true;
  std::string worst;  // "<param>[<index>]" of the largest absolute error

  [[nodiscard]] bool passed(double tolerance) const { return finite && max_abs_error <= tolerance; }
};

/// Rebuilds the loss graph on a fresh tape; called once for the analytic pass
/// and twice per checked coordinate.
using LossBuilder = std::function<Var(TapeD&)>;

/// Compares reverse-mode gradients with central differences (f(p+h) - f(p-h)) / 2h
/// in double precision. A coordinate whose perturbed passes take a different
/// ReLU/maxpool branch than the unperturbed one is not differentiable across
/// the stencil; it is skipped and the next sampled coordinate is used instead.
GradCheckReport grad_check(const LossBuilder& build, std::span<ParamD* const> params, const GradCheckOptions& options);

}  // namespace dpn
