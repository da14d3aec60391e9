#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpn/gradcheck.hpp"

namespace dpn {

struct GradCase {
  std::string name;
  GradCheckReport report;
  double tolerance = 1e-4;
  [[nodiscard]] bool passed() const { return report.passed(tolerance); }
};

inline constexpr double kKernelGradTolerance = 1e-4;
inline constexpr double kNetworkGradTolerance = 1e-3;

/// Double-precision central-difference checks of every differentiable op,
/// the balanced loss, DP-Blocks for each branch set and the full four-head
/// network on a 1x3x16x16 input. Inputs and weights are drawn from seed.
std::vector<GradCase> run_grad_suite(std::uint64_t seed, double step = 1e-5);

}  // namespace dpn
