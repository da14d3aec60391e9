#include "dpn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dpn {

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const LossBuilder& build) {
  TapeD tape;
  const Var loss = build(tape);
  return {tape.value(loss)[0], tape.branch_signature()};
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::span<ParamD* const> params, const GradCheckOptions& options) {
  GradCheckReport report;
  for (ParamD* p : params) p->zero_grad();
  std::uint64_t base_signature = 0;
  {
    TapeD tape;
    const Var loss = build(tape);
    if (!std::isfinite(tape.value(loss)[0])) {
      report.finite = false;
      return report;
    }
    base_signature = tape.branch_signature();
    tape.backward(loss);
  }

  std::mt19937_64 rng(options.seed);
  const double h = options.step;
  for (ParamD* p : params) {
    std::vector<std::size_t> coords(p->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.coords_per_param) std::shuffle(coords.begin(), coords.end(), rng);
    std::size_t checked = 0;
    for (std::size_t idx : coords) {
      if (checked == options.coords_per_param) break;
      const double saved = p->value[idx];
      p->value[idx] = saved + h;
      const Evaluation ep = evaluate(build);
      p->value[idx] = saved - h;
      const Evaluation em = evaluate(build);
      p->value[idx] = saved;
      if (ep.signature != base_signature || em.signature != base_signature) {
        ++report.skipped;
        continue;
      }
      ++checked;
      const double plus = ep.value, minus = em.value;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        report.finite = false;
        return report;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = p->grad[idx];
      const double abs_err = std::abs(numeric - analytic);
      const double rel_err = abs_err / std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      ++report.coordinates;
      if (abs_err > report.max_abs_error) {
        report.max_abs_error = abs_err;
        report.worst = p->name + "[" + std::to_string(idx) + "]";
      }
      report.max_rel_error = std::max(report.max_rel_error, rel_err);
    }
  }
  return report;
}

}  // namespace dpn
