#include "dpn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dpn/kernels.hpp"

namespace dpn {

template <typename T>
BalanceStats balance_weight(const BasicTensor<T>& label) {
  if (label.empty()) throw std::invalid_argument("balance_weight: empty label");
  BalanceStats s;
  for (T v : label.data()) {
    if (v > T(0.5)) ++s.n_pos;
    else ++s.n_neg;
  }
  s.beta = static_cast<double>(s.n_neg) / static_cast<double>(s.n_pos + s.n_neg);
  return s;
}

namespace {

void check_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": prediction " + a.str() + " vs label " + b.str());
}

}  // namespace

template <typename T>
double class_balanced_bce(const BasicTensor<T>& logits, const BasicTensor<T>& label, double beta) {
  check_same(logits.shape(), label.shape(), "class_balanced_bce");
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    if (label[i] > T(0.5)) pos += softplus(-z);
    else neg += softplus(z);
  }
  return beta * pos + (1.0 - beta) * neg;
}

template <typename T>
double class_balanced_bce_prob(const BasicTensor<T>& prob, const BasicTensor<T>& label, double beta) {
  check_same(prob.shape(), label.shape(), "class_balanced_bce_prob");
  constexpr double kEps = 1e-12;
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = std::clamp(static_cast<double>(prob[i]), kEps, 1.0 - kEps);
    if (label[i] > T(0.5)) pos -= std::log(p);
    else neg -= std::log1p(-p);
  }
  return beta * pos + (1.0 - beta) * neg;
}

template <typename T>
Objective total_objective(BasicTape<T>& tape, std::span<const Var> heads, const BasicTensor<T>& label, double lambda,
                          std::span<const BasicParam<T>* const> params, std::size_t expected_heads) {
  if (heads.empty()) throw std::invalid_argument("total_objective: no heads");
  if (expected_heads != 0 && heads.size() != expected_heads) {
    throw std::invalid_argument("total_objective: got " + std::to_string(heads.size()) + " heads, expected " +
                                std::to_string(expected_heads));
  }
  const BalanceStats stats = balance_weight(label);
  Objective obj;
  obj.report.beta = stats.beta;
  obj.report.n_pos = stats.n_pos;
  obj.report.n_neg = stats.n_neg;
  Var total{};
  for (std::size_t i = 0; i < heads.size(); ++i) {
    check_same(tape.value(heads[i]).shape(), label.shape(), "total_objective");
    const Var l = tape.balanced_bce(heads[i], label, static_cast<T>(stats.beta));
    obj.report.head_losses.push_back(static_cast<double>(tape.value(l)[0]));
    total = i == 0 ? l : tape.add(total, l);
  }
  obj.loss = total;
  obj.report.data_loss = static_cast<double>(tape.value(total)[0]);
  double sq = 0.0;
  for (const BasicParam<T>* p : params) {
    for (T v : p->value.data()) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  obj.report.decay_term = 0.5 * lambda * sq;
  obj.report.total = obj.report.data_loss + obj.report.decay_term;
  return obj;
}

#define DPN_INSTANTIATE_LOSS(T)                                                                           \
  template BalanceStats balance_weight<T>(const BasicTensor<T>&);                                        \
  template double class_balanced_bce<T>(const BasicTensor<T>&, const BasicTensor<T>&, double);           \
  template double class_balanced_bce_prob<T>(const BasicTensor<T>&, const BasicTensor<T>&, double);      \
  template Objective total_objective<T>(BasicTape<T>&, std::span<const Var>, const BasicTensor<T>&, double, \
                                        std::span<const BasicParam<T>* const>, std::size_t);

DPN_INSTANTIATE_LOSS(float)
DPN_INSTANTIATE_LOSS(double)

#undef DPN_INSTANTIATE_LOSS

}  // namespace dpn
