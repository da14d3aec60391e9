#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dpn/autograd.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

struct BalanceStats {
  double beta = 0.0;  // N- / (N+ + N-)
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Fraction of background pixels in a binary label (values > 0.5 count as vessel).
/// Throws std::invalid_argument on an empty label.
template <typename T>
BalanceStats balance_weight(const BasicTensor<T>& label);

/// Class-balanced cross-entropy evaluated on logits (sigmoid folded into a
/// stable log-sum): beta * sum_{y=1} -log p + (1 - beta) * sum_{y=0} -log(1 - p).
template <typename T>
double class_balanced_bce(const BasicTensor<T>& logits, const BasicTensor<T>& label, double beta);

/// Same loss on probabilities in (0, 1); probabilities are clamped away from 0 and 1.
template <typename T>
double class_balanced_bce_prob(const BasicTensor<T>& prob, const BasicTensor<T>& label, double beta);

struct LossReport {
  std::vector<double> head_losses;
  double data_loss = 0.0;   // sum of head losses
  double decay_term = 0.0;  // (lambda / 2) * ||theta||^2, applied by the optimizer
  double total = 0.0;       // data_loss + decay_term
  double beta = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

struct Objective {
  Var loss;  // differentiable sum of head losses
  LossReport report;
};

/// Sum of the class-balanced losses of every head with one beta computed from
/// the label. expected_heads (when nonzero) guards against config mismatches.
template <typename T>
Objective total_objective(BasicTape<T>& tape, std::span<const Var> heads, const BasicTensor<T>& label, double lambda,
                          std::span<const BasicParam<T>* const> params, std::size_t expected_heads = 0);

}  // namespace dpn
