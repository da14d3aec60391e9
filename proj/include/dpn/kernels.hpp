#pragma once

// Forward and adjoint kernels for the network. All are pure functions of their
// arguments. The heavy ones (3x3 convolution and its adjoints) are
// OpenMP-parallel over independent output elements, so results are identical
// for every thread count. Serial reference versions live in reference_kernels.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dpn/tensor.hpp"

namespace dpn {

struct PoolResult {
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
struct Padded {
  BasicTensor<T> tensor;
  Shape original;
};

// -- convolution -------------------------------------------------------------

/// 3x3, stride 1, zero padding 1. weight is [Cout, Cin, 3, 3], bias has Cout entries.
template <typename T>
BasicTensor<T> conv3x3(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> bias);

/// Adjoint of conv3x3 with respect to its input.
template <typename T>
BasicTensor<T> conv3x3_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight);

/// Accumulates d(loss)/d(weight) and d(loss)/d(bias) into grad_weight / grad_bias.
template <typename T>
void conv3x3_grad_params(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_weight,
                         std::span<T> grad_bias);

/// 1x1 convolution; weight is [Cout, Cin, 1, 1].
template <typename T>
BasicTensor<T> conv1x1(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> bias);

template <typename T>
BasicTensor<T> conv1x1_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight);

template <typename T>
void conv1x1_grad_params(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_weight,
                         std::span<T> grad_bias);

// -- resampling ----------------------------------------------------------------

/// Non-overlapping k x k max pooling (kernel == stride). Ties resolve to the
/// first maximal element in row-major window order.
template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, int k, PoolResult* record = nullptr);

template <typename T>
BasicTensor<T> maxpool_grad(const BasicTensor<T>& grad_out, const PoolResult& record, const Shape& input_shape);

/// Fixed bilinear transposed convolution (kernel 4, stride 2, pad 1), per channel.
template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> upsample2x_grad(const BasicTensor<T>& grad_out);

// -- elementwise / structural --------------------------------------------------

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Splits a gradient of concat(a, b) back into the parts for a and b.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& grad, std::size_t channels_a);

template <typename T>
BasicTensor<T> relu(BasicTensor<T> input);

template <typename T>
BasicTensor<T> sigmoid(BasicTensor<T> input);

/// Zero-pads right/bottom so H and W become multiples of m.
template <typename T>
Padded<T> pad_to_multiple(const BasicTensor<T>& input, std::size_t m);

/// Keeps the top-left height x width window.
template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& input, std::size_t height, std::size_t width);

/// Numerically stable logistic function.
template <typename T>
inline T stable_sigmoid(T v) {
  if (v >= T{0}) {
    const T e = std::exp(-v);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(v);
  return e / (T{1} + e);
}

/// log(1 + exp(v)) without overflow.
template <typename T>
inline T softplus(T v) {
  return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v)));
}

/// Sets the OpenMP worker count used by the parallel kernels (no-op without OpenMP).
void set_kernel_threads(int threads);
int kernel_threads();

}  // namespace dpn
