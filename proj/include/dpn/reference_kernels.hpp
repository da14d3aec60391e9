#pragma once

// Straightforward serial loop versions of the heavy kernels. They are kept for
// testing the OpenMP kernels in kernels.hpp and as the baseline of the kernel
// benchmark; nothing on the production path calls them.

#include <span>

#include "dpn/kernels.hpp"
#include "dpn/tensor.hpp"

namespace dpn::ref {

template <typename T>
BasicTensor<T> conv3x3(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> bias);

template <typename T>
BasicTensor<T> conv3x3_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight);

template <typename T>
void conv3x3_grad_params(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_weight,
                         std::span<T> grad_bias);

template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, int k, PoolResult* record = nullptr);

/// Transposed convolution with the explicit 4x4 bilinear kernel (stride 2, pad 1).
template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> upsample2x_grad(const BasicTensor<T>& grad_out);

}  // namespace dpn::ref
