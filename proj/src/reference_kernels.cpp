#include "dpn/reference_kernels.hpp"

#include <array>
#include <string>

namespace dpn::ref {

namespace {

constexpr std::array<double, 4> kBilinear{0.25, 0.75, 0.75, 0.25};

}  // namespace

template <typename T>
BasicTensor<T> conv3x3(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> bias) {
  const Shape s = input.shape();
  if (weight.c() != s.c || weight.h() != 3 || weight.w() != 3 || bias.size() != weight.n()) {
    throw ShapeError("ref::conv3x3: weight " + weight.shape().str() + " incompatible with input " + s.str());
  }
  const auto H = static_cast<std::ptrdiff_t>(s.h), W = static_cast<std::ptrdiff_t>(s.w);
  BasicTensor<T> out(Shape{s.n, weight.n(), s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < weight.n(); ++o)
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          T acc = bias[o];
          for (std::size_t i = 0; i < s.c; ++i)
            for (std::ptrdiff_t dy = 0; dy < 3; ++dy)
              for (std::ptrdiff_t dx = 0; dx < 3; ++dx) {
                const std::ptrdiff_t yy = y + dy - 1, xx = x + dx - 1;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += weight(o, i, dy, dx) * input(n, i, yy, xx);
              }
          out(n, o, y, x) = acc;
        }
  return out;
}

template <typename T>
BasicTensor<T> conv3x3_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight) {
  const Shape s = grad_out.shape();
  const auto H = static_cast<std::ptrdiff_t>(s.h), W = static_cast<std::ptrdiff_t>(s.w);
  BasicTensor<T> out(Shape{s.n, weight.c(), s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < weight.n(); ++o)
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          const T g = grad_out(n, o, y, x);
          for (std::size_t i = 0; i < weight.c(); ++i)
            for (std::ptrdiff_t dy = 0; dy < 3; ++dy)
              for (std::ptrdiff_t dx = 0; dx < 3; ++dx) {
                const std::ptrdiff_t yy = y + dy - 1, xx = x + dx - 1;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                out(n, i, yy, xx) += weight(o, i, dy, dx) * g;
              }
        }
  return out;
}

template <typename T>
void conv3x3_grad_params(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_weight,
                         std::span<T> grad_bias) {
  const Shape s = input.shape();
  const auto H = static_cast<std::ptrdiff_t>(s.h), W = static_cast<std::ptrdiff_t>(s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < grad_out.c(); ++o)
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          const T g = grad_out(n, o, y, x);
          grad_bias[o] += g;
          for (std::size_t i = 0; i < s.c; ++i)
            for (std::ptrdiff_t dy = 0; dy < 3; ++dy)
              for (std::ptrdiff_t dx = 0; dx < 3; ++dx) {
                const std::ptrdiff_t yy = y + dy - 1, xx = x + dx - 1;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                grad_weight(o, i, dy, dx) += g * input(n, i, yy, xx);
              }
        }
}

template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, int k, PoolResult* record) {
  const Shape s = input.shape();
  const auto uk = static_cast<std::size_t>(k);
  if (k < 1 || s.h % uk != 0 || s.w % uk != 0) throw ShapeError("ref::maxpool: indivisible input " + s.str());
  BasicTensor<T> out(Shape{s.n, s.c, s.h / uk, s.w / uk});
  if (record) record->argmax.assign(out.size(), 0);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t oy = 0; oy < out.h(); ++oy)
        for (std::size_t ox = 0; ox < out.w(); ++ox) {
          std::size_t best = input.offset(n, c, oy * uk, ox * uk);
          for (std::size_t dy = 0; dy < uk; ++dy)
            for (std::size_t dx = 0; dx < uk; ++dx) {
              const std::size_t idx = input.offset(n, c, oy * uk + dy, ox * uk + dx);
              if (input[idx] > input[best]) best = idx;
            }
          out(n, c, oy, ox) = input[best];
          if (record) record->argmax[out.offset(n, c, oy, ox)] = static_cast<std::uint32_t>(best);
        }
  return out;
}

template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& input) {
  const Shape s = input.shape();
  BasicTensor<T> out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  const auto OH = static_cast<std::ptrdiff_t>(out.h()), OW = static_cast<std::ptrdiff_t>(out.w());
  // Scatter form of a transposed convolution: input (iy, ix) lands on
  // output (2*iy - 1 + ky, 2*ix - 1 + kx).
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t iy = 0; iy < s.h; ++iy)
        for (std::size_t ix = 0; ix < s.w; ++ix)
          for (std::ptrdiff_t ky = 0; ky < 4; ++ky)
            for (std::ptrdiff_t kx = 0; kx < 4; ++kx) {
              const std::ptrdiff_t oy = 2 * static_cast<std::ptrdiff_t>(iy) - 1 + ky;
              const std::ptrdiff_t ox = 2 * static_cast<std::ptrdiff_t>(ix) - 1 + kx;
              if (oy < 0 || oy >= OH || ox < 0 || ox >= OW) continue;
              out(n, c, oy, ox) += static_cast<T>(kBilinear[ky] * kBilinear[kx]) * input(n, c, iy, ix);
            }
  return out;
}

template <typename T>
BasicTensor<T> upsample2x_grad(const BasicTensor<T>& grad_out) {
  const Shape s = grad_out.shape();
  BasicTensor<T> out(Shape{s.n, s.c, s.h / 2, s.w / 2});
  const auto OH = static_cast<std::ptrdiff_t>(s.h), OW = static_cast<std::ptrdiff_t>(s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t iy = 0; iy < out.h(); ++iy)
        for (std::size_t ix = 0; ix < out.w(); ++ix) {
          T acc{0};
          for (std::ptrdiff_t ky = 0; ky < 4; ++ky)
            for (std::ptrdiff_t kx = 0; kx < 4; ++kx) {
              const std::ptrdiff_t oy = 2 * static_cast<std::ptrdiff_t>(iy) - 1 + ky;
              const std::ptrdiff_t ox = 2 * static_cast<std::ptrdiff_t>(ix) - 1 + kx;
              if (oy < 0 || oy >= OH || ox < 0 || ox >= OW) continue;
              acc += static_cast<T>(kBilinear[ky] * kBilinear[kx]) * grad_out(n, c, oy, ox);
            }
          out(n, c, iy, ix) = acc;
        }
  return out;
}

#define DPN_INSTANTIATE_REF(T)                                                                            \
  template BasicTensor<T> conv3x3<T>(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>);   \
  template BasicTensor<T> conv3x3_grad_input<T>(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template void conv3x3_grad_params<T>(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&,    \
                                       std::span<T>);                                                    \
  template BasicTensor<T> maxpool<T>(const BasicTensor<T>&, int, PoolResult*);                            \
  template BasicTensor<T> upsample2x<T>(const BasicTensor<T>&);                                           \
  template BasicTensor<T> upsample2x_grad<T>(const BasicTensor<T>&);

DPN_INSTANTIATE_REF(float)
DPN_INSTANTIATE_REF(double)

#undef DPN_INSTANTIATE_REF

}  // namespace dpn::ref
