#include "dpn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dpn {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w) + "]";
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

void set_kernel_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, threads));
#else
  (void)threads;
#endif
}

int kernel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

constexpr int kOutBlock = 4;   // output channels sharing one pass over the input rows
constexpr int kXBlock = 32;    // columns held in the accumulator tile
constexpr int kGradXBlock = 16;

[[noreturn]] void fail(const std::string& op, const std::string& what) { throw ShapeError(op + ": " + what); }

void expect(bool ok, const std::string& op, const std::string& what) {
  if (!ok) fail(op, what);
}

/// Copies every plane into an (H+2)x(W+2) frame with a zero border.
template <typename T>
std::vector<T> pad_border(const BasicTensor<T>& in) {
  const std::size_t H = in.h(), W = in.w(), pw = W + 2, pplane = (H + 2) * pw;
  std::vector<T> out(in.n() * in.c() * pplane, T{0});
  const std::size_t planes = in.n() * in.c();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(planes); ++p) {
    const T* src = in.data().data() + p * H * W;
    T* dst = out.data() + p * pplane + pw + 1;
    for (std::size_t y = 0; y < H; ++y) std::memcpy(dst + y * pw, src + y * W, W * sizeof(T));
  }
  return out;
}

/// out[o] = bias[o] + sum_i sum_k w[o,i,k] * padded[i] shifted by tap k.
/// padded holds cin planes of (H+2)x(W+2) for one batch item.
template <typename T>
void conv3x3_planes(const T* padded, std::size_t cin, std::size_t H, std::size_t W, const T* weight,
                    const T* bias, std::size_t cout, T* out) {
  const std::size_t pw = W + 2, pplane = (H + 2) * pw;
  const std::ptrdiff_t oblocks = static_cast<std::ptrdiff_t>((cout + kOutBlock - 1) / kOutBlock);
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(H);

#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t ob = 0; ob < oblocks; ++ob) {
    for (std::ptrdiff_t y = 0; y < rows; ++y) {
      const std::size_t o0 = static_cast<std::size_t>(ob) * kOutBlock;
      const std::size_t on = std::min<std::size_t>(kOutBlock, cout - o0);
      alignas(64) T acc[kOutBlock][kXBlock];
      T wk[kOutBlock][9];
      for (std::size_t x0 = 0; x0 < W; x0 += kXBlock) {
        const std::size_t xn = std::min<std::size_t>(kXBlock, W - x0);
        for (int o = 0; o < kOutBlock; ++o) {
          const T b = (static_cast<std::size_t>(o) < on && bias) ? bias[o0 + o] : T{0};
          for (int xx = 0; xx < kXBlock; ++xx) acc[o][xx] = b;
        }
        for (std::size_t i = 0; i < cin; ++i) {
          for (int o = 0; o < kOutBlock; ++o) {
            for (int k = 0; k < 9; ++k) {
              wk[o][k] = static_cast<std::size_t>(o) < on ? weight[((o0 + o) * cin + i) * 9 + k] : T{0};
            }
          }
          const T* r0 = padded + i * pplane + static_cast<std::size_t>(y) * pw + x0;
          const T* r1 = r0 + pw;
          const T* r2 = r1 + pw;
          if (xn == kXBlock) {
#pragma omp simd
            for (int xx = 0; xx < kXBlock; ++xx) {
              const T a0 = r0[xx], a1 = r0[xx + 1], a2 = r0[xx + 2];
              const T b0 = r1[xx], b1 = r1[xx + 1], b2 = r1[xx + 2];
              const T c0 = r2[xx], c1 = r2[xx + 1], c2 = r2[xx + 2];
              for (int o = 0; o < kOutBlock; ++o) {
                acc[o][xx] += wk[o][0] * a0 + wk[o][1] * a1 + wk[o][2] * a2 + wk[o][3] * b0 + wk[o][4] * b1 +
                              wk[o][5] * b2 + wk[o][6] * c0 + wk[o][7] * c1 + wk[o][8] * c2;
              }
            }
          } else {
            for (std::size_t xx = 0; xx < xn; ++xx) {
              const T a0 = r0[xx], a1 = r0[xx + 1], a2 = r0[xx + 2];
              const T b0 = r1[xx], b1 = r1[xx + 1], b2 = r1[xx + 2];
              const T c0 = r2[xx], c1 = r2[xx + 1], c2 = r2[xx + 2];
              for (int o = 0; o < kOutBlock; ++o) {
                acc[o][xx] += wk[o][0] * a0 + wk[o][1] * a1 + wk[o][2] * a2 + wk[o][3] * b0 + wk[o][4] * b1 +
                              wk[o][5] * b2 + wk[o][6] * c0 + wk[o][7] * c1 + wk[o][8] * c2;
              }
            }
          }
        }
        for (std::size_t o = 0; o < on; ++o) {
          std::memcpy(out + (o0 + o) * H * W + static_cast<std::size_t>(y) * W + x0, acc[o], xn * sizeof(T));
        }
      }
    }
  }
}

/// One batch item: pads the cin input planes and runs conv3x3_planes.
template <typename T>
void conv3x3_image(const T* in, std::size_t cin, std::size_t H, std::size_t W, const T* weight, const T* bias,
                   std::size_t cout, T* out) {
  const std::size_t pw = W + 2, pplane = (H + 2) * pw;
  std::vector<T> padded(cin * pplane, T{0});
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t y = 0; y < H; ++y)
      std::memcpy(padded.data() + i * pplane + (y + 1) * pw + 1, in + (i * H + y) * W, W * sizeof(T));
  conv3x3_planes(padded.data(), cin, H, W, weight, bias, cout, out);
}

#if defined(__GNUC__)
// Float path: 8 output channels x 16 columns of accumulators stay in vector
// registers for the whole input-channel loop.
using v16f = float __attribute__((vector_size(64)));
constexpr std::size_t kLanes = 16;
constexpr std::size_t kOuts = 8;

inline v16f load16(const float* p) {
  v16f v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <>
void conv3x3_image<float>(const float* in, std::size_t cin, std::size_t H, std::size_t W, const float* weight,
                          const float* bias, std::size_t cout, float* out) {
  constexpr std::size_t kTile = kLanes;
  // Rows are padded past the last full tile so every 16-wide load stays in bounds.
  const std::size_t pw = (W + kTile - 1) / kTile * kTile + kLanes, pplane = (H + 2) * pw;
  std::vector<float> padded(cin * pplane + kLanes, 0.0f);
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t y = 0; y < H; ++y)
      std::memcpy(padded.data() + i * pplane + (y + 1) * pw + 1, in + (i * H + y) * W, W * sizeof(float));

  const std::size_t oblocks = (cout + kOuts - 1) / kOuts;
  // packed[ob][i][tap][o]
  std::vector<float> packed(oblocks * cin * 9 * kOuts, 0.0f);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < cin; ++i)
      for (std::size_t k = 0; k < 9; ++k)
        packed[((o / kOuts * cin + i) * 9 + k) * kOuts + o % kOuts] = weight[(o * cin + i) * 9 + k];

  const float* pad = padded.data();
  const float* wp = packed.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t ob = 0; ob < static_cast<std::ptrdiff_t>(oblocks); ++ob) {
    for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(H); ++y) {
      const std::size_t o0 = static_cast<std::size_t>(ob) * kOuts;
      const std::size_t on = std::min(kOuts, cout - o0);
      for (std::size_t x0 = 0; x0 < W; x0 += kTile) {
        v16f lo[kOuts];
        for (std::size_t o = 0; o < kOuts; ++o) {
          const float b = (o < on && bias) ? bias[o0 + o] : 0.0f;
          lo[o] = v16f{} + b;
        }
        for (std::size_t i = 0; i < cin; ++i) {
          const float* base = pad + i * pplane + static_cast<std::size_t>(y) * pw + x0;
          const float* wi = wp + (static_cast<std::size_t>(ob) * cin + i) * 9 * kOuts;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const v16f a = load16(base + ky * pw + kx);
              const float* wk = wi + (ky * 3 + kx) * kOuts;
              for (std::size_t o = 0; o < kOuts; ++o) {
                lo[o] += a * wk[o];
              }
            }
          }
        }
        const std::size_t xn = std::min(kTile, W - x0);
        for (std::size_t o = 0; o < on; ++o) {
          float* dst = out + (o0 + o) * H * W + static_cast<std::size_t>(y) * W + x0;
          std::memcpy(dst, &lo[o], xn * sizeof(float));
        }
      }
    }
  }
}
#endif

void check_conv(const Shape& in, const Shape& wt, std::size_t bias_len, std::size_t k, const char* op) {
  expect(wt.h == k && wt.w == k, op, "weight kernel must be " + std::to_string(k) + "x" + std::to_string(k) +
                                         ", got " + wt.str());
  expect(wt.c == in.c, op, "input channels " + std::to_string(in.c) + " != weight in-channels " +
                               std::to_string(wt.c));
  expect(bias_len == wt.n, op, "bias length " + std::to_string(bias_len) + " != out-channels " +
                                   std::to_string(wt.n));
}

}  // namespace

// -- 3x3 convolution ------------------------------------------------------------

template <typename T>
BasicTensor<T> conv3x3(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> bias) {
  check_conv(input.shape(), weight.shape(), bias.size(), 3, "conv3x3");
  const Shape s = input.shape();
  const std::size_t cout = weight.n();
  BasicTensor<T> out(Shape{s.n, cout, s.h, s.w});
  if (out.empty()) return out;
  for (std::size_t n = 0; n < s.n; ++n) {
    conv3x3_image(input.data().data() + n * s.c * s.plane(), s.c, s.h, s.w, weight.data().data(), bias.data(), cout,
                  out.data().data() + n * cout * s.plane());
  }
  return out;
}

template <typename T>
BasicTensor<T> conv3x3_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight) {
  expect(weight.h() == 3 && weight.w() == 3, "conv3x3_grad_input", "weight must be 3x3");
  expect(grad_out.c() == weight.n(), "conv3x3_grad_input", "gradient channels != weight out-channels");
  const std::size_t cout = weight.n(), cin = weight.c();
  // Adjoint = convolution with the spatially flipped, channel-transposed kernel.
  BasicTensor<T> flipped(Shape{cin, cout, 3, 3});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < cin; ++i)
      for (std::size_t k = 0; k < 9; ++k) flipped[(i * cout + o) * 9 + k] = weight[(o * cin + i) * 9 + (8 - k)];
  const Shape s = grad_out.shape();
  BasicTensor<T> out(Shape{s.n, cin, s.h, s.w});
  if (out.empty()) return out;
  for (std::size_t n = 0; n < s.n; ++n) {
    conv3x3_image<T>(grad_out.data().data() + n * cout * s.plane(), cout, s.h, s.w, flipped.data().data(), nullptr,
                     cin, out.data().data() + n * cin * s.plane());
  }
  return out;
}

template <typename T>
void conv3x3_grad_params(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_weight,
                         std::span<T> grad_bias) {
  const Shape s = input.shape();
  const std::size_t cout = grad_out.c(), cin = s.c;
  expect(grad_out.n() == s.n && grad_out.h() == s.h && grad_out.w() == s.w, "conv3x3_grad_params",
         "gradient " + grad_out.shape().str() + " incompatible with input " + s.str());
  expect(grad_weight.shape() == (Shape{cout, cin, 3, 3}), "conv3x3_grad_params",
         "weight gradient has shape " + grad_weight.shape().str());
  expect(grad_bias.size() == cout, "conv3x3_grad_params", "bias gradient length mismatch");
  if (s.size() == 0) return;

  const std::vector<T> padded = pad_border(input);
  const std::size_t H = s.h, W = s.w, pw = W + 2, pplane = (H + 2) * pw;
  const std::ptrdiff_t tasks = static_cast<std::ptrdiff_t>(cout * cin);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t task = 0; task < tasks; ++task) {
    const std::size_t o = static_cast<std::size_t>(task) / cin, i = static_cast<std::size_t>(task) % cin;
    alignas(64) T acc[9][kGradXBlock] = {};
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* g_plane = grad_out.data().data() + (n * cout + o) * H * W;
      const T* p_plane = padded.data() + (n * cin + i) * pplane;
      for (std::size_t y = 0; y < H; ++y) {
        const T* g = g_plane + y * W;
        const T* r0 = p_plane + y * pw;
        const T* r1 = r0 + pw;
        const T* r2 = r1 + pw;
        std::size_t x0 = 0;
        for (; x0 + kGradXBlock <= W; x0 += kGradXBlock) {
#pragma omp simd
          for (int xx = 0; xx < kGradXBlock; ++xx) {
            const std::size_t x = x0 + xx;
            const T gv = g[x];
            acc[0][xx] += gv * r0[x];
            acc[1][xx] += gv * r0[x + 1];
            acc[2][xx] += gv * r0[x + 2];
            acc[3][xx] += gv * r1[x];
            acc[4][xx] += gv * r1[x + 1];
            acc[5][xx] += gv * r1[x + 2];
            acc[6][xx] += gv * r2[x];
            acc[7][xx] += gv * r2[x + 1];
            acc[8][xx] += gv * r2[x + 2];
          }
        }
        for (std::size_t xx = 0; x0 + xx < W; ++xx) {
          const std::size_t x = x0 + xx;
          const T gv = g[x];
          acc[0][xx] += gv * r0[x];
          acc[1][xx] += gv * r0[x + 1];
          acc[2][xx] += gv * r0[x + 2];
          acc[3][xx] += gv * r1[x];
          acc[4][xx] += gv * r1[x + 1];
          acc[5][xx] += gv * r1[x + 2];
          acc[6][xx] += gv * r2[x];
          acc[7][xx] += gv * r2[x + 1];
          acc[8][xx] += gv * r2[x + 2];
        }
      }
    }
    T* gw = grad_weight.data().data() + (o * cin + i) * 9;
    for (int k = 0; k < 9; ++k) {
      T sum{0};
      for (int xx = 0; xx < kGradXBlock; ++xx) sum += acc[k][xx];
      gw[k] += sum;
    }
  }

  for (std::size_t o = 0; o < cout; ++o) {
    T sum{0};
    for (std::size_t n = 0; n < s.n; ++n)
      for (T v : grad_out.plane(n, o)) sum += v;
    grad_bias[o] += sum;
  }
}

// -- 1x1 convolution -----------------------------------------------------------

template <typename T>
BasicTensor<T> conv1x1(const BasicTensor<T>& input, const BasicTensor<T>& weight, std::span<const T> bias) {
  check_conv(input.shape(), weight.shape(), bias.size(), 1, "conv1x1");
  const Shape s = input.shape();
  const std::size_t cout = weight.n(), cin = s.c, P = s.plane();
  BasicTensor<T> out(Shape{s.n, cout, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      std::span<T> dst = out.plane(n, o);
      std::fill(dst.begin(), dst.end(), bias[o]);
      for (std::size_t i = 0; i < cin; ++i) {
        const T wv = weight(o, i, 0, 0);
        const T* src = input.plane(n, i).data();
        for (std::size_t p = 0; p < P; ++p) dst[p] += wv * src[p];
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> conv1x1_grad_input(const BasicTensor<T>& grad_out, const BasicTensor<T>& weight) {
  expect(weight.h() == 1 && weight.w() == 1, "conv1x1_grad_input", "weight must be 1x1");
  expect(grad_out.c() == weight.n(), "conv1x1_grad_input", "gradient channels != weight out-channels");
  const Shape s = grad_out.shape();
  const std::size_t cout = weight.n(), cin = weight.c(), P = s.plane();
  BasicTensor<T> out(Shape{s.n, cin, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < cin; ++i) {
      std::span<T> dst = out.plane(n, i);
      for (std::size_t o = 0; o < cout; ++o) {
        const T wv = weight(o, i, 0, 0);
        const T* g = grad_out.plane(n, o).data();
        for (std::size_t p = 0; p < P; ++p) dst[p] += wv * g[p];
      }
    }
  }
  return out;
}

template <typename T>
void conv1x1_grad_params(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_weight,
                         std::span<T> grad_bias) {
  const Shape s = input.shape();
  const std::size_t cout = grad_out.c(), cin = s.c, P = s.plane();
  expect(grad_weight.shape() == (Shape{cout, cin, 1, 1}), "conv1x1_grad_params", "weight gradient shape mismatch");
  expect(grad_bias.size() == cout, "conv1x1_grad_params", "bias gradient length mismatch");
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t i = 0; i < cin; ++i) {
      T sum{0};
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* g = grad_out.plane(n, o).data();
        const T* x = input.plane(n, i).data();
        for (std::size_t p = 0; p < P; ++p) sum += g[p] * x[p];
      }
      grad_weight(o, i, 0, 0) += sum;
    }
    T bsum{0};
    for (std::size_t n = 0; n < s.n; ++n)
      for (T v : grad_out.plane(n, o)) bsum += v;
    grad_bias[o] += bsum;
  }
}

// -- pooling / upsampling --------------------------------------------------------

template <typename T>
BasicTensor<T> maxpool(const BasicTensor<T>& input, int k, PoolResult* record) {
  expect(k == 2 || k == 4, "maxpool", "window must be 2 or 4, got " + std::to_string(k));
  const Shape s = input.shape();
  const auto uk = static_cast<std::size_t>(k);
  expect(s.h % uk == 0, "maxpool", "height " + std::to_string(s.h) + " not divisible by " + std::to_string(k));
  expect(s.w % uk == 0, "maxpool", "width " + std::to_string(s.w) + " not divisible by " + std::to_string(k));
  const std::size_t oh = s.h / uk, ow = s.w / uk;
  BasicTensor<T> out(Shape{s.n, s.c, oh, ow});
  if (record) record->argmax.assign(out.size(), 0);
  const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(s.n * s.c);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t in_base = static_cast<std::size_t>(p) * s.plane();
    const std::size_t out_base = static_cast<std::size_t>(p) * oh * ow;
    const T* src = input.data().data() + in_base;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = oy * uk * s.w + ox * uk;
        T best_v = src[best];
        for (std::size_t dy = 0; dy < uk; ++dy) {
          for (std::size_t dx = 0; dx < uk; ++dx) {
            const std::size_t idx = (oy * uk + dy) * s.w + ox * uk + dx;
            if (src[idx] > best_v) {
              best_v = src[idx];
              best = idx;
            }
          }
        }
        out[out_base + oy * ow + ox] = best_v;
        if (record) record->argmax[out_base + oy * ow + ox] = static_cast<std::uint32_t>(in_base + best);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool_grad(const BasicTensor<T>& grad_out, const PoolResult& record, const Shape& input_shape) {
  expect(record.argmax.size() == grad_out.size(), "maxpool_grad", "argmax record does not match gradient");
  BasicTensor<T> out(input_shape);
  for (std::size_t j = 0; j < grad_out.size(); ++j) out[record.argmax[j]] += grad_out[j];
  return out;
}

namespace {

// 1-D bilinear 2x stretch of one line: out[2m] = .75 in[m] + .25 in[m-1],
// out[2m+1] = .75 in[m] + .25 in[m+1], zero outside. Written as a + (b - a)/4
// so that constant runs are reproduced exactly.
template <typename T>
inline void stretch_line(const T* in, std::size_t len, std::size_t in_stride, T* out, std::size_t out_stride) {
  for (std::size_t m = 0; m < len; ++m) {
    const T a = in[m * in_stride];
    const T prev = m > 0 ? in[(m - 1) * in_stride] : T{0};
    const T next = m + 1 < len ? in[(m + 1) * in_stride] : T{0};
    out[(2 * m) * out_stride] = a + T(0.25) * (prev - a);
    out[(2 * m + 1) * out_stride] = a + T(0.25) * (next - a);
  }
}

// Adjoint of stretch_line.
template <typename T>
inline void stretch_line_adjoint(const T* g, std::size_t len, std::size_t g_stride, T* out, std::size_t out_stride) {
  const std::size_t glen = 2 * len;
  for (std::size_t m = 0; m < len; ++m) {
    T v = T(0.75) * (g[(2 * m) * g_stride] + g[(2 * m + 1) * g_stride]);
    if (2 * m >= 1) v += T(0.25) * g[(2 * m - 1) * g_stride];
    if (2 * m + 2 < glen) v += T(0.25) * g[(2 * m + 2) * g_stride];
    out[m * out_stride] = v;
  }
}

}  // namespace

template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& input) {
  const Shape s = input.shape();
  BasicTensor<T> out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(s.n * s.c);
  const std::size_t W2 = 2 * s.w;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    std::vector<T> rows(s.h * W2);
    const T* src = input.data().data() + static_cast<std::size_t>(p) * s.plane();
    for (std::size_t y = 0; y < s.h; ++y) stretch_line(src + y * s.w, s.w, 1, rows.data() + y * W2, 1);
    T* dst = out.data().data() + static_cast<std::size_t>(p) * 4 * s.plane();
    for (std::size_t x = 0; x < W2; ++x) stretch_line(rows.data() + x, s.h, W2, dst + x, W2);
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample2x_grad(const BasicTensor<T>& grad_out) {
  const Shape s = grad_out.shape();
  expect(s.h % 2 == 0 && s.w % 2 == 0, "upsample2x_grad", "gradient dims must be even, got " + s.str());
  const std::size_t H = s.h / 2, W = s.w / 2, W2 = s.w;
  BasicTensor<T> out(Shape{s.n, s.c, H, W});
  const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(s.n * s.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    std::vector<T> rows(H * W2);
    const T* g = grad_out.data().data() + static_cast<std::size_t>(p) * s.plane();
    for (std::size_t x = 0; x < W2; ++x) stretch_line_adjoint(g + x, H, W2, rows.data() + x, W2);
    T* dst = out.data().data() + static_cast<std::size_t>(p) * H * W;
    for (std::size_t y = 0; y < H; ++y) stretch_line_adjoint(rows.data() + y * W2, W, 1, dst + y * W, 1);
  }
  return out;
}

// -- structural / elementwise ----------------------------------------------------

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  expect(sa.n == sb.n, "concat_channels", "batch mismatch " + sa.str() + " vs " + sb.str());
  expect(sa.h == sb.h && sa.w == sb.w, "concat_channels", "spatial mismatch " + sa.str() + " vs " + sb.str());
  BasicTensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t chunk_a = sa.c * sa.plane(), chunk_b = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    T* dst = out.data().data() + n * (chunk_a + chunk_b);
    std::copy_n(a.data().data() + n * chunk_a, chunk_a, dst);
    std::copy_n(b.data().data() + n * chunk_b, chunk_b, dst + chunk_a);
  }
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& grad, std::size_t channels_a) {
  const Shape s = grad.shape();
  expect(channels_a <= s.c, "split_channels", "split point beyond channel count");
  BasicTensor<T> a(Shape{s.n, channels_a, s.h, s.w});
  BasicTensor<T> b(Shape{s.n, s.c - channels_a, s.h, s.w});
  const std::size_t chunk_a = a.c() * s.plane(), chunk_b = b.c() * s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = grad.data().data() + n * (chunk_a + chunk_b);
    std::copy_n(src, chunk_a, a.data().data() + n * chunk_a);
    std::copy_n(src + chunk_a, chunk_b, b.data().data() + n * chunk_b);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
BasicTensor<T> relu(BasicTensor<T> input) {
  for (T& v : input.data()) v = v > T{0} ? v : T{0};
  return input;
}

template <typename T>
BasicTensor<T> sigmoid(BasicTensor<T> input) {
  for (T& v : input.data()) v = stable_sigmoid(v);
  return input;
}

template <typename T>
Padded<T> pad_to_multiple(const BasicTensor<T>& input, std::size_t m) {
  expect(m >= 1, "pad_to_multiple", "multiple must be >= 1");
  const Shape s = input.shape();
  const std::size_t H = (s.h + m - 1) / m * m, W = (s.w + m - 1) / m * m;
  Padded<T> result{BasicTensor<T>(Shape{s.n, s.c, H, W}), s};
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        std::copy_n(&input(n, c, y, 0), s.w, &result.tensor(n, c, y, 0));
  return result;
}

template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& input, std::size_t height, std::size_t width) {
  const Shape s = input.shape();
  expect(height <= s.h && width <= s.w, "crop",
         "target " + std::to_string(height) + "x" + std::to_string(width) + " exceeds " + s.str());
  BasicTensor<T> out(Shape{s.n, s.c, height, width});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < height; ++y) std::copy_n(&input(n, c, y, 0), width, &out(n, c, y, 0));
  return out;
}

#define DPN_INSTANTIATE_KERNELS(T)                                                                              \
  template bool all_finite<T>(const BasicTensor<T>&);                                                          \
  template BasicTensor<T> conv3x3<T>(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>);         \
  template BasicTensor<T> conv3x3_grad_input<T>(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template void conv3x3_grad_params<T>(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&,          \
                                       std::span<T>);                                                          \
  template BasicTensor<T> conv1x1<T>(const BasicTensor<T>&, const BasicTensor<T>&, std::span<const T>);         \
  template BasicTensor<T> conv1x1_grad_input<T>(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template void conv1x1_grad_params<T>(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&,          \
                                       std::span<T>);                                                          \
  template BasicTensor<T> maxpool<T>(const BasicTensor<T>&, int, PoolResult*);                                  \
  template BasicTensor<T> maxpool_grad<T>(const BasicTensor<T>&, const PoolResult&, const Shape&);              \
  template BasicTensor<T> upsample2x<T>(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> upsample2x_grad<T>(const BasicTensor<T>&);                                            \
  template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels<T>(const BasicTensor<T>&, std::size_t);     \
  template BasicTensor<T> relu<T>(BasicTensor<T>);                                                              \
  template BasicTensor<T> sigmoid<T>(BasicTensor<T>);                                                           \
  template Padded<T> pad_to_multiple<T>(const BasicTensor<T>&, std::size_t);                                    \
  template BasicTensor<T> crop<T>(const BasicTensor<T>&, std::size_t, std::size_t);

DPN_INSTANTIATE_KERNELS(float)
DPN_INSTANTIATE_KERNELS(double)

#undef DPN_INSTANTIATE_KERNELS

}  // namespace dpn
