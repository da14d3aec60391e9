#include <cmath>
#include <random>

#include "doctest.h"
#include "dpn/kernels.hpp"
#include "dpn/reference_kernels.hpp"
#include "oracles.hpp"

using namespace dpn;

namespace {

Tensor4 iota_tensor(Shape s, float start = 1.0f) {
  Tensor4 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = start + static_cast<float>(i);
  return t;
}

template <typename A, typename B>
double max_diff(const A& a, const B& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace

TEST_CASE("tensor data length follows the shape") {
  Tensor4 t({2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK(t.offset(1, 2, 3, 4) == 119);
  CHECK_THROWS_AS(Tensor4({1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("conv3x3 identity kernel returns the input") {
  std::mt19937_64 rng(1);
  const Tensor4 x = oracle::random_tensor_f({1, 4, 7, 9}, rng);
  Tensor4 w({4, 4, 3, 3});
  for (std::size_t o = 0; o < 4; ++o) w(o, o, 1, 1) = 1.0f;
  const std::vector<float> b(4, 0.0f);
  CHECK(conv3x3(x, w, std::span<const float>(b)) == x);
}

TEST_CASE("conv3x3 all-ones kernel counts the in-bounds taps") {
  const Tensor4 x({1, 1, 5, 5}, 1.0f);
  const Tensor4 w({1, 1, 3, 3}, 1.0f);
  const std::vector<float> b(1, 0.0f);
  const Tensor4 y = conv3x3(x, w, std::span<const float>(b));
  CHECK(y(0, 0, 2, 2) == 9.0f);
  CHECK(y(0, 0, 0, 0) == 4.0f);
  CHECK(y(0, 0, 4, 4) == 4.0f);
  CHECK(y(0, 0, 0, 2) == 6.0f);
  CHECK(y(0, 0, 2, 4) == 6.0f);
}

TEST_CASE("conv3x3 matches the naive loop oracle") {
  std::mt19937_64 rng(2);
  for (Shape xs : {Shape{1, 2, 6, 6}, Shape{2, 5, 13, 37}, Shape{1, 17, 9, 40}}) {
    const Tensor4 x = oracle::random_tensor_f(xs, rng);
    const std::size_t co = xs.c == 2 ? 3 : 11;
    const Tensor4 w = oracle::random_tensor_f({co, xs.c, 3, 3}, rng);
    const Tensor4 b = oracle::random_tensor_f({co, 1, 1, 1}, rng);
    const Tensor4 y = conv3x3(x, w, std::span<const float>(b.storage()));
    const auto& bv = b.storage();
    const Tensor4d want = oracle::conv(oracle::to_double(x), oracle::to_double(w), std::vector<double>(bv.begin(), bv.end()));
    CHECK(y.shape() == want.shape());
    CHECK(max_diff(y, want) < 1e-5);
  }
}

TEST_CASE("conv3x3 double path matches the oracle closely") {
  std::mt19937_64 rng(3);
  const Tensor4d x = oracle::random_tensor({1, 3, 8, 11}, rng);
  const Tensor4d w = oracle::random_tensor({4, 3, 3, 3}, rng);
  const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
  CHECK(max_diff(conv3x3(x, w, std::span<const double>(b)), oracle::conv(x, w, b)) < 1e-12);
}

TEST_CASE("conv3x3 rejects mismatched shapes") {
  const Tensor4 x({1, 3, 4, 4});
  const std::vector<float> b(2);
  CHECK_THROWS_AS(conv3x3(x, Tensor4({2, 4, 3, 3}), std::span<const float>(b)), ShapeError);
  CHECK_THROWS_AS(conv3x3(x, Tensor4({2, 3, 1, 1}), std::span<const float>(b)), ShapeError);
  const std::vector<float> b3(3);
  CHECK_THROWS_AS(conv3x3(x, Tensor4({2, 3, 3, 3}), std::span<const float>(b3)), ShapeError);
}

TEST_CASE("conv3x3 is linear in input and weight") {
  std::mt19937_64 rng(4);
  const Tensor4 x = oracle::random_tensor_f({1, 6, 12, 12}, rng);
  const Tensor4 z = oracle::random_tensor_f({1, 6, 12, 12}, rng);
  const Tensor4 w = oracle::random_tensor_f({5, 6, 3, 3}, rng);
  const Tensor4 v = oracle::random_tensor_f({5, 6, 3, 3}, rng);
  const std::vector<float> b(5, 0.0f);
  const std::span<const float> bs(b);
  const float a = 0.7f, c = -1.3f;
  Tensor4 mix(x.shape()), wmix(w.shape());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + c * z[i];
  for (std::size_t i = 0; i < w.size(); ++i) wmix[i] = a * w[i] + c * v[i];
  const Tensor4 cx = conv3x3(x, w, bs), cz = conv3x3(z, w, bs), cm = conv3x3(mix, w, bs);
  const Tensor4 cv = conv3x3(x, v, bs), cw = conv3x3(x, wmix, bs);
  double in_err = 0.0, w_err = 0.0;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    in_err = std::max(in_err, std::abs(double(cm[i]) - (a * cx[i] + c * cz[i])));
    w_err = std::max(w_err, std::abs(double(cw[i]) - (a * cx[i] + c * cv[i])));
  }
  CHECK(in_err <= 1e-4);
  CHECK(w_err <= 1e-4);
}

TEST_CASE("parallel kernels agree with the serial reference for every thread count") {
  std::mt19937_64 rng(5);
  const Tensor4 x = oracle::random_tensor_f({1, 12, 20, 33}, rng);
  const Tensor4 w = oracle::random_tensor_f({9, 12, 3, 3}, rng);
  const Tensor4 b = oracle::random_tensor_f({9, 1, 1, 1}, rng);
  const Tensor4 g = oracle::random_tensor_f({1, 9, 20, 33}, rng);
  const std::span<const float> bs(b.storage());

  const Tensor4 ry = ref::conv3x3(x, w, bs);
  const Tensor4 rdx = ref::conv3x3_grad_input(g, w);
  Tensor4 rdw(w.shape());
  std::vector<float> rdb(9, 0.0f);
  ref::conv3x3_grad_params(x, g, rdw, std::span<float>(rdb));

  const int saved = kernel_threads();
  Tensor4 first_y, first_dx, first_dw;
  for (int threads : {1, 2, 3, 8}) {
    CAPTURE(threads);
    set_kernel_threads(threads);
    const Tensor4 y = conv3x3(x, w, bs);
    const Tensor4 dx = conv3x3_grad_input(g, w);
    Tensor4 dw(w.shape());
    std::vector<float> db(9, 0.0f);
    conv3x3_grad_params(x, g, dw, std::span<float>(db));
    CHECK(max_diff(y, ry) < 1e-5);
    CHECK(max_diff(dx, rdx) < 1e-5);
    CHECK(max_diff(dw, rdw) < 1e-3);
    CHECK(max_diff(db, rdb) < 1e-3);
    if (first_y.empty()) {
      first_y = y;
      first_dx = dx;
      first_dw = dw;
    } else {
      CHECK(y == first_y);
      CHECK(dx == first_dx);
      CHECK(dw == first_dw);
    }
  }
  set_kernel_threads(saved);
}

TEST_CASE("maxpool window maxima") {
  const Tensor4 x = iota_tensor({1, 1, 4, 4});
  const Tensor4 y = maxpool(x, 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.storage() == std::vector<float>{6, 8, 14, 16});
  const Tensor4 c({1, 2, 8, 8}, 3.5f);
  CHECK(maxpool(c, 4) == Tensor4({1, 2, 2, 2}, 3.5f));
  CHECK_THROWS_AS(maxpool(Tensor4({1, 1, 6, 8}), 4), ShapeError);
  CHECK_THROWS_AS(maxpool(Tensor4({1, 1, 4, 4}), 3), ShapeError);
}

TEST_CASE("maxpool matches the window oracle and records first argmax") {
  std::mt19937_64 rng(6);
  const Tensor4 x = oracle::random_tensor_f({1, 3, 8, 8}, rng);
  for (int k : {2, 4}) {
    PoolResult rec;
    const Tensor4 y = maxpool(x, k, &rec);
    CHECK(max_diff(y, oracle::maxpool(oracle::to_double(x), k)) == 0.0);
    CHECK(ref::maxpool(x, k) == y);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(x[rec.argmax[i]] == y[i]);
  }
  Tensor4 ties({1, 1, 2, 2}, 1.0f);
  PoolResult rec;
  maxpool(ties, 2, &rec);
  CHECK(rec.argmax[0] == 0);
}

TEST_CASE("upsample2x impulse, constants and shape") {
  Tensor4 x({1, 1, 6, 6});
  x(0, 0, 2, 3) = 1.0f;
  const Tensor4 y = upsample2x(x);
  CHECK(y.shape() == Shape{1, 1, 12, 12});
  // Output rows/cols 3..6 and 5..8 form the 4x4 footprint.
  const double f[4] = {0.25, 0.75, 0.75, 0.25};
  double outside = 0.0;
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 12; ++c) {
      const bool in = r >= 3 && r < 7 && c >= 5 && c < 9;
      if (in) CHECK(double(y(0, 0, r, c)) == f[r - 3] * f[c - 5]);
      else outside = std::max(outside, double(std::abs(y(0, 0, r, c))));
    }
  CHECK(outside == 0.0);
  CHECK(y(0, 0, 3, 5) == 0.0625f);
  CHECK(y(0, 0, 3, 6) == 0.1875f);
  CHECK(y(0, 0, 4, 6) == 0.5625f);

  const Tensor4 c({1, 2, 5, 7}, 0.8f);
  const Tensor4 u = upsample2x(c);
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t r = 1; r + 1 < u.h(); ++r)
      for (std::size_t col = 1; col + 1 < u.w(); ++col) CHECK(u(0, ch, r, col) == 0.8f);
  CHECK(u(0, 0, 0, 0) < 0.8f);
  CHECK(upsample2x(Tensor4({1, 8, 16, 16})).shape() == Shape{1, 8, 32, 32});
}

TEST_CASE("upsample2x and its adjoint match the scatter oracle") {
  std::mt19937_64 rng(7);
  const Tensor4 x = oracle::random_tensor_f({1, 3, 5, 9}, rng);
  const Tensor4 y = upsample2x(x);
  CHECK(max_diff(y, oracle::upsample(oracle::to_double(x))) < 1e-6);
  CHECK(max_diff(y, ref::upsample2x(x)) < 1e-6);
  // <up(x), g> == <x, up^T(g)>
  const Tensor4d xd = oracle::random_tensor({1, 2, 4, 6}, rng);
  const Tensor4d gd = oracle::random_tensor({1, 2, 8, 12}, rng);
  const Tensor4d uy = upsample2x(xd), gx = upsample2x_grad(gd);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < uy.size(); ++i) lhs += uy[i] * gd[i];
  for (std::size_t i = 0; i < gx.size(); ++i) rhs += gx[i] * xd[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("concat orders channels a then b") {
  std::mt19937_64 rng(8);
  const Tensor4 a = oracle::random_tensor_f({1, 2, 2, 2}, rng);
  const Tensor4 b = oracle::random_tensor_f({1, 3, 2, 2}, rng);
  const Tensor4 c = concat_channels(a, b);
  CHECK(c.shape() == Shape{1, 5, 2, 2});
  CHECK(max_diff(c, oracle::concat(oracle::to_double(a), oracle::to_double(b))) == 0.0);
  CHECK(c(0, 1, 1, 0) == a(0, 1, 1, 0));
  CHECK(c(0, 4, 0, 1) == b(0, 2, 0, 1));
  CHECK(concat_channels(a, Tensor4({1, 0, 2, 2})) == a);
  CHECK_THROWS_AS(concat_channels(a, Tensor4({1, 1, 3, 2})), ShapeError);
  CHECK_THROWS_AS(concat_channels(a, Tensor4({2, 1, 2, 2})), ShapeError);
  const auto [ga, gb] = split_channels(c, 2);
  CHECK(ga == a);
  CHECK(gb == b);
}

TEST_CASE("relu, sigmoid and the stable helpers") {
  const Tensor4 r = relu(Tensor4({1, 1, 1, 3}, std::vector<float>{-1, 0, 2}));
  CHECK(r.storage() == std::vector<float>{0, 0, 2});
  CHECK(sigmoid(Tensor4({1, 1, 1, 1}, 0.0f))[0] == 0.5f);
  CHECK(stable_sigmoid(-800.0) == 0.0);
  CHECK(stable_sigmoid(800.0) == 1.0);
  CHECK(std::isfinite(softplus(1000.0)));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  const Tensor4 big({1, 1, 1, 2}, std::vector<float>{-1e30f, 1e30f});
  CHECK(all_finite(sigmoid(big)));
}

TEST_CASE("pad to multiple of 4 and crop back on DRIVE dimensions") {
  std::mt19937_64 rng(9);
  const Tensor4 x = oracle::random_tensor_f({1, 3, 584, 565}, rng);
  const Padded<float> p = pad_to_multiple(x, 4);
  CHECK(p.tensor.shape() == Shape{1, 3, 584, 568});
  CHECK(p.original == x.shape());
  CHECK(p.tensor(0, 2, 583, 565) == 0.0f);
  CHECK(p.tensor(0, 1, 10, 20) == x(0, 1, 10, 20));
  CHECK(crop(p.tensor, 584, 565) == x);
  CHECK(pad_to_multiple(x, 1).tensor == x);
}
