#include <cmath>
#include <random>

#include "doctest.h"
#include "dpn/gradcheck.hpp"
#include "dpn/loss.hpp"
#include "dpn/optim.hpp"
#include "oracles.hpp"

using namespace dpn;

namespace {

double naive_bce(const Tensor4d& z, const Tensor4d& y, double beta) {
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    loss += y[i] > 0.5 ? -beta * std::log(p) : -(1.0 - beta) * std::log(1.0 - p);
  }
  return loss;
}

Tensor4d random_label(Shape s, std::mt19937_64& rng, double rate = 0.2) {
  std::bernoulli_distribution b(rate);
  Tensor4d t(s);
  for (auto& v : t.storage()) v = b(rng) ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("balance weight") {
  CHECK(balance_weight(Tensor4({1, 1, 2, 2}, std::vector<float>{1, 0, 0, 0})).beta == 0.75);
  Tensor4 drive({1, 1, 100, 100});
  for (std::size_t i = 0; i < 869; ++i) drive[i] = 1.0f;
  const BalanceStats s = balance_weight(drive);
  CHECK(s.beta == doctest::Approx(0.9131).epsilon(1e-9));
  CHECK(s.n_pos == 869);
  CHECK(s.n_neg == 9131);
  CHECK(s.beta + (1.0 - s.beta) == 1.0);
  CHECK(balance_weight(Tensor4({1, 1, 3, 3})).beta == 1.0);
  CHECK_THROWS_AS(balance_weight(Tensor4()), std::invalid_argument);
}

TEST_CASE("balanced cross-entropy values") {
  Tensor4d y({1, 1, 4, 4});
  Tensor4d z(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = i % 3 == 0 ? 1.0 : 0.0;
    z[i] = y[i] > 0.5 ? 20.0 : -20.0;
  }
  CHECK(class_balanced_bce(z, y, 0.6) / 16.0 <= 1e-6);
  const Tensor4d one({1, 1, 1, 1}, 1.0);
  CHECK(class_balanced_bce(Tensor4d({1, 1, 1, 1}, 0.0), one, 0.75) == doctest::Approx(0.75 * std::log(2.0)));
  CHECK(class_balanced_bce_prob(Tensor4d({1, 1, 1, 1}, 0.5), one, 0.75) == doctest::Approx(0.5199).epsilon(1e-4));
  CHECK_THROWS_AS(class_balanced_bce(Tensor4d({1, 1, 2, 2}), Tensor4d({1, 1, 2, 3}), 0.5), ShapeError);
}

TEST_CASE("balanced cross-entropy matches per-pixel summation") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const Tensor4d z = oracle::random_tensor({1, 1, 8, 8}, rng, -6.0, 6.0);
    const Tensor4d y = random_label(z.shape(), rng);
    const double beta = balance_weight(y).beta;
    const double want = naive_bce(z, y, beta);
    CHECK(class_balanced_bce(z, y, beta) == doctest::Approx(want).epsilon(1e-6));
    TapeD tape;
    const Var loss = tape.balanced_bce(tape.input(z), y, beta);
    CHECK(tape.value(loss)[0] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("vessel term grows with beta when a vessel pixel is missed") {
  Tensor4d y({1, 1, 1, 2}, std::vector<double>{1, 0});
  Tensor4d z({1, 1, 1, 2}, std::vector<double>{-2, -3});
  double prev = -1.0;
  for (double beta : {0.1, 0.5, 0.9}) {
    const double vessel = class_balanced_bce(z, y, beta) - (1 - beta) * std::log1p(std::exp(-3.0));
    CHECK(vessel > prev);
    prev = vessel;
  }
}

TEST_CASE("total objective sums heads with one beta") {
  std::mt19937_64 rng(5);
  const Tensor4d z = oracle::random_tensor({1, 1, 6, 6}, rng, -3, 3);
  const Tensor4d y = random_label(z.shape(), rng, 0.3);
  const double single = class_balanced_bce(z, y, balance_weight(y).beta);

  TapeD tape;
  std::vector<Var> heads;
  for (int i = 0; i < 4; ++i) heads.push_back(tape.input(z));
  const Objective four = total_objective<double>(tape, heads, y, 0.0, {}, 4);
  CHECK(four.report.head_losses.size() == 4);
  CHECK(four.report.data_loss == doctest::Approx(4 * single).epsilon(1e-12));
  CHECK(tape.value(four.loss)[0] == doctest::Approx(4 * single).epsilon(1e-12));
  CHECK(four.report.beta == balance_weight(y).beta);

  TapeD t1;
  const Var h = t1.input(z);
  const Objective one = total_objective<double>(t1, std::span<const Var>(&h, 1), y, 0.0, {}, 1);
  CHECK(one.report.total == doctest::Approx(single).epsilon(1e-12));
  CHECK_THROWS(total_objective<double>(t1, std::span<const Var>(&h, 1), y, 0.0, {}, 4));
  CHECK_THROWS(total_objective<double>(t1, std::span<const Var>(&h, 1), Tensor4d({1, 1, 5, 6}), 0.0, {}, 1));

  ParamD p("p", {1, 1, 1, 2});
  p.value.storage() = {3.0, -4.0};
  const ParamD* ps[] = {&p};
  TapeD t2;
  const Var h2 = t2.input(z);
  const Objective decayed = total_objective<double>(t2, std::span<const Var>(&h2, 1), y, 0.1, ps, 1);
  CHECK(decayed.report.decay_term == doctest::Approx(0.05 * 25.0));
  CHECK(decayed.report.total == doctest::Approx(single + 1.25));
  CHECK(t2.value(decayed.loss)[0] == doctest::Approx(single));
}

TEST_CASE("balanced loss gradient matches central differences") {
  std::mt19937_64 rng(8);
  ParamD z("z", {1, 1, 8, 8});
  z.value = oracle::random_tensor(z.value.shape(), rng, -4, 4);
  const Tensor4d y = random_label(z.value.shape(), rng, 0.25);
  const LossBuilder build = [&](TapeD& t) { return t.balanced_bce(t.param(z), y, balance_weight(y).beta); };
  ParamD* ps[] = {&z};
  CHECK(grad_check(build, ps, {}).max_abs_error <= 1e-4);
}

TEST_CASE("adam first step moves by lr") {
  Param p("p", {1, 1, 1, 1});
  p.value[0] = 0.5f;
  p.grad[0] = 1.0f;
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Param* ps[] = {&p};
  adam_step<float>(ps, cfg, 1);
  CHECK(double(p.value[0]) == doctest::Approx(0.5 - 1e-3 / (1 + 1e-8)).epsilon(1e-7));
  CHECK(p.m[0] == doctest::Approx(0.1));
  CHECK(p.v[0] == doctest::Approx(0.001));

  ParamD d("d", {1, 1, 1, 1});
  d.grad[0] = 1.0;
  ParamD* ds[] = {&d};
  adam_step<double>(ds, cfg, 1);
  CHECK(d.value[0] == doctest::Approx(-1e-3 / (1 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("adam with zero gradient and no decay leaves weights alone") {
  Param p("p", {1, 1, 2, 2});
  p.value.fill(0.3f);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Param* ps[] = {&p};
  for (std::uint64_t t = 1; t <= 5; ++t) adam_step<float>(ps, cfg, t);
  for (float v : p.value.storage()) CHECK(v == 0.3f);
}

TEST_CASE("decay alone shrinks a positive weight monotonically") {
  ParamD p("p", {1, 1, 1, 1});
  p.value[0] = 1.0;
  AdamConfig cfg;
  cfg.weight_decay = 0.5;
  ParamD* ps[] = {&p};
  double prev = p.value[0];
  for (std::uint64_t t = 1; t <= 50; ++t) {
    p.zero_grad();
    adam_step<double>(ps, cfg, t);
    CHECK(p.value[0] < prev);
    CHECK(p.value[0] > 0.0);
    prev = p.value[0];
  }
}

TEST_CASE("adam matches a hand-written update and is deterministic") {
  std::mt19937_64 rng(2);
  ParamD a("a", {1, 2, 3, 3});
  a.value = oracle::random_tensor(a.value.shape(), rng);
  ParamD b = a;
  AdamConfig cfg;
  std::vector<double> m(a.size(), 0.0), v(a.size(), 0.0), w(a.value.storage());
  for (std::uint64_t t = 1; t <= 4; ++t) {
    const Tensor4d g = oracle::random_tensor(a.value.shape(), rng);
    a.grad = g;
    b.grad = g;
    ParamD* pa[] = {&a};
    ParamD* pb[] = {&b};
    adam_step<double>(pa, cfg, t);
    adam_step<double>(pb, cfg, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + cfg.weight_decay * w[i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
      const double mh = m[i] / (1 - std::pow(cfg.beta1, double(t)));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, double(t)));
      w[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  CHECK(a.value == b.value);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(a.value[i] == doctest::Approx(w[i]).epsilon(1e-12));
}

TEST_CASE("adam refuses non-finite gradients without touching anything") {
  Param p("p", {1, 1, 1, 2});
  Param q("q", {1, 1, 1, 1});
  p.value.storage() = {1.0f, 2.0f};
  q.value[0] = 3.0f;
  p.grad[0] = 0.5f;
  q.grad[0] = std::numeric_limits<float>::infinity();
  Param* ps[] = {&p, &q};
  Adam adam;
  CHECK_THROWS_AS(adam.step<float>(ps), NonFiniteGradient);
  CHECK(p.value.storage() == std::vector<float>{1.0f, 2.0f});
  CHECK(p.m[0] == 0.0f);
  CHECK(adam.steps() == 0);
}
