#include "dpn/grad_suite.hpp"

#include <random>

#include "dpn/loss.hpp"
#include "dpn/model.hpp"

namespace dpn {

namespace {

class Fixture {
 public:
  explicit Fixture(std::uint64_t seed) : rng_(seed) {}

  ParamD param(const std::string& name, Shape shape, double lo = -1.0, double hi = 1.0) {
    ParamD p(name, shape);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : p.value.storage()) v = u(rng_);
    return p;
  }

  /// Values bounded away from zero, for ops with a kink there.
  ParamD param_off_zero(const std::string& name, Shape shape) {
    ParamD p(name, shape);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : p.value.storage()) v = sign(rng_) ? u(rng_) : -u(rng_);
    return p;
  }

  Tensor4d tensor(Shape shape) {
    Tensor4d t(shape);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : t.storage()) v = u(rng_);
    return t;
  }

  Tensor4d label(Shape shape) {
    Tensor4d t(shape);
    std::bernoulli_distribution b(0.3);
    for (auto& v : t.storage()) v = b(rng_) ? 1.0 : 0.0;
    t[0] = 1.0;
    t[1] = 0.0;
    return t;
  }

  /// Xavier weights plus nonzero biases: with all-zero biases, units whose
  /// inputs are all zero sit exactly on the ReLU kink.
  template <typename Model>
  void init(Model& model) {
    init_xavier(model, rng_());
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto* p : model.parameters()) {
      if (p->name.ends_with(".bias")) {
        for (auto& v : p->value.storage()) v = u(rng_);
      }
    }
  }

  std::uint64_t next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

/// Weighted sum of an op's output, so every output element gets a distinct adjoint.
Var project(TapeD& tape, Var y, const Tensor4d& weights) { return tape.sum(tape.mul(y, tape.input(weights))); }

GradCase check(const std::string& name, const LossBuilder& build, std::vector<ParamD*> params, std::uint64_t seed,
               double step, double tolerance, std::size_t coords = 50) {
  GradCheckOptions opt;
  opt.step = step;
  opt.seed = seed;
  opt.coords_per_param = coords;
  return GradCase{name, grad_check(build, params, opt), tolerance};
}

}  // namespace

std::vector<GradCase> run_grad_suite(std::uint64_t seed, double step) {
  Fixture f(seed);
  std::vector<GradCase> out;
  const double kt = kKernelGradTolerance;

  {
    ParamD x = f.param("x", {2, 3, 6, 7}), w = f.param("w", {4, 3, 3, 3}), b = f.param("b", {4, 1, 1, 1});
    const Tensor4d r = f.tensor({2, 4, 6, 7});
    out.push_back(check("conv3x3", [&](TapeD& t) {
      return project(t, t.conv3x3(t.param(x), t.param(w), t.param(b)), r);
    }, {&x, &w, &b}, f.next(), step, kt));
  }
  {
    ParamD x = f.param("x", {1, 5, 4, 6}), w = f.param("w", {3, 5, 1, 1}), b = f.param("b", {3, 1, 1, 1});
    const Tensor4d r = f.tensor({1, 3, 4, 6});
    out.push_back(check("conv1x1", [&](TapeD& t) {
      return project(t, t.conv1x1(t.param(x), t.param(w), t.param(b)), r);
    }, {&x, &w, &b}, f.next(), step, kt));
  }
  for (int k : {2, 4}) {
    ParamD x = f.param("x", {1, 2, 8, 8});
    const Tensor4d r = f.tensor({1, 2, static_cast<std::size_t>(8 / k), static_cast<std::size_t>(8 / k)});
    out.push_back(check("maxpool" + std::to_string(k), [&](TapeD& t) {
      return project(t, t.maxpool(t.param(x), k), r);
    }, {&x}, f.next(), step, kt, 128));
  }
  {
    ParamD x = f.param("x", {1, 2, 4, 5});
    const Tensor4d r = f.tensor({1, 2, 8, 10});
    out.push_back(check("upsample2x", [&](TapeD& t) { return project(t, t.upsample2x(t.param(x)), r); }, {&x},
                        f.next(), step, kt));
  }
  {
    ParamD a = f.param("a", {1, 2, 4, 4}), b = f.param("b", {1, 3, 4, 4});
    const Tensor4d r = f.tensor({1, 5, 4, 4});
    out.push_back(check("concat", [&](TapeD& t) { return project(t, t.concat(t.param(a), t.param(b)), r); },
                        {&a, &b}, f.next(), step, kt));
  }
  {
    ParamD x = f.param_off_zero("x", {1, 2, 5, 5});
    const Tensor4d r = f.tensor({1, 2, 5, 5});
    out.push_back(check("relu", [&](TapeD& t) { return project(t, t.relu(t.param(x)), r); }, {&x}, f.next(), step,
                        kt));
  }
  {
    ParamD x = f.param("x", {1, 2, 5, 5}, -4.0, 4.0);
    const Tensor4d r = f.tensor({1, 2, 5, 5});
    out.push_back(check("sigmoid", [&](TapeD& t) { return project(t, t.sigmoid(t.param(x)), r); }, {&x}, f.next(),
                        step, kt));
  }
  {
    ParamD z = f.param("logits", {1, 1, 8, 8}, -6.0, 6.0);
    const Tensor4d y = f.label({1, 1, 8, 8});
    const double beta = balance_weight(y).beta;
    out.push_back(check("balanced_bce", [&](TapeD& t) { return t.balanced_bce(t.param(z), y, beta); }, {&z},
                        f.next(), step, kt, 64));
  }

  for (Branches br : {Branches::kOs1, Branches::kOs1Os2, Branches::kAll}) {
    DpnConfig cfg;
    cfg.branches = br;
    auto model = make_model<double>(cfg);
    f.init(model);
    BasicDpBlock<double> block = model.blocks[1];
    ParamD x = f.param("x", {1, 16, 8, 8}, 0.0, 1.0);
    const Tensor4d r = f.tensor({1, 16, 8, 8});
    std::vector<ParamD*> params{&x};
    for (auto* c : block.convs()) {
      params.push_back(&c->weight);
      params.push_back(&c->bias);
    }
    out.push_back(check("dp_block[" + to_string(br) + "]", [&](TapeD& t) {
      return project(t, dp_block_forward(t, t.param(x), block), r);
    }, params, f.next(), step, kNetworkGradTolerance, 8));
  }

  {
    auto model = make_model<double>(DpnConfig{});
    f.init(model);
    ParamD image = f.param("image", {1, 3, 16, 16}, 0.0, 1.0);
    const Tensor4d y = f.label({1, 1, 16, 16});
    std::vector<ParamD*> params{&image};
    for (auto* p : model.parameters()) params.push_back(p);
    out.push_back(check("dpn_4head", [&](TapeD& t) {
      const std::vector<Var> heads = dpn_forward(t, t.param(image), model);
      return total_objective<double>(t, heads, y, 0.0, {}, 4).loss;
    }, params, f.next(), step, kNetworkGradTolerance, 3));
  }
  return out;
}

}  // namespace dpn
