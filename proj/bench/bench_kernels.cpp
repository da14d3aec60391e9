// Kernel and whole-network timings. Usage: dpn_bench [threads] [reps]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>

#include "dpn/kernels.hpp"
#include "dpn/model.hpp"
#include "dpn/reference_kernels.hpp"

using namespace dpn;
using Clock = std::chrono::steady_clock;

namespace {

Tensor4 random_tensor(Shape s, std::mt19937_64& rng) {
  Tensor4 t(s);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

template <typename F>
double best_seconds(int reps, F&& f) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : 1;
  const int reps = argc > 2 ? std::atoi(argv[2]) : 3;
  set_kernel_threads(threads);
  std::mt19937_64 rng(1);
  std::printf("threads %d, best of %d\n", threads, reps);

  struct Case {
    std::size_t cin, cout, h, w;
  };
  for (const Case c : {Case{32, 16, 584, 568}, Case{48, 16, 584, 568}, Case{24, 16, 584, 568}, Case{16, 8, 292, 284}}) {
    const Tensor4 x = random_tensor({1, c.cin, c.h, c.w}, rng);
    const Tensor4 w = random_tensor({c.cout, c.cin, 3, 3}, rng);
    const std::vector<float> bv(c.cout, 0.1f);
    const std::span<const float> b(bv);
    const double macs = static_cast<double>(c.cin * c.cout * 9 * c.h * c.w);
    const double fast = best_seconds(reps, [&] { (void)conv3x3(x, w, b); });
    const double ref = best_seconds(1, [&] { (void)ref::conv3x3(x, w, b); });
    const Tensor4 g = random_tensor({1, c.cout, c.h, c.w}, rng);
    const double gin = best_seconds(reps, [&] { (void)conv3x3_grad_input(g, w); });
    Tensor4 gw(w.shape());
    std::vector<float> gb(c.cout);
    const double gpar = best_seconds(reps, [&] { conv3x3_grad_params(x, g, gw, std::span<float>(gb)); });
    std::printf("conv3x3 %3zu->%-3zu %4zux%-4zu  fwd %7.2f ms (%5.1f GMAC/s)  ref %8.1f ms  dX %7.2f ms  dW %7.2f ms\n",
                c.cin, c.cout, c.h, c.w, fast * 1e3, macs / fast * 1e-9, ref * 1e3, gin * 1e3, gpar * 1e3);
  }

  {
    const Tensor4 x = random_tensor({1, 16, 584, 568}, rng);
    const double pool = best_seconds(reps, [&] { (void)maxpool(x, 2, nullptr); });
    const Tensor4 small = random_tensor({1, 8, 292, 284}, rng);
    const double up = best_seconds(reps, [&] { (void)upsample2x(small); });
    const double act = best_seconds(reps, [&] { (void)relu(x); });
    std::printf("maxpool2 16ch %.2f ms  upsample2x 8ch %.2f ms  relu 16ch %.2f ms\n", pool * 1e3, up * 1e3, act * 1e3);
  }

  DpnModel model = make_model(DpnConfig{});
  init_xavier(model, 3);
  const Tensor4 image = random_tensor({1, 3, 584, 568}, rng);
  const double fwd = best_seconds(reps, [&] { (void)dpn_forward(image, model, true); });
  std::printf("dpn_forward 584x568 (final head): %.3f s\n", fwd);
  return 0;
}
