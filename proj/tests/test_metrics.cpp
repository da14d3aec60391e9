#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dpn/metrics.hpp"
#include "oracles.hpp"

using namespace dpn;

namespace {

struct Instance {
  std::vector<float> prob;
  std::vector<std::uint8_t> gt, fov;
};

Instance random_instance(std::size_t n, std::mt19937_64& rng, int levels = 0) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::uniform_int_distribution<int> q(0, levels);
  std::bernoulli_distribution vessel(0.2), inside(0.8);
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    const bool g = vessel(rng);
    // Vessels score a little higher on average, with heavy overlap.
    float p = levels > 0 ? static_cast<float>(q(rng)) / static_cast<float>(levels) : u(rng);
    if (g) p = std::min(1.0f, p + 0.2f);
    in.prob.push_back(p);
    in.gt.push_back(g);
    in.fov.push_back(inside(rng));
  }
  in.gt[0] = 1;
  in.gt[1] = 0;
  in.fov[0] = in.fov[1] = 1;
  return in;
}

/// SSIM from the definition: a full 2D Gaussian window evaluated at every position.
double naive_ssim(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  double g[11][11], total = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / total, va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return sum / count;
}

}  // namespace

TEST_CASE("confusion counts") {
  const std::vector<float> prob{0.9f, 0.8f, 0.3f, 0.1f};
  const std::vector<std::uint8_t> gt{1, 0, 1, 0}, fov{1, 1, 1, 1}, none{0, 0, 0, 0};
  CHECK(confusion_at_threshold(prob, gt, fov, 0.5) == ConfusionCounts{1, 1, 1, 1});
  CHECK(confusion_at_threshold(prob, gt, none, 0.5) == ConfusionCounts{});
  const std::vector<float> perfect{1, 0, 1, 0};
  for (double t : {0.01, 0.5, 1.0}) {
    const ConfusionCounts c = confusion_at_threshold(perfect, gt, fov, t);
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
  }
  CHECK_THROWS_AS(confusion_at_threshold(prob, gt, std::vector<std::uint8_t>{1, 1}, 0.5), std::invalid_argument);
}

TEST_CASE("pixel metrics from counts") {
  const PixelMetrics m = pixel_metrics({8, 5, 85, 2});
  CHECK(*m.se == doctest::Approx(0.8));
  CHECK(*m.sp == doctest::Approx(0.944444).epsilon(1e-6));
  CHECK(*m.acc == doctest::Approx(0.93));
  CHECK(*m.pr == doctest::Approx(0.615385).epsilon(1e-6));
  CHECK(*m.f1 == doctest::Approx(0.695652).epsilon(1e-6));
  const PixelMetrics empty = pixel_metrics({0, 3, 7, 0});
  CHECK_FALSE(empty.se.has_value());
  CHECK_FALSE(empty.f1.has_value());
  CHECK(*empty.sp == doctest::Approx(0.7));
  const PixelMetrics perfect = pixel_metrics({5, 0, 9, 0});
  for (auto v : {perfect.se, perfect.sp, perfect.acc, perfect.pr, perfect.f1}) CHECK(*v == 1.0);
}

TEST_CASE("confusion counts match a naive loop on random instances") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    const Instance in = random_instance(32 * 32, rng, rep % 3 == 0 ? 10 : 0);
    const double t = std::uniform_real_distribution<double>(0, 1)(rng);
    const ConfusionCounts c = confusion_at_threshold(in.prob, in.gt, in.fov, t);
    const oracle::Counts o = oracle::count(in.prob, in.gt, in.fov, t);
    CHECK(c == ConfusionCounts{o.tp, o.fp, o.tn, o.fn});
    CHECK(c.total() == static_cast<std::uint64_t>(std::count(in.fov.begin(), in.fov.end(), 1)));
  }
}

TEST_CASE("auc small cases") {
  const std::vector<float> prob{0.9f, 0.8f, 0.85f, 0.1f};
  const std::vector<std::uint8_t> gt{1, 1, 0, 0}, fov{1, 1, 1, 1};
  CHECK(roc_auc(prob, gt, fov) == 0.75);
  CHECK(roc_auc(std::vector<float>{0.9f, 0.7f, 0.2f, 0.1f}, gt, fov) == 1.0);
  CHECK(roc_auc(std::vector<float>(4, 0.4f), gt, fov) == 0.5);
  CHECK_THROWS_AS(roc_auc(prob, std::vector<std::uint8_t>{1, 1, 1, 1}, fov), std::invalid_argument);
  // Pixels outside the FOV never count.
  CHECK(roc_auc(std::vector<float>{0.9f, 0.8f, 0.85f, 0.1f, 0.99f}, std::vector<std::uint8_t>{1, 1, 0, 0, 0},
                std::vector<std::uint8_t>{1, 1, 1, 1, 0}) == 0.75);
}

TEST_CASE("auc matches the pair oracle and is rank invariant") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 60; ++rep) {
    const Instance in = random_instance(2000, rng, rep % 2 ? 20 : 0);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < in.prob.size(); ++i) {
      if (!in.fov[i]) continue;
      (in.gt[i] ? pos : neg).push_back(in.prob[i]);
    }
    const double auc = roc_auc(in.prob, in.gt, in.fov);
    CHECK(std::abs(auc - oracle::pair_auc(pos, neg)) <= 1e-12);
    std::vector<float> warped(in.prob);
    for (auto& p : warped) p = std::ldexp(p, -3);  // exact, so no new ties
    CHECK(roc_auc(warped, in.gt, in.fov) == auc);
  }
}

TEST_CASE("optimal threshold") {
  const std::vector<std::uint8_t> gt{1, 1, 0, 0}, fov{1, 1, 1, 1};
  const ThresholdChoice c = optimal_threshold(std::vector<float>{0.9f, 0.6f, 0.5f, 0.2f}, gt, fov);
  CHECK(c.threshold == doctest::Approx(0.6));
  CHECK(c.youden == doctest::Approx(1.0));
  const ThresholdChoice inv = optimal_threshold(std::vector<float>{0.1f, 0.2f, 0.8f, 0.9f}, gt, fov);
  CHECK(inv.youden <= 0.0);
  // Inserting consistent pixels between existing scores leaves the choice alone.
  const ThresholdChoice more = optimal_threshold(std::vector<float>{0.9f, 0.6f, 0.5f, 0.2f, 0.75f, 0.3f},
                                                 std::vector<std::uint8_t>{1, 1, 0, 0, 1, 0},
                                                 std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1});
  CHECK(more.threshold == c.threshold);
  CHECK_THROWS_AS(optimal_threshold(std::vector<float>{0.5f}, std::vector<std::uint8_t>{1},
                                    std::vector<std::uint8_t>{1}),
                  std::invalid_argument);
}

TEST_CASE("optimal threshold matches the sweep oracle and is rank invariant") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 40; ++rep) {
    const Instance in = random_instance(400, rng, rep % 2 ? 8 : 0);
    const ThresholdChoice c = optimal_threshold(in.prob, in.gt, in.fov);
    CHECK(c.threshold == oracle::sweep_threshold(in.prob, in.gt, in.fov));
    std::vector<float> warped(in.prob);
    for (auto& p : warped) p = std::sqrt(p) * 0.9f;
    const ThresholdChoice w = optimal_threshold(warped, in.gt, in.fov);
    CHECK(confusion_at_threshold(warped, in.gt, in.fov, w.threshold) ==
          confusion_at_threshold(in.prob, in.gt, in.fov, c.threshold));
  }
}

TEST_CASE("ssim and psnr") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  const int h = 23, w = 30;
  std::vector<double> a(h * w), b(h * w);
  for (auto& v : a) v = u(rng);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::clamp(a[i] + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
  CHECK(ssim(a, a, h, w) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
  CHECK(ssim(a, b, h, w) == doctest::Approx(naive_ssim(a, b, h, w)).epsilon(1e-9));
  CHECK(std::abs(ssim(a, b, h, w) - ssim(b, a, h, w)) <= 1e-9);
  const std::vector<double> half(64, 0.5), one(64, 1.0);
  CHECK(psnr(half, one) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK_THROWS_AS(ssim(a, b, 5, 5), std::invalid_argument);
  CHECK_THROWS_AS(psnr(a, half), std::invalid_argument);
}

namespace {

ImageEval make_eval(const std::string& id, int h, int w, std::mt19937_64& rng) {
  ImageEval e;
  e.id = id;
  e.height = h;
  e.width = w;
  const Instance in = random_instance(static_cast<std::size_t>(h) * w, rng);
  e.prob = in.prob;
  e.gt = in.gt;
  e.fov = in.fov;
  e.ms = 100.0;
  return e;
}

}  // namespace

TEST_CASE("aggregation") {
  std::mt19937_64 rng(9);
  const ImageEval one = make_eval("a", 16, 16, rng);
  const EvalReport single = aggregate(std::span<const ImageEval>(&one, 1), AggregationMode::kPooled);
  CHECK(single.images.size() == 1);
  CHECK(single.summary.counts == single.images[0].counts);
  CHECK(*single.summary.auc == *single.images[0].auc);
  CHECK(*single.summary.metrics.f1 == *single.images[0].metrics.f1);
  CHECK(single.fps == doctest::Approx(10.0));
  const EvalReport mean = aggregate(std::span<const ImageEval>(&one, 1), AggregationMode::kPerImage);
  CHECK(*mean.summary.metrics.acc == *single.summary.metrics.acc);

  std::vector<ImageEval> many{one, make_eval("b", 16, 16, rng), make_eval("c", 12, 20, rng)};
  const EvalReport pooled = aggregate(many, AggregationMode::kPooled);
  ConfusionCounts sum;
  double weighted = 0;
  for (const auto& r : pooled.images) {
    CHECK(r.threshold == pooled.summary.threshold);
    sum += r.counts;
    weighted += *r.metrics.acc * static_cast<double>(r.counts.total());
  }
  CHECK(sum == pooled.summary.counts);
  CHECK(*pooled.summary.metrics.acc == doctest::Approx(weighted / static_cast<double>(sum.total())).epsilon(1e-12));

  // Disjoint FOVs: pooling is plain addition.
  ImageEval left = one, right = one;
  for (std::size_t i = 0; i < one.fov.size(); ++i) {
    left.fov[i] = (i % 16) < 8;
    right.fov[i] = !left.fov[i];
  }
  left.gt[0] = right.gt[0] = 1;
  left.gt[8] = right.gt[8] = 1;
  std::vector<ImageEval> halves{left, right};
  const EvalReport fixed = aggregate(halves, AggregationMode::kPooled, 0.5);
  CHECK(fixed.summary.counts == confusion_at_threshold(one.prob, one.gt, std::vector<std::uint8_t>(256, 1), 0.5));

  CHECK_THROWS_AS(aggregate(std::span<const ImageEval>(), AggregationMode::kPooled), std::invalid_argument);
}

TEST_CASE("report formats") {
  std::mt19937_64 rng(10);
  std::vector<ImageEval> ims{make_eval("x1", 16, 16, rng), make_eval("x2", 16, 16, rng)};
  ims[1].prob = std::vector<float>(ims[1].gt.begin(), ims[1].gt.end());
  const EvalReport rep = aggregate(ims, AggregationMode::kPooled);
  std::ostringstream csv;
  write_csv(csv, rep);
  std::istringstream lines(csv.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "id,threshold,se,sp,acc,f1,auc,ssim,psnr,ms");
  CHECK(rows[1].rfind("x1,", 0) == 0);
  CHECK(rows[3].rfind("pooled,", 0) == 0);
  std::ostringstream text;
  write_text(text, rep);
  CHECK(text.str().find("pooled") != std::string::npos);
  CHECK(parse_aggregation("per-image") == AggregationMode::kPerImage);
  CHECK(to_string(AggregationMode::kPooled) == "pooled");
  CHECK_THROWS(parse_aggregation("median"));
}
