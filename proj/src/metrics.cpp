#include "dpn/metrics.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dpn {

namespace {

void check_sizes(std::size_t a, std::size_t b, std::size_t c, const char* what) {
  if (a != b || a != c) {
    throw std::invalid_argument(std::string(what) + ": map sizes differ (" + std::to_string(a) + ", " +
                                std::to_string(b) + ", " + std::to_string(c) + ")");
  }
}

struct Scored {
  float score;
  bool positive;
};

std::vector<Scored> collect(std::span<const float> prob, std::span<const std::uint8_t> gt,
                            std::span<const std::uint8_t> fov, std::uint64_t& pos, std::uint64_t& neg) {
  std::vector<Scored> out;
  out.reserve(prob.size());
  pos = neg = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (!fov[i]) continue;
    const bool p = gt[i] != 0;
    out.push_back({prob[i], p});
    (p ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("both vessel and background pixels are required inside the FOV (got " +
                                std::to_string(pos) + " vessel, " + std::to_string(neg) + " background)");
  }
  std::sort(out.begin(), out.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  return out;
}

std::optional<double> ratio(double num, double den) {
  if (den <= 0) return std::nullopt;
  return num / den;
}

}  // namespace

ConfusionCounts confusion_at_threshold(std::span<const float> prob, std::span<const std::uint8_t> gt,
                                       std::span<const std::uint8_t> fov, double t) {
  check_sizes(prob.size(), gt.size(), fov.size(), "confusion_at_threshold");
  ConfusionCounts c;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (!fov[i]) continue;
    const bool pred = static_cast<double>(prob[i]) >= t;
    const bool truth = gt[i] != 0;
    if (pred && truth) ++c.tp;
    else if (pred) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

PixelMetrics pixel_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  PixelMetrics m;
  m.se = ratio(tp, tp + fn);
  m.sp = ratio(tn, tn + fp);
  m.acc = ratio(tp + tn, tp + tn + fp + fn);
  m.pr = ratio(tp, tp + fp);
  if (m.pr && m.se) m.f1 = *m.pr + *m.se > 0 ? 2 * *m.pr * *m.se / (*m.pr + *m.se) : 0.0;
  return m;
}

double roc_auc(std::span<const float> prob, std::span<const std::uint8_t> gt, std::span<const std::uint8_t> fov) {
  check_sizes(prob.size(), gt.size(), fov.size(), "roc_auc");
  std::uint64_t pos = 0, neg = 0;
  const auto s = collect(prob, gt, fov, pos, neg);
  // Twice the U statistic so tie halves stay integral.
  unsigned __int128 twice_u = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, n = 0;
    for (; j < s.size() && s[j].score == s[i].score; ++j) (s[j].positive ? p : n) += 1;
    twice_u += static_cast<unsigned __int128>(2 * p) * neg_below + static_cast<unsigned __int128>(p) * n;
    neg_below += n;
    i = j;
  }
  return static_cast<double>(static_cast<long double>(twice_u) /
                             (2.0L * static_cast<long double>(pos) * static_cast<long double>(neg)));
}

ThresholdChoice optimal_threshold(std::span<const float> prob, std::span<const std::uint8_t> gt,
                                  std::span<const std::uint8_t> fov) {
  check_sizes(prob.size(), gt.size(), fov.size(), "optimal_threshold");
  std::uint64_t pos = 0, neg = 0;
  const auto s = collect(prob, gt, fov, pos, neg);
  // J = TP/P - FP/N; compare P*N*J = TP*N - FP*P exactly.
  __int128 best = std::numeric_limits<std::int64_t>::min();
  std::uint64_t tp = 0, fp = 0, best_tp = 0, best_fp = 0;
  float best_t = s.back().score;
  for (std::size_t j = s.size(); j > 0;) {
    std::size_t i = j;
    const float score = s[j - 1].score;
    for (; i > 0 && s[i - 1].score == score; --i) (s[i - 1].positive ? tp : fp) += 1;
    const __int128 key = static_cast<__int128>(tp) * neg - static_cast<__int128>(fp) * pos;
    if (key > best) {
      best = key;
      best_t = score;
      best_tp = tp;
      best_fp = fp;
    }
    j = i;
  }
  ThresholdChoice out;
  out.threshold = best_t;
  out.youden = static_cast<double>(best_tp) / pos - static_cast<double>(best_fp) / neg;
  return out;
}

// -- image quality ----------------------------------------------------------------

namespace {

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

/// Valid-mode separable Gaussian filter: output (H-10) x (W-10).
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w, const std::array<double, kWin>& g) {
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * in[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(std::span<const double> a, std::span<const double> b, int height, int width) {
  const auto n = static_cast<std::size_t>(height) * width;
  if (a.size() != n || b.size() != n) throw std::invalid_argument("ssim: map sizes differ");
  if (height < kWin || width < kWin) throw std::invalid_argument("ssim: maps must be at least 11 x 11");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end()), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, height, width, g);
  const auto mu_b = filter_valid(vb, height, width, g);
  const auto s_aa = filter_valid(aa, height, width, g);
  const auto s_bb = filter_valid(bb, height, width, g);
  const auto s_ab = filter_valid(ab, height, width, g);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = s_aa[i] - ma * ma, var_b = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double psnr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("psnr: map sizes differ or are empty");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// -- aggregation ------------------------------------------------------------------

AggregationMode parse_aggregation(const std::string& text) {
  if (text == "pooled") return AggregationMode::kPooled;
  if (text == "per-image" || text == "per_image" || text == "image") return AggregationMode::kPerImage;
  throw std::invalid_argument("unknown evaluation mode '" + text + "' (expected pooled or per-image)");
}

std::string to_string(AggregationMode mode) { return mode == AggregationMode::kPooled ? "pooled" : "per-image"; }

namespace {

bool has_both_classes(const ImageEval& im) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < im.gt.size() && !(pos && neg); ++i) {
    if (!im.fov[i]) continue;
    (im.gt[i] ? pos : neg) = true;
  }
  return pos && neg;
}

ImageReport evaluate_image(const ImageEval& im, double threshold) {
  const auto n = static_cast<std::size_t>(im.height) * im.width;
  if (im.prob.size() != n || im.gt.size() != n || im.fov.size() != n) {
    throw std::invalid_argument(im.id + ": prediction, GT and FOV sizes differ");
  }
  ImageReport r;
  r.id = im.id;
  r.threshold = threshold;
  r.counts = confusion_at_threshold(im.prob, im.gt, im.fov, threshold);
  r.metrics = pixel_metrics(r.counts);
  if (has_both_classes(im)) r.auc = roc_auc(im.prob, im.gt, im.fov);
  std::vector<double> p(im.prob.begin(), im.prob.end()), g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = im.gt[i] ? 1.0 : 0.0;
  r.ssim = ssim(p, g, im.height, im.width);
  r.psnr = psnr(p, g);
  r.ms = im.ms;
  return r;
}

std::optional<double> mean_defined(const std::vector<ImageReport>& rows,
                                   const std::function<std::optional<double>(const ImageReport&)>& get) {
  double sum = 0;
  int n = 0;
  for (const auto& r : rows) {
    if (auto v = get(r)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

EvalReport aggregate(std::span<const ImageEval> images, AggregationMode mode, std::optional<double> threshold_override) {
  if (images.empty()) throw std::invalid_argument("aggregate: no images to evaluate");
  EvalReport rep;
  rep.mode = mode;

  if (mode == AggregationMode::kPooled) {
    std::vector<float> prob;
    std::vector<std::uint8_t> gt, fov;
    for (const auto& im : images) {
      prob.insert(prob.end(), im.prob.begin(), im.prob.end());
      gt.insert(gt.end(), im.gt.begin(), im.gt.end());
      fov.insert(fov.end(), im.fov.begin(), im.fov.end());
    }
    check_sizes(prob.size(), gt.size(), fov.size(), "aggregate");
    double t = threshold_override.value_or(0.5);
    if (!threshold_override) {
      const ThresholdChoice choice = optimal_threshold(prob, gt, fov);
      t = choice.threshold;
      rep.weak_threshold = choice.youden <= 0;
    }
    for (const auto& im : images) rep.images.push_back(evaluate_image(im, t));
    rep.summary.id = "pooled";
    rep.summary.threshold = t;
    for (const auto& r : rep.images) rep.summary.counts += r.counts;
    rep.summary.metrics = pixel_metrics(rep.summary.counts);
    rep.summary.auc = roc_auc(prob, gt, fov);
  } else {
    for (const auto& im : images) {
      double t = threshold_override.value_or(0.5);
      if (!threshold_override && has_both_classes(im)) {
        const ThresholdChoice choice = optimal_threshold(im.prob, im.gt, im.fov);
        t = choice.threshold;
        rep.weak_threshold = rep.weak_threshold || choice.youden <= 0;
      }
      rep.images.push_back(evaluate_image(im, t));
    }
    auto& s = rep.summary;
    s.id = "mean";
    for (const auto& r : rep.images) s.counts += r.counts;
    s.threshold = *mean_defined(rep.images, [](const ImageReport& r) { return std::optional(r.threshold); });
    s.metrics.se = mean_defined(rep.images, [](const ImageReport& r) { return r.metrics.se; });
    s.metrics.sp = mean_defined(rep.images, [](const ImageReport& r) { return r.metrics.sp; });
    s.metrics.acc = mean_defined(rep.images, [](const ImageReport& r) { return r.metrics.acc; });
    s.metrics.pr = mean_defined(rep.images, [](const ImageReport& r) { return r.metrics.pr; });
    s.metrics.f1 = mean_defined(rep.images, [](const ImageReport& r) { return r.metrics.f1; });
    s.auc = mean_defined(rep.images, [](const ImageReport& r) { return r.auc; });
  }

  double ssim_sum = 0, psnr_sum = 0, ms_sum = 0;
  for (const auto& r : rep.images) {
    ssim_sum += r.ssim;
    psnr_sum += r.psnr;
    ms_sum += r.ms;
  }
  const auto n = static_cast<double>(rep.images.size());
  rep.summary.ssim = ssim_sum / n;
  rep.summary.psnr = psnr_sum / n;
  rep.summary.ms = ms_sum / n;
  if (rep.summary.ms > 0) rep.fps = 1000.0 / rep.summary.ms;
  return rep;
}

// -- output -----------------------------------------------------------------------

namespace {

std::string fmt(std::optional<double> v, int precision = 6) {
  if (!v) return "NA";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
  return buf;
}

void csv_row(std::ostream& out, const ImageReport& r) {
  out << r.id << ',' << fmt(r.threshold) << ',' << fmt(r.metrics.se) << ',' << fmt(r.metrics.sp) << ','
      << fmt(r.metrics.acc) << ',' << fmt(r.metrics.f1) << ',' << fmt(r.auc) << ',' << fmt(r.ssim) << ','
      << fmt(r.psnr) << ',' << fmt(r.ms, 3) << '\n';
}

}  // namespace

void write_csv(std::ostream& out, const EvalReport& report) {
  out << "id,threshold,se,sp,acc,f1,auc,ssim,psnr,ms\n";
  for (const auto& r : report.images) csv_row(out, r);
  csv_row(out, report.summary);
}

void write_text(std::ostream& out, const EvalReport& report) {
  auto line = [&out](const ImageReport& r) {
    out << std::left << std::setw(18) << r.id << std::right << std::setw(9) << fmt(r.threshold, 4) << std::setw(9)
        << fmt(r.metrics.se, 4) << std::setw(9) << fmt(r.metrics.sp, 4) << std::setw(9) << fmt(r.metrics.acc, 4)
        << std::setw(9) << fmt(r.metrics.f1, 4) << std::setw(9) << fmt(r.auc, 4) << std::setw(9) << fmt(r.ssim, 4)
        << std::setw(9) << fmt(r.psnr, 2) << std::setw(10) << fmt(r.ms, 1) << '\n';
  };
  out << std::left << std::setw(18) << "id" << std::right << std::setw(9) << "thresh" << std::setw(9) << "Se"
      << std::setw(9) << "Sp" << std::setw(9) << "Acc" << std::setw(9) << "F1" << std::setw(9) << "AUC"
      << std::setw(9) << "SSIM" << std::setw(9) << "PSNR" << std::setw(10) << "ms" << '\n';
  for (const auto& r : report.images) line(r);
  out << std::string(99, '-') << '\n';
  line(report.summary);
  out << "mode: " << to_string(report.mode) << ", images: " << report.images.size();
  if (report.fps > 0) out << ", fps: " << fmt(report.fps, 3);
  out << '\n';
  if (report.weak_threshold) out << "warning: best Youden J <= 0; the predictor does not separate the classes\n";
}

}  // namespace dpn
