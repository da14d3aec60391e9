#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace dpn {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  [[nodiscard]] std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Rates derived from a confusion table. A rate whose denominator is zero is
/// left empty rather than reported as 0.
struct PixelMetrics {
  std::optional<double> se, sp, acc, pr, f1;
};

/// Counts pixels with fov != 0; a pixel is predicted vessel when prob >= t.
ConfusionCounts confusion_at_threshold(std::span<const float> prob, std::span<const std::uint8_t> gt,
                                       std::span<const std::uint8_t> fov, double t);

PixelMetrics pixel_metrics(const ConfusionCounts& c);

/// Mann-Whitney statistic over FOV pixels, ties counted as one half. Exact
/// in integer arithmetic up to the final division. Throws std::invalid_argument
/// when either class is absent inside the FOV.
double roc_auc(std::span<const float> prob, std::span<const std::uint8_t> gt, std::span<const std::uint8_t> fov);

struct ThresholdChoice {
  double threshold = 0.5;
  double youden = 0.0;  // Se + Sp - 1 at threshold
};

/// Distinct FOV score maximizing Youden's J; ties go to the largest threshold.
/// Throws std::invalid_argument when either class is absent.
ThresholdChoice optimal_threshold(std::span<const float> prob, std::span<const std::uint8_t> gt,
                                  std::span<const std::uint8_t> fov);

/// Mean SSIM over every fully contained 11x11 Gaussian window (sigma 1.5,
/// K1 0.01, K2 0.03, dynamic range 1). Maps are H x W, row-major.
double ssim(std::span<const double> a, std::span<const double> b, int height, int width);
/// 10 log10(1 / MSE); +infinity when the maps are identical.
double psnr(std::span<const double> a, std::span<const double> b);

/// One evaluated image: probability map, binary GT and FOV (0/1), all H x W.
struct ImageEval {
  std::string id;
  int height = 0;
  int width = 0;
  std::vector<float> prob;
  std::vector<std::uint8_t> gt;
  std::vector<std::uint8_t> fov;
  double ms = 0.0;  // prediction wall time, 0 when unknown
};

struct ImageReport {
  std::string id;
  double threshold = 0.5;
  ConfusionCounts counts;
  PixelMetrics metrics;
  std::optional<double> auc;
  double ssim = 0.0;
  double psnr = 0.0;
  double ms = 0.0;
};

enum class AggregationMode : std::uint8_t {
  kPooled,    // one threshold and one ROC over all test pixels
  kPerImage,  // each image at its own optimal threshold, rates averaged
};

AggregationMode parse_aggregation(const std::string& text);  // pooled | per-image
std::string to_string(AggregationMode mode);

struct EvalReport {
  AggregationMode mode = AggregationMode::kPooled;
  std::vector<ImageReport> images;
  ImageReport summary;  // id "pooled" or "mean"
  bool weak_threshold = false;  // best Youden J was <= 0
  double fps = 0.0;             // 1000 / mean ms when timings exist
};

/// Per-image metrics plus the dataset-level row. With a threshold override no
/// threshold search is made. Throws std::invalid_argument on empty input.
EvalReport aggregate(std::span<const ImageEval> images, AggregationMode mode,
                     std::optional<double> threshold_override = std::nullopt);

/// One row per image plus the summary row:
/// id,threshold,se,sp,acc,f1,auc,ssim,psnr,ms. Undefined values print as NA.
void write_csv(std::ostream& out, const EvalReport& report);
void write_text(std::ostream& out, const EvalReport& report);

}  // namespace dpn
