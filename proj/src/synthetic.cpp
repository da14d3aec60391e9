#include "dpn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace dpn {

namespace {

struct Branch {
  double x, y, angle, width;
  int depth;
};

class VesselCanvas {
 public:
  VesselCanvas(int h, int w) : h_(h), w_(w), v_(static_cast<std::size_t>(h) * w, 0.0f) {}

  /// Anti-aliased disk: coverage 1 inside radius r, ramping to 0 over one pixel.
  void stamp(double cx, double cy, double r) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    const int x1 = std::min(w_ - 1, static_cast<int>(std::ceil(cx + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    const int y1 = std::min(h_ - 1, static_cast<int>(std::ceil(cy + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        const auto cover = static_cast<float>(std::clamp(r + 0.5 - d, 0.0, 1.0));
        float& dst = v_[static_cast<std::size_t>(y) * w_ + x];
        dst = std::max(dst, cover);
      }
    }
  }

  [[nodiscard]] float at(int y, int x) const { return v_[static_cast<std::size_t>(y) * w_ + x]; }

 private:
  int h_, w_;
  std::vector<float> v_;
};

}  // namespace

Sample synthesize_fundus(int height, int width, std::uint64_t seed, const std::string& id) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const double radius = 0.48 * std::min(height, width);
  const double scale = std::min(height, width) / 584.0;
  const double disc_x = cx + (unit(rng) < 0.5 ? -1 : 1) * 0.35 * radius;
  const double disc_y = cy + 0.05 * radius * gauss(rng);
  const double disc_r = 0.09 * radius;

  auto inside = [&](double x, double y) { return std::hypot(x - cx, y - cy) <= radius; };

  VesselCanvas canvas(height, width);
  std::vector<Branch> stack;
  const int trunks = 6 + static_cast<int>(unit(rng) * 4);
  for (int i = 0; i < trunks; ++i) {
    const double a = 2 * std::numbers::pi * (i + 0.3 * unit(rng)) / trunks;
    stack.push_back({disc_x + 0.5 * disc_r * std::cos(a), disc_y + 0.5 * disc_r * std::sin(a), a,
                     std::max((4.5 + 2.0 * unit(rng)) * scale, 2.5), 0});
  }

  const double step = std::max(0.75, 0.75 * scale);
  const double min_width = 1.4 * std::max(1.0, scale * 0.8);
  const long max_steps = static_cast<long>(2.5 * radius / step);
  while (!stack.empty()) {
    Branch b = stack.back();
    stack.pop_back();
    double curvature = 0.002 * gauss(rng);
    for (long s = 0; s < max_steps && b.width >= min_width && inside(b.x, b.y); ++s) {
      canvas.stamp(b.x, b.y, b.width / 2);
      curvature = 0.97 * curvature + 0.0015 * gauss(rng) / scale;
      b.angle += curvature + 0.012 * gauss(rng) / std::sqrt(scale);
      b.x += step * std::cos(b.angle);
      b.y += step * std::sin(b.angle);
      b.width *= 1.0 - 0.0007 / scale;
      if (b.depth < 7 && unit(rng) < 0.02 / scale) {
        const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
        stack.push_back({b.x, b.y, b.angle + side * (0.5 + 0.6 * unit(rng)), b.width * (0.55 + 0.2 * unit(rng)),
                         b.depth + 1});
        b.width *= 0.88;
        b.angle -= side * 0.15;
      }
    }
  }

  Sample out;
  out.id = id;
  out.image = Raster(height, width, 3);
  out.label = Raster(height, width, 1);
  out.fov = Raster(height, width, 1);
  const double light_dx = 0.3 * gauss(rng), light_dy = 0.3 * gauss(rng);
  std::normal_distribution<double> noise(0.0, 3.5);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = (x - cx) / radius, dy = (y - cy) / radius;
      const bool in = dx * dx + dy * dy <= 1.0;
      const double n0 = noise(rng), n1 = noise(rng), n2 = noise(rng);
      if (!in) {
        out.image.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(std::lround(2 + n0 * 0.3), 0L, 255L));
        out.image.at(y, x, 1) = 0;
        out.image.at(y, x, 2) = 0;
        continue;
      }
      out.fov.at(y, x) = 1;
      const float v = canvas.at(y, x);
      out.label.at(y, x) = v >= 0.5f ? 1 : 0;
      const double shade = 1.0 - 0.35 * (dx * dx + dy * dy) + 0.08 * (dx * light_dx + dy * light_dy);
      const double disc = std::exp(-(std::pow(x - disc_x, 2) + std::pow(y - disc_y, 2)) / (2 * disc_r * disc_r));
      double r = 190 * shade + 45 * disc;
      double g = 88 * shade + 70 * disc;
      double bl = 38 * shade + 45 * disc;
      r *= 1.0 - 0.28 * v;
      g *= 1.0 - 0.55 * v;
      bl *= 1.0 - 0.35 * v;
      out.image.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(std::lround(r + n0), 0L, 255L));
      out.image.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(std::lround(g + n1), 0L, 255L));
      out.image.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(std::lround(bl + n2), 0L, 255L));
    }
  }
  return out;
}

SyntheticLayout synthetic_layout(DatasetName name) {
  SyntheticLayout l;
  char buf[32];
  switch (name) {
    case DatasetName::kDrive:
      l.height = 584;
      l.width = 565;
      for (int i = 1; i <= 40; ++i) {
        std::snprintf(buf, sizeof buf, "%02d_%s", i, i <= 20 ? "test" : "training");
        l.stems.emplace_back(buf);
      }
      break;
    case DatasetName::kChase:
      l.height = 960;
      l.width = 999;
      l.write_fov = false;
      for (int i = 1; i <= 14; ++i) {
        for (char eye : {'L', 'R'}) {
          std::snprintf(buf, sizeof buf, "Image_%02d%c", i, eye);
          l.stems.emplace_back(buf);
        }
      }
      break;
    case DatasetName::kHrf:
      l.height = 2336;
      l.width = 3504;
      for (int i = 1; i <= 15; ++i) {
        for (const char* kind : {"dr", "g", "h"}) {
          std::snprintf(buf, sizeof buf, "%02d_%s", i, kind);
          l.stems.emplace_back(buf);
        }
      }
      break;
  }
  return l;
}

int write_synthetic_dataset(DatasetName name, const std::filesystem::path& root, std::uint64_t seed) {
  const SyntheticLayout layout = synthetic_layout(name);
  for (std::size_t i = 0; i < layout.stems.size(); ++i) {
    const std::string& stem = layout.stems[i];
    const Sample s = synthesize_fundus(layout.height, layout.width, seed + 0x9E3779B97F4A7C15ULL * (i + 1), stem);
    write_png(root / "images" / (stem + ".png"), s.image);
    write_mask_png(root / "labels" / (stem + ".png"), s.label);
    if (layout.write_fov) write_mask_png(root / "fov" / (stem + ".png"), s.fov);
  }
  return static_cast<int>(layout.stems.size());
}

}  // namespace dpn
