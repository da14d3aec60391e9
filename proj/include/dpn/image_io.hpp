#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dpn {

/// 8-bit raster, channels interleaved, rows top to bottom.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> px;

  Raster() = default;
  Raster(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), px(static_cast<std::size_t>(h) * w * c, fill) {}

  [[nodiscard]] std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int y, int x, int c = 0) { return px[index(y, x, c)]; }
  [[nodiscard]] std::uint8_t at(int y, int x, int c = 0) const { return px[index(y, x, c)]; }
  [[nodiscard]] bool same_size(const Raster& o) const { return height == o.height && width == o.width; }
  [[nodiscard]] bool empty() const { return px.empty(); }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Reads any format OpenCV decodes as 3-channel RGB. Throws std::runtime_error naming the file.
Raster read_rgb(const std::filesystem::path& path);
/// Reads a single-channel 8-bit image (colour files are converted to gray).
Raster read_gray(const std::filesystem::path& path);
/// Binarizes a gray image: > 127 -> 1.
Raster read_mask(const std::filesystem::path& path);

/// Writes PNG (RGB or gray) exactly as stored.
void write_png(const std::filesystem::path& path, const Raster& image);
/// Writes a 0/1 mask as 0/255 PNG.
void write_mask_png(const std::filesystem::path& path, const Raster& mask);

}  // namespace dpn
