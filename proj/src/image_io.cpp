#include "dpn/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <cstring>
#include <stdexcept>

namespace dpn {

namespace {

Raster from_mat(const cv::Mat& m) {
  Raster r(m.rows, m.cols, m.channels());
  for (int y = 0; y < m.rows; ++y) std::memcpy(&r.px[r.index(y, 0)], m.ptr<std::uint8_t>(y), r.width * r.channels);
  return r;
}

cv::Mat to_mat(const Raster& r) {
  cv::Mat m(r.height, r.width, CV_8UC(r.channels));
  for (int y = 0; y < r.height; ++y) std::memcpy(m.ptr<std::uint8_t>(y), &r.px[r.index(y, 0)], r.width * r.channels);
  return m;
}

cv::Mat load(const std::filesystem::path& path, int flags) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing file: " + path.string());
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw std::runtime_error("cannot decode image: " + path.string());
  if (m.depth() != CV_8U) {
    cv::Mat converted;
    m.convertTo(converted, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    m = converted;
  }
  return m;
}

}  // namespace

Raster read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = load(path, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return from_mat(rgb);
}

Raster read_gray(const std::filesystem::path& path) { return from_mat(load(path, cv::IMREAD_GRAYSCALE)); }

Raster read_mask(const std::filesystem::path& path) {
  Raster r = read_gray(path);
  for (auto& v : r.px) v = v > 127 ? 1 : 0;
  return r;
}

void write_png(const std::filesystem::path& path, const Raster& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_png: unsupported channel count " + std::to_string(image.channels));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  cv::Mat m = to_mat(image);
  if (image.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write image: " + path.string());
}

void write_mask_png(const std::filesystem::path& path, const Raster& mask) {
  Raster scaled = mask;
  for (auto& v : scaled.px) v = v ? 255 : 0;
  write_png(path, scaled);
}

}  // namespace dpn
