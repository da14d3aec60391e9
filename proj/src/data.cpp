#include "dpn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <iostream>
#include <map>
#include <numbers>
#include <opencv2/imgproc.hpp>
#include <stdexcept>

namespace dpn {

namespace fs = std::filesystem;

// -- Sample -------------------------------------------------------------------

void Sample::check() const {
  if (image.channels != 3) throw std::invalid_argument(id + ": image must have 3 channels");
  if (!label.same_size(image) || !fov.same_size(image)) {
    throw std::invalid_argument(id + ": image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                                ", label " + std::to_string(label.width) + "x" + std::to_string(label.height) +
                                ", fov " + std::to_string(fov.width) + "x" + std::to_string(fov.height) +
                                " do not match");
  }
}

std::string Sample::file_stem() const { return tag == "orig" ? id : id + "_" + tag; }

Tensor4 Sample::image_tensor() const {
  const auto h = static_cast<std::size_t>(image.height), w = static_cast<std::size_t>(image.width);
  Tensor4 t(Shape{1, 3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    auto plane = t.plane(0, c);
    for (std::size_t i = 0; i < h * w; ++i) plane[i] = static_cast<float>(image.px[i * 3 + c]) / 255.0f;
  }
  return t;
}

Tensor4 Sample::label_tensor() const {
  Tensor4 t(Shape{1, 1, static_cast<std::size_t>(label.height), static_cast<std::size_t>(label.width)});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = label.px[i] ? 1.0f : 0.0f;
  return t;
}

// -- dataset specs --------------------------------------------------------------

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

DatasetName parse_dataset(std::string_view text) {
  const std::string t = lower(text);
  if (t == "drive") return DatasetName::kDrive;
  if (t == "chase" || t == "chase_db1" || t == "chasedb1") return DatasetName::kChase;
  if (t == "hrf") return DatasetName::kHrf;
  throw std::invalid_argument("unknown dataset '" + std::string(text) + "' (expected drive, chase or hrf)");
}

std::string to_string(DatasetName name) {
  switch (name) {
    case DatasetName::kDrive: return "drive";
    case DatasetName::kChase: return "chase";
    case DatasetName::kHrf: return "hrf";
  }
  return "?";
}

ChaseSplit parse_chase_split(std::string_view text) {
  if (text == "20/8" || text == "20_8") return ChaseSplit::k20_8;
  if (text == "14/14" || text == "14_14") return ChaseSplit::k14_14;
  throw std::invalid_argument("unknown CHASE split '" + std::string(text) + "' (expected 20/8 or 14/14)");
}

DatasetSpec DatasetSpec::defaults(DatasetName name, fs::path root) {
  DatasetSpec s;
  s.name = name;
  s.root = std::move(root);
  switch (name) {
    case DatasetName::kDrive:
      s.crop_size = 512;
      s.iterations = 100000;
      break;
    case DatasetName::kChase:
      s.crop_size = 632;
      s.iterations = 100000;
      break;
    case DatasetName::kHrf:
      s.crop_size = 588;
      s.iterations = 70000;
      s.resize = true;
      break;
  }
  return s;
}

int DatasetSpec::expected_train() const {
  switch (name) {
    case DatasetName::kDrive: return 20;
    case DatasetName::kChase: return chase_split == ChaseSplit::k20_8 ? 20 : 14;
    case DatasetName::kHrf: return 15;
  }
  return 0;
}

int DatasetSpec::expected_test() const {
  switch (name) {
    case DatasetName::kDrive: return 20;
    case DatasetName::kChase: return chase_split == ChaseSplit::k20_8 ? 8 : 14;
    case DatasetName::kHrf: return 30;
  }
  return 0;
}

// -- loading --------------------------------------------------------------------

namespace {

bool is_image_file(const fs::path& p) {
  static const char* const kExt[] = {".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp", ".ppm", ".gif"};
  const std::string ext = lower(p.extension().string());
  return std::any_of(std::begin(kExt), std::end(kExt), [&](const char* e) { return ext == e; });
}

std::map<std::string, fs::path> index_dir(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second) {
      throw std::runtime_error("two files share the stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

}  // namespace

std::vector<Sample> load_directory(const fs::path& dir, bool allow_missing_fov, bool resize_hrf) {
  const fs::path image_dir = dir / "images";
  if (!fs::is_directory(image_dir)) throw std::runtime_error("missing directory: " + image_dir.string());
  const auto images = index_dir(image_dir);
  const auto labels = index_dir(dir / "labels");
  const auto fovs = index_dir(dir / "fov");

  std::vector<Sample> out;
  out.reserve(images.size());
  for (const auto& [stem, path] : images) {
    Sample s;
    s.id = stem;
    s.source = path;
    s.image = read_rgb(path);
    const auto lab = labels.find(stem);
    if (lab == labels.end()) throw std::runtime_error("missing label for '" + stem + "' in " + (dir / "labels").string());
    s.label = read_mask(lab->second);
    if (const auto f = fovs.find(stem); f != fovs.end()) {
      s.fov = read_mask(f->second);
    } else if (allow_missing_fov) {
      s.fov = fov_generate(s.image);
    } else {
      throw std::runtime_error("missing FOV mask for '" + stem + "' in " + (dir / "fov").string());
    }
    s.check();
    out.push_back(resize_hrf ? hrf_resize(s) : std::move(s));
  }
  return out;
}

Split load_split(const DatasetSpec& spec) {
  const bool chase = spec.name == DatasetName::kChase;
  std::vector<Sample> all = load_directory(spec.root, chase, spec.resize);
  const auto n_train = static_cast<std::size_t>(spec.expected_train());
  const auto n_test = static_cast<std::size_t>(spec.expected_test());
  Split split;

  const bool tagged = spec.name == DatasetName::kDrive && std::any_of(all.begin(), all.end(), [](const Sample& s) {
                        return s.id.find("_training") != std::string::npos || s.id.find("_test") != std::string::npos;
                      });
  if (tagged) {
    for (auto& s : all) {
      if (s.id.find("_training") != std::string::npos) split.train.push_back(std::move(s));
      else if (s.id.find("_test") != std::string::npos) split.test.push_back(std::move(s));
      else std::cerr << "warning: " << s.id << " is neither _training nor _test; ignored\n";
    }
    if (split.train.size() != n_train || split.test.size() != n_test) {
      std::cerr << "warning: " << to_string(spec.name) << " split has " << split.train.size() << " train / "
                << split.test.size() << " test images (expected " << n_train << "/" << n_test << ")\n";
    }
  } else {
    if (all.size() < n_train + n_test) {
      throw std::runtime_error(to_string(spec.name) + ": found " + std::to_string(all.size()) + " images in " +
                               (spec.root / "images").string() + ", need " + std::to_string(n_train + n_test));
    }
    for (std::size_t i = 0; i < n_train + n_test; ++i) {
      (i < n_train ? split.train : split.test).push_back(std::move(all[i]));
    }
  }

  return split;
}

// -- geometric transforms ---------------------------------------------------------

Raster hflip(const Raster& r) {
  Raster out(r.height, r.width, r.channels);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < r.channels; ++c) out.at(y, x, c) = r.at(y, r.width - 1 - x, c);
  return out;
}

Raster vflip(const Raster& r) {
  Raster out(r.height, r.width, r.channels);
  const std::size_t row = static_cast<std::size_t>(r.width) * r.channels;
  for (int y = 0; y < r.height; ++y) std::memcpy(&out.px[out.index(y, 0)], &r.px[r.index(r.height - 1 - y, 0)], row);
  return out;
}

namespace {

int floor_div2(int v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

/// Quarter turns as integer maps out(y, x) = in(ys, xs); cells that land
/// outside the source are zero.
Raster rotate_quarter(const Raster& r, int quarters) {
  const int H = r.height, W = r.width;
  Raster out(H, W, r.channels);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      int xs = 0, ys = 0;
      switch (quarters) {
        case 1:
          xs = floor_div2(W + H - 2) - y;
          ys = floor_div2(H - W) + x;
          break;
        case 2:
          xs = W - 1 - x;
          ys = H - 1 - y;
          break;
        case 3:
          xs = floor_div2(W - H) + y;
          ys = floor_div2(W + H - 2) - x;
          break;
        default:
          xs = x;
          ys = y;
      }
      if (xs < 0 || ys < 0 || xs >= W || ys >= H) continue;
      for (int c = 0; c < r.channels; ++c) out.at(y, x, c) = r.at(ys, xs, c);
    }
  }
  return out;
}

/// Returns the quarter-turn count when degrees is a multiple of 90.
int quarter_turns(double degrees) {
  const double q = degrees / 90.0;
  const double rq = std::round(q);
  if (std::abs(q - rq) > 1e-12) return -1;
  return static_cast<int>(((static_cast<long long>(rq) % 4) + 4) % 4);
}

template <typename Sampler>
Raster rotate_generic(const Raster& r, double degrees, Sampler sample) {
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cx = (r.width - 1) / 2.0, cy = (r.height - 1) / 2.0;
  Raster out(r.height, r.width, r.channels);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      sample(out, y, x, cx + cs * dx - sn * dy, cy + sn * dx + cs * dy);
    }
  }
  return out;
}

}  // namespace

Raster rotate_bilinear(const Raster& r, double degrees) {
  if (const int q = quarter_turns(degrees); q >= 0) return rotate_quarter(r, q);
  return rotate_generic(r, degrees, [&r](Raster& out, int y, int x, double xs, double ys) {
    const int x0 = static_cast<int>(std::floor(xs)), y0 = static_cast<int>(std::floor(ys));
    const double fx = xs - x0, fy = ys - y0;
    if (x0 < -1 || y0 < -1 || x0 >= r.width || y0 >= r.height) return;
    const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xx[4] = {x0, x0 + 1, x0, x0 + 1}, yy[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int c = 0; c < r.channels; ++c) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) {
        if (xx[k] < 0 || yy[k] < 0 || xx[k] >= r.width || yy[k] >= r.height) continue;
        acc += wts[k] * r.at(yy[k], xx[k], c);
      }
      out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
    }
  });
}

Raster rotate_nearest(const Raster& r, double degrees) {
  if (const int q = quarter_turns(degrees); q >= 0) return rotate_quarter(r, q);
  return rotate_generic(r, degrees, [&r](Raster& out, int y, int x, double xs, double ys) {
    const auto xi = static_cast<int>(std::floor(xs + 0.5)), yi = static_cast<int>(std::floor(ys + 0.5));
    if (xi < 0 || yi < 0 || xi >= r.width || yi >= r.height) return;
    for (int c = 0; c < r.channels; ++c) out.at(y, x, c) = r.at(yi, xi, c);
  });
}

namespace {

std::string angle_tag(double degrees) {
  const double d = std::fmod(degrees, 360.0);
  return "rot" + std::to_string(std::lround(d < 0 ? d + 360.0 : d));
}

}  // namespace

Sample hflip(const Sample& s) {
  return Sample{hflip(s.image), hflip(s.label), hflip(s.fov), s.id, "hflip", s.source};
}

Sample vflip(const Sample& s) {
  return Sample{vflip(s.image), vflip(s.label), vflip(s.fov), s.id, "vflip", s.source};
}

Sample rotate(const Sample& s, double degrees) {
  return Sample{rotate_bilinear(s.image, degrees), rotate_nearest(s.label, degrees), rotate_nearest(s.fov, degrees),
                s.id, angle_tag(degrees), s.source};
}

const std::vector<std::string>& augmentation_tags() {
  static const std::vector<std::string> tags{"orig",   "hflip",  "vflip",  "rot22",  "rot45", "rot90",
                                             "rot135", "rot180", "rot225", "rot270", "rot315"};
  return tags;
}

std::vector<Sample> augment_sample(const Sample& s) {
  static constexpr double kAngles[] = {22, 45, 90, 135, 180, 225, 270, 315};
  std::vector<Sample> out;
  out.reserve(11);
  out.push_back(s);
  out.back().tag = "orig";
  out.push_back(hflip(s));
  out.push_back(vflip(s));
  for (double a : kAngles) out.push_back(rotate(s, a));
  return out;
}

std::vector<Sample> augment_offline(const std::vector<Sample>& train) {
  std::vector<std::vector<Sample>> parts(train.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(train.size()); ++i) parts[i] = augment_sample(train[i]);
  std::vector<Sample> out;
  out.reserve(train.size() * 11);
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

// -- cropping ---------------------------------------------------------------------

namespace {

Raster crop_raster(const Raster& r, int y0, int x0, int h, int w) {
  Raster out(h, w, r.channels);
  const std::size_t row = static_cast<std::size_t>(w) * r.channels;
  for (int y = 0; y < h; ++y) std::memcpy(&out.px[out.index(y, 0)], &r.px[r.index(y0 + y, x0)], row);
  return out;
}

}  // namespace

Sample crop(const Sample& s, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > s.height() || x0 + w > s.width()) {
    throw std::invalid_argument("crop window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                                std::to_string(y0) + "," + std::to_string(x0) + ") exceeds " +
                                std::to_string(s.height()) + "x" + std::to_string(s.width()));
  }
  return Sample{crop_raster(s.image, y0, x0, h, w), crop_raster(s.label, y0, x0, h, w),
                crop_raster(s.fov, y0, x0, h, w), s.id, s.tag, s.source};
}

Sample random_crop(const Sample& s, int size, std::mt19937_64& rng) {
  if (size < 1 || size > s.height() || size > s.width()) {
    throw std::invalid_argument("crop size " + std::to_string(size) + " does not fit " + std::to_string(s.height()) +
                                "x" + std::to_string(s.width()));
  }
  std::uniform_int_distribution<int> dy(0, s.height() - size);
  std::uniform_int_distribution<int> dx(0, s.width() - size);
  const int y0 = dy(rng);
  const int x0 = dx(rng);
  return crop(s, y0, x0, size, size);
}

Sample random_mirror(const Sample& s, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  if (!coin(rng)) return s;
  Sample out = hflip(s);
  out.tag = s.tag;
  return out;
}

// -- resizing ---------------------------------------------------------------------

Raster resize_bilinear(const Raster& r, int height, int width) {
  Raster out(height, width, r.channels);
  const double sy = static_cast<double>(r.height) / height, sx = static_cast<double>(r.width) / width;
  for (int y = 0; y < height; ++y) {
    const double ys = std::clamp((y + 0.5) * sy - 0.5, 0.0, r.height - 1.0);
    const int y0 = static_cast<int>(ys), y1 = std::min(y0 + 1, r.height - 1);
    const double fy = ys - y0;
    for (int x = 0; x < width; ++x) {
      const double xs = std::clamp((x + 0.5) * sx - 0.5, 0.0, r.width - 1.0);
      const int x0 = static_cast<int>(xs), x1 = std::min(x0 + 1, r.width - 1);
      const double fx = xs - x0;
      for (int c = 0; c < r.channels; ++c) {
        const double top = r.at(y0, x0, c) * (1 - fx) + r.at(y0, x1, c) * fx;
        const double bot = r.at(y1, x0, c) * (1 - fx) + r.at(y1, x1, c) * fx;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(top * (1 - fy) + bot * fy), 0L, 255L));
      }
    }
  }
  return out;
}

Raster resize_nearest(const Raster& r, int height, int width) {
  Raster out(height, width, r.channels);
  for (int y = 0; y < height; ++y) {
    const int ys = std::min(static_cast<int>((y + 0.5) * r.height / height), r.height - 1);
    for (int x = 0; x < width; ++x) {
      const int xs = std::min(static_cast<int>((x + 0.5) * r.width / width), r.width - 1);
      for (int c = 0; c < r.channels; ++c) out.at(y, x, c) = r.at(ys, xs, c);
    }
  }
  return out;
}

Sample hrf_resize(const Sample& s) {
  if (s.height() != 2336 || s.width() != 3504) {
    std::cerr << "warning: " << s.id << " is " << s.height() << "x" << s.width()
              << " (HxW), expected the native HRF 2336x3504\n";
  }
  return Sample{resize_bilinear(s.image, kHrfHeight, kHrfWidth), resize_nearest(s.label, kHrfHeight, kHrfWidth),
                resize_nearest(s.fov, kHrfHeight, kHrfWidth), s.id, s.tag, s.source};
}

// -- FOV ----------------------------------------------------------------------------

Raster fov_generate(const Raster& image) {
  if (image.channels < 1 || image.empty()) throw std::invalid_argument("fov_generate: empty image");
  std::uint8_t peak = 0;
  for (std::size_t i = 0; i < image.px.size(); i += image.channels) peak = std::max(peak, image.px[i]);
  if (peak == 0) throw std::invalid_argument("fov_generate: red channel is all zero");

  const double thresh = 0.1 * peak;
  cv::Mat bin(image.height, image.width, CV_8U);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bin.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) row[x] = image.at(y, x, 0) > thresh ? 1 : 0;
  }

  cv::Mat labels, stats, centroids;
  const int n = cv::connectedComponentsWithStats(bin, labels, stats, centroids, 8, CV_32S);
  int best = 0, best_area = 0;
  for (int i = 1; i < n; ++i) {
    const int area = stats.at<int>(i, cv::CC_STAT_AREA);
    if (area > best_area) {
      best_area = area;
      best = i;
    }
  }
  if (best == 0) throw std::invalid_argument("fov_generate: no foreground above threshold");
  cv::Mat largest = (labels == best) / 255;

  const cv::Mat disk = cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(11, 11));
  cv::Mat closed;
  cv::morphologyEx(largest, closed, cv::MORPH_CLOSE, disk);

  Raster out(image.height, image.width, 1);
  for (int y = 0; y < image.height; ++y) {
    const auto* row = closed.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) out.at(y, x) = row[x] ? 1 : 0;
  }
  return out;
}

}  // namespace dpn
