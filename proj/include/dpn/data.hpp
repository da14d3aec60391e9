#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dpn/image_io.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

/// One training or evaluation unit. Images are kept as 8-bit RGB and only
/// expanded to floats when fed to the network; label and fov hold 0/1.
struct Sample {
  Raster image;  // H x W x 3
  Raster label;  // H x W x 1
  Raster fov;    // H x W x 1
  std::string id;
  std::string tag = "orig";
  std::filesystem::path source;  // image file it was read from, if any

  [[nodiscard]] int height() const { return image.height; }
  [[nodiscard]] int width() const { return image.width; }
  /// Throws std::invalid_argument when label/fov dims differ from the image.
  void check() const;
  /// "<id>" for originals, "<id>_<tag>" otherwise.
  [[nodiscard]] std::string file_stem() const;

  /// [1, 3, H, W], values / 255.
  [[nodiscard]] Tensor4 image_tensor() const;
  /// [1, 1, H, W] of 0/1.
  [[nodiscard]] Tensor4 label_tensor() const;
};

enum class DatasetName : std::uint8_t { kDrive, kChase, kHrf };
enum class ChaseSplit : std::uint8_t { k20_8, k14_14 };

DatasetName parse_dataset(std::string_view text);  // drive | chase | hrf (case-insensitive)
std::string to_string(DatasetName name);
ChaseSplit parse_chase_split(std::string_view text);  // "20/8" | "14/14"

struct DatasetSpec {
  DatasetName name = DatasetName::kDrive;
  std::filesystem::path root;
  ChaseSplit chase_split = ChaseSplit::k20_8;
  int crop_size = 512;
  long iterations = 100000;
  bool resize = false;  // HRF: 2336x3504 -> 600x900

  /// Crop size, iteration budget and resize rule for one dataset.
  static DatasetSpec defaults(DatasetName name, std::filesystem::path root = {});
  [[nodiscard]] int expected_train() const;
  [[nodiscard]] int expected_test() const;
};

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Every image under <dir>/images paired by stem with <dir>/labels and
/// <dir>/fov, sorted by stem. Missing FOV files are generated when
/// allow_missing_fov is set, otherwise reported by name. With resize_hrf each
/// sample goes through hrf_resize as soon as it is read.
std::vector<Sample> load_directory(const std::filesystem::path& dir, bool allow_missing_fov, bool resize_hrf = false);

/// Loads and partitions a dataset root. HRF samples are resized when spec.resize.
Split load_split(const DatasetSpec& spec);

/// Original, hflip, vflip and rotations by 22, 45, 90, 135, 180, 225, 270, 315 degrees.
const std::vector<std::string>& augmentation_tags();
/// The 11 variants of one sample, in augmentation_tags() order.
std::vector<Sample> augment_sample(const Sample& s);
std::vector<Sample> augment_offline(const std::vector<Sample>& train);

Sample hflip(const Sample& s);
Sample vflip(const Sample& s);
/// Rotation about the image centre on the same canvas with zero fill.
/// Multiples of 90 degrees are exact index permutations.
Sample rotate(const Sample& s, double degrees);

Raster hflip(const Raster& r);
Raster vflip(const Raster& r);
Raster rotate_bilinear(const Raster& r, double degrees);
Raster rotate_nearest(const Raster& r, double degrees);

Sample crop(const Sample& s, int y0, int x0, int h, int w);
Sample random_crop(const Sample& s, int size, std::mt19937_64& rng);
Sample random_mirror(const Sample& s, std::mt19937_64& rng);

Raster resize_bilinear(const Raster& r, int height, int width);
Raster resize_nearest(const Raster& r, int height, int width);

inline constexpr int kHrfHeight = 600;
inline constexpr int kHrfWidth = 900;
/// Image bilinear, label and fov nearest, to 600 x 900. Warns on stderr when
/// the input is not the native 2336 x 3504.
Sample hrf_resize(const Sample& s);

/// Red channel above 10% of its maximum, largest connected component, closed
/// with a radius-5 disk. Throws std::invalid_argument for an all-black image.
Raster fov_generate(const Raster& image);

}  // namespace dpn
