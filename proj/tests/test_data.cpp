#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "dpn/data.hpp"
#include "dpn/image_io.hpp"
#include "dpn/synthetic.hpp"

using namespace dpn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dpn_data_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Pixel (y, x) holds y, x and a fixed third value; label and fov are checkerboards.
Sample ramp_sample(int h, int w) {
  Sample s;
  s.image = Raster(h, w, 3);
  s.label = Raster(h, w, 1);
  s.fov = Raster(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      s.image.at(y, x, 0) = static_cast<std::uint8_t>(y);
      s.image.at(y, x, 1) = static_cast<std::uint8_t>(x);
      s.image.at(y, x, 2) = 200;
      s.label.at(y, x) = (x + y) % 2;
      s.fov.at(y, x) = (x / 3 + y) % 2;
    }
  s.id = "ramp";
  return s;
}

Sample random_sample(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  std::bernoulli_distribution bit(0.3);
  Sample s;
  s.image = Raster(h, w, 3);
  s.label = Raster(h, w, 1);
  s.fov = Raster(h, w, 1);
  for (auto& v : s.image.px) v = static_cast<std::uint8_t>(byte(rng));
  for (auto& v : s.label.px) v = bit(rng);
  for (auto& v : s.fov.px) v = bit(rng);
  s.id = "rand";
  return s;
}

bool binary(const Raster& r) {
  return std::all_of(r.px.begin(), r.px.end(), [](std::uint8_t v) { return v <= 1; });
}

Raster disk_image(int h, int w, double cy, double cx, double radius) {
  Raster img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::hypot(y - cy, x - cx) <= radius) {
        img.at(y, x, 0) = 190;
        img.at(y, x, 1) = 90;
        img.at(y, x, 2) = 40;
      }
  return img;
}

}  // namespace

TEST_CASE("dataset specs") {
  const DatasetSpec d = DatasetSpec::defaults(DatasetName::kDrive);
  const DatasetSpec c = DatasetSpec::defaults(DatasetName::kChase);
  const DatasetSpec h = DatasetSpec::defaults(DatasetName::kHrf);
  CHECK(d.crop_size == 512);
  CHECK(c.crop_size == 632);
  CHECK(h.crop_size == 588);
  CHECK(d.iterations == 100000);
  CHECK(c.iterations == 100000);
  CHECK(h.iterations == 70000);
  CHECK(h.resize);
  CHECK_FALSE(d.resize);
  CHECK(d.expected_train() == 20);
  CHECK(d.expected_test() == 20);
  CHECK(h.expected_train() == 15);
  CHECK(h.expected_test() == 30);
  DatasetSpec c14 = c;
  c14.chase_split = ChaseSplit::k14_14;
  CHECK(c.expected_train() == 20);
  CHECK(c.expected_test() == 8);
  CHECK(c14.expected_train() == 14);
  CHECK(c14.expected_test() == 14);
  CHECK(parse_dataset("CHASE") == DatasetName::kChase);
  CHECK_THROWS(parse_dataset("stare"));
  CHECK(parse_chase_split("14/14") == ChaseSplit::k14_14);
  CHECK_THROWS(parse_chase_split("10/18"));
}

TEST_CASE("sample tensors are scaled to [0, 1]") {
  const Sample s = ramp_sample(4, 5);
  const Tensor4 img = s.image_tensor();
  CHECK(img.shape() == Shape{1, 3, 4, 5});
  CHECK(img(0, 0, 3, 0) == doctest::Approx(3.0 / 255.0));
  CHECK(img(0, 2, 1, 1) == doctest::Approx(200.0 / 255.0));
  CHECK(s.label_tensor()(0, 0, 0, 1) == 1.0f);
  Sample bad = s;
  bad.label = Raster(4, 4, 1);
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}

TEST_CASE("flips and quarter turns are exact permutations") {
  const Sample s = random_sample(9, 9, 1);
  CHECK(hflip(hflip(s)).image == s.image);
  CHECK(vflip(vflip(s)).label == s.label);
  const Sample r180 = rotate(s, 180);
  CHECK(r180.tag == "rot180");
  const Sample back = rotate(r180, 180);
  CHECK(back.image == s.image);
  CHECK(back.label == s.label);
  CHECK(back.fov == s.fov);
  CHECK(rotate(rotate(s, 90), 270).image == s.image);
  CHECK(rotate(rotate(rotate(rotate(s, 90), 90), 90), 90).image == s.image);
  CHECK(rotate(s, 180).image == vflip(hflip(s)).image);
  // Non-square canvases keep their size too.
  const Sample wide = random_sample(6, 11, 2);
  CHECK(rotate(rotate(wide, 180), 180).image == wide.image);
}

TEST_CASE("rot90 of a 2x3 marker") {
  Raster m(2, 3, 1);
  for (int i = 0; i < 6; ++i) m.px[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i + 1);
  // [[1,2,3],[4,5,6]] turned a quarter counter-clockwise about the canvas centre.
  CHECK(rotate_nearest(m, 90).px == std::vector<std::uint8_t>{0, 2, 5, 0, 1, 4});
  CHECK(rotate_bilinear(m, 90) == rotate_nearest(m, 90));
  Raster sq(3, 3, 1);
  for (int i = 0; i < 9; ++i) sq.px[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i + 1);
  CHECK(rotate_nearest(sq, 90).px == std::vector<std::uint8_t>{3, 6, 9, 2, 5, 8, 1, 4, 7});
  CHECK(rotate_nearest(sq, 270).px == std::vector<std::uint8_t>{7, 4, 1, 8, 5, 2, 9, 6, 3});
}

TEST_CASE("arbitrary rotations keep labels binary and fill corners with zero") {
  Sample s = random_sample(40, 48, 3);
  std::fill(s.image.px.begin(), s.image.px.end(), 255);
  std::fill(s.fov.px.begin(), s.fov.px.end(), 1);
  for (double deg : {22.0, 45.0, 135.0, 225.0, 315.0}) {
    CAPTURE(deg);
    const Sample r = rotate(s, deg);
    CHECK(r.image.same_size(s.image));
    CHECK(binary(r.label));
    CHECK(binary(r.fov));
    for (auto [y, x] : {std::pair{0, 0}, {0, 47}, {39, 0}, {39, 47}}) {
      CHECK(r.image.at(y, x, 0) == 0);
      CHECK(r.fov.at(y, x) == 0);
    }
    CHECK(r.image.at(20, 24, 1) == 255);
  }
  CHECK(rotate(s, 22).tag == "rot22");
}

TEST_CASE("offline augmentation gives eleven aligned variants") {
  const Sample s = random_sample(20, 24, 4);
  CHECK(augmentation_tags() == std::vector<std::string>{"orig", "hflip", "vflip", "rot22", "rot45", "rot90", "rot135",
                                                        "rot180", "rot225", "rot270", "rot315"});
  const std::vector<Sample> v = augment_sample(s);
  REQUIRE(v.size() == 11);
  CHECK(v[0].image == s.image);
  std::set<std::string> stems;
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v[i].tag == augmentation_tags()[i]);
    CHECK(v[i].label.same_size(v[i].image));
    CHECK(v[i].fov.same_size(v[i].image));
    CHECK(binary(v[i].label));
    CHECK(binary(v[i].fov));
    stems.insert(v[i].file_stem());
  }
  CHECK(stems.size() == 11);
  CHECK(v[0].file_stem() == "rand");
  CHECK(v[1].file_stem() == "rand_hflip");
  const std::vector<Sample> train(5, s);
  CHECK(augment_offline(train).size() == 55);
}

TEST_CASE("augmented masks survive the PNG round trip") {
  const fs::path dir = fresh_dir("png");
  for (const Sample& v : augment_sample(random_sample(17, 23, 5))) {
    write_mask_png(dir / (v.file_stem() + "_label.png"), v.label);
    write_mask_png(dir / (v.file_stem() + "_fov.png"), v.fov);
    write_png(dir / (v.file_stem() + ".png"), v.image);
    CHECK(read_mask(dir / (v.file_stem() + "_label.png")) == v.label);
    CHECK(read_mask(dir / (v.file_stem() + "_fov.png")) == v.fov);
    CHECK(read_rgb(dir / (v.file_stem() + ".png")) == v.image);
  }
  CHECK_THROWS_AS(read_rgb(dir / "absent.png"), std::runtime_error);
}

TEST_CASE("crop windows match the source region") {
  const Sample s = ramp_sample(30, 40);
  const Sample c = crop(s, 7, 11, 12, 9);
  CHECK(c.height() == 12);
  CHECK(c.width() == 9);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 9; ++x) {
      CHECK(c.image.at(y, x, 0) == y + 7);
      CHECK(c.image.at(y, x, 1) == x + 11);
      CHECK(c.label.at(y, x) == s.label.at(y + 7, x + 11));
      CHECK(c.fov.at(y, x) == s.fov.at(y + 7, x + 11));
    }
  std::mt19937_64 rng(0);
  CHECK_THROWS_AS(random_crop(s, 31, rng), std::invalid_argument);
  CHECK_THROWS_AS(crop(s, 20, 0, 12, 5), std::invalid_argument);
}

TEST_CASE("seeded crops and mirrors repeat exactly") {
  const Sample s = ramp_sample(60, 50);
  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Raster> out;
    for (int i = 0; i < 50; ++i) out.push_back(random_mirror(random_crop(s, 32, rng), rng).image);
    return out;
  };
  CHECK(run(9) == run(9));
  CHECK_FALSE(run(9) == run(10));

  std::mt19937_64 rng(1);
  int mirrored = 0;
  for (int i = 0; i < 400; ++i) {
    const Sample m = random_mirror(s, rng);
    if (m.image == s.image) continue;
    CHECK(m.image == hflip(s).image);
    CHECK(m.label == hflip(s).label);
    ++mirrored;
  }
  CHECK(mirrored > 150);
  CHECK(mirrored < 250);
}

TEST_CASE("random crop corners cover the whole valid range on DRIVE dimensions") {
  // Only the top-left pixel is inspected; y and x are stored in channels 0/1.
  Sample s = ramp_sample(584, 565);
  std::mt19937_64 rng(2024);
  int min_y = 1 << 20, max_y = -1, min_x = 1 << 20, max_x = -1;
  for (int i = 0; i < 10000; ++i) {
    const Sample c = random_crop(s, 512, rng);
    const int y = c.image.at(0, 0, 0), x = c.image.at(0, 0, 1);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
  }
  CHECK(min_y == 0);
  CHECK(max_y == 584 - 512);
  CHECK(min_x == 0);
  CHECK(max_x == 565 - 512);
}

TEST_CASE("hrf resize") {
  Sample s;
  s.image = Raster(2336, 3504, 3, 128);
  s.label = Raster(2336, 3504, 1);
  s.fov = Raster(2336, 3504, 1, 1);
  for (int y = 1000; y < 1400; ++y)
    for (int x = 0; x < 3504; x += 7) s.label.at(y, x) = 1;
  const Sample r = hrf_resize(s);
  CHECK(r.height() == 600);
  CHECK(r.width() == 900);
  CHECK(r.label.same_size(r.image));
  CHECK(r.fov.same_size(r.image));
  CHECK(2336 * 900 == 3504 * 600);
  CHECK(binary(r.label));
  CHECK(std::count(r.label.px.begin(), r.label.px.end(), 1) > 0);
  CHECK(r.image.at(300, 450, 1) == 128);
}

TEST_CASE("resize helpers") {
  const Raster c(10, 12, 3, 77);
  const Raster up = resize_bilinear(c, 25, 31);
  CHECK(up.height == 25);
  CHECK(up.width == 31);
  for (auto v : up.px) CHECK(v == 77);
  Raster m(4, 4, 1);
  m.at(1, 2) = 1;
  const Raster n = resize_nearest(m, 8, 8);
  CHECK(binary(n));
  CHECK(std::count(n.px.begin(), n.px.end(), 1) == 4);
  CHECK(n.at(2, 4) == 1);
  CHECK(n.at(3, 5) == 1);
}

TEST_CASE("fov generation recovers a bright disk") {
  const int h = 120, w = 150;
  const double cy = 61.3, cx = 73.8, radius = 48.5;
  const Raster fov = fov_generate(disk_image(h, w, cy, cx, radius));
  CHECK(binary(fov));
  int mismatches = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(y - cy, x - cx);
      if (std::abs(d - radius) <= 1.0) continue;
      if (fov.at(y, x) != (d < radius ? 1 : 0)) ++mismatches;
    }
  CHECK(mismatches == 0);
}

TEST_CASE("fov generation keeps the largest component and fills small holes") {
  Raster img = disk_image(100, 100, 50, 50, 35);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) img.at(y, x, 0) = 255;
  for (int y = 49; y < 52; ++y)
    for (int x = 49; x < 52; ++x) img.at(y, x, 0) = 0;
  const Raster fov = fov_generate(img);
  CHECK(fov.at(3, 3) == 0);
  CHECK(fov.at(50, 50) == 1);
}

TEST_CASE("fov generation is idempotent and rejects black images") {
  const Raster fov = fov_generate(synthesize_fundus(96, 112, 3).image);
  Raster again(fov.height, fov.width, 3);
  for (int y = 0; y < fov.height; ++y)
    for (int x = 0; x < fov.width; ++x)
      for (int c = 0; c < 3; ++c) again.at(y, x, c) = fov.at(y, x) ? 255 : 0;
  CHECK(fov_generate(again) == fov);
  CHECK_THROWS_AS(fov_generate(Raster(32, 32, 3)), std::invalid_argument);
}

TEST_CASE("synthetic fundus images are plausible") {
  const Sample s = synthesize_fundus(584, 565, 7, "x");
  CHECK(s.height() == 584);
  CHECK(s.width() == 565);
  CHECK(binary(s.label));
  CHECK(binary(s.fov));
  const double vessels = std::count(s.label.px.begin(), s.label.px.end(), 1);
  const double inside = std::count(s.fov.px.begin(), s.fov.px.end(), 1);
  CHECK(vessels / inside > 0.03);
  CHECK(vessels / inside < 0.2);
  CHECK(synthesize_fundus(64, 64, 7).image == synthesize_fundus(64, 64, 7).image);
}

TEST_CASE("load_directory pairs by stem and reports gaps") {
  const fs::path root = fresh_dir("layout");
  for (auto d : {"images", "labels", "fov"}) fs::create_directories(root / d);
  for (int i = 0; i < 3; ++i) {
    const Sample s = synthesize_fundus(40, 44, static_cast<std::uint64_t>(i));
    const std::string stem = "img" + std::to_string(2 - i);
    write_png(root / "images" / (stem + ".png"), s.image);
    write_mask_png(root / "labels" / (stem + ".png"), s.label);
    write_mask_png(root / "fov" / (stem + ".png"), s.fov);
  }
  const auto samples = load_directory(root, false);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].id == "img0");
  CHECK(samples[2].id == "img2");
  CHECK(samples[0].label == synthesize_fundus(40, 44, 2).label);

  fs::remove(root / "fov" / "img1.png");
  try {
    load_directory(root, false);
    FAIL("missing fov accepted");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("img1") != std::string::npos);
  }
  CHECK(load_directory(root, true).size() == 3);

  write_mask_png(root / "fov" / "img1.png", Raster(10, 10, 1));
  CHECK_THROWS_AS(load_directory(root, false), std::invalid_argument);
}

TEST_CASE("load_split partitions each dataset") {
  SUBCASE("DRIVE by tag") {
    const fs::path root = fresh_dir("drive");
    for (auto d : {"images", "labels", "fov"}) fs::create_directories(root / d);
    for (int i = 1; i <= 40; ++i) {
      const Sample s = synthesize_fundus(24, 20, static_cast<std::uint64_t>(i));
      char stem[32];
      std::snprintf(stem, sizeof stem, "%02d_%s", i, i <= 20 ? "test" : "training");
      write_png(root / "images" / (std::string(stem) + ".png"), s.image);
      write_mask_png(root / "labels" / (std::string(stem) + ".png"), s.label);
      write_mask_png(root / "fov" / (std::string(stem) + ".png"), s.fov);
    }
    const Split sp = load_split(DatasetSpec::defaults(DatasetName::kDrive, root));
    CHECK(sp.train.size() == 20);
    CHECK(sp.test.size() == 20);
    CHECK(sp.train.front().id == "21_training");
    CHECK(sp.test.front().id == "01_test");
    CHECK(augment_offline(sp.train).size() == 220);
  }
  SUBCASE("CHASE by sorted order with generated fov") {
    const fs::path root = fresh_dir("chase");
    for (auto d : {"images", "labels"}) fs::create_directories(root / d);
    for (int i = 1; i <= 28; ++i) {
      const Sample s = synthesize_fundus(30, 32, static_cast<std::uint64_t>(100 + i));
      char stem[32];
      std::snprintf(stem, sizeof stem, "Image_%02d%c", (i + 1) / 2, i % 2 ? 'L' : 'R');
      write_png(root / "images" / (std::string(stem) + ".png"), s.image);
      write_mask_png(root / "labels" / (std::string(stem) + ".png"), s.label);
    }
    DatasetSpec spec = DatasetSpec::defaults(DatasetName::kChase, root);
    Split sp = load_split(spec);
    CHECK(sp.train.size() == 20);
    CHECK(sp.test.size() == 8);
    CHECK(sp.train.front().id == "Image_01L");
    CHECK(sp.train.back().id == "Image_10R");
    CHECK(sp.test.front().id == "Image_11L");
    for (const auto& s : sp.test) CHECK(std::count(s.fov.px.begin(), s.fov.px.end(), 1) > 0);
    spec.chase_split = ChaseSplit::k14_14;
    sp = load_split(spec);
    CHECK(sp.train.size() == 14);
    CHECK(sp.test.size() == 14);
  }
  SUBCASE("too few images") {
    const fs::path root = fresh_dir("hrf_short");
    for (auto d : {"images", "labels", "fov"}) fs::create_directories(root / d);
    const Sample s = synthesize_fundus(20, 30, 1);
    write_png(root / "images" / "01_h.png", s.image);
    write_mask_png(root / "labels" / "01_h.png", s.label);
    write_mask_png(root / "fov" / "01_h.png", s.fov);
    CHECK_THROWS_AS(load_split(DatasetSpec::defaults(DatasetName::kHrf, root)), std::runtime_error);
  }
}
