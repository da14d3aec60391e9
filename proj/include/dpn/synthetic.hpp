#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpn/data.hpp"

namespace dpn {

/// A fundus-like RGB image with a branching vessel tree: orange retina inside a
/// circular field of view on black, vessels darker than background. label and
/// fov are exact. Deterministic in seed.
Sample synthesize_fundus(int height, int width, std::uint64_t seed, const std::string& id = "synthetic");

struct SyntheticLayout {
  int height = 0;
  int width = 0;
  std::vector<std::string> stems;
  bool write_fov = true;
};

/// File names and native sizes of the public datasets: DRIVE 40 images at
/// 584x565 (HxW) tagged _training/_test, CHASE_DB1 28 at 960x999 without FOV
/// files, HRF 45 at 2336x3504.
SyntheticLayout synthetic_layout(DatasetName name);

/// Writes images/, labels/ and (when the layout has them) fov/ under root.
/// Returns the number of samples written.
int write_synthetic_dataset(DatasetName name, const std::filesystem::path& root, std::uint64_t seed);

}  // namespace dpn
