#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpn/data.hpp"
#include "dpn/metrics.hpp"
#include "dpn/model.hpp"
#include "dpn/optim.hpp"

namespace dpn {

/// Settings for one command. Defaults follow the DRIVE recipe; iterations and
/// crop size default to the chosen dataset's values when left at 0.
struct RunConfig {
  DatasetName dataset = DatasetName::kDrive;
  std::filesystem::path data_root = "data/DRIVE";
  std::filesystem::path train_dir;  // pre-augmented set; empty -> augment in memory
  std::filesystem::path pred_dir;   // evaluate saved maps instead of running the model
  ChaseSplit chase_split = ChaseSplit::k20_8;
  std::uint64_t seed = 0;
  long iters = 0;
  int crop = 0;
  std::filesystem::path checkpoint = "dpn.ckpt";
  bool resume = false;
  std::filesystem::path out = "runs";
  std::optional<double> threshold;  // predict uses 0.5 when unset; evaluate searches
  int threads = 1;
  DpnConfig model;
  AdamConfig adam;
  AggregationMode eval_mode = AggregationMode::kPooled;
  long checkpoint_every = 5000;
  long log_every = 100;
  int runs = 20;
  int gradcheck_seeds = 20;
  double gradcheck_step = 1e-5;

  /// Sets one key. Accepts the long flag spelling with '-' or '_'.
  /// Throws std::invalid_argument for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Reads `key = value` lines; '#' starts a comment. Errors name the line.
  void load_file(const std::filesystem::path& path);
  void load_stream(std::istream& in, const std::string& origin);

  [[nodiscard]] long effective_iters() const;
  [[nodiscard]] int effective_crop() const;
  [[nodiscard]] DatasetSpec dataset_spec() const;

  /// Every setting as `key = value` lines; feeding the text back through
  /// load_stream reproduces this configuration.
  [[nodiscard]] std::string echo() const;
};

/// "16,8,8" -> c0, c1, c2.
void parse_filters(const std::string& text, DpnConfig& cfg);

}  // namespace dpn
