#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "dpn/config.hpp"

namespace dpn {

// Each command prints the effective configuration, then its own output, and
// returns a process exit code. Diagnostics go to std::cerr.

int cmd_train(const RunConfig& cfg, std::ostream& out);
/// Inputs may be image files or directories; empty means <data_root>/images.
int cmd_predict(const RunConfig& cfg, const std::vector<std::filesystem::path>& inputs, std::ostream& out);
int cmd_evaluate(const RunConfig& cfg, std::ostream& out);
int cmd_augment(const RunConfig& cfg, std::ostream& out);
int cmd_count_params(const RunConfig& cfg, std::ostream& out);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out);
/// Inputs as for predict; empty means the dataset's test split.
int cmd_benchmark(const RunConfig& cfg, const std::vector<std::filesystem::path>& inputs, std::ostream& out);
/// Writes a synthetic dataset with the chosen dataset's layout to cfg.out.
int cmd_make_synthetic(const RunConfig& cfg, std::ostream& out);

}  // namespace dpn
