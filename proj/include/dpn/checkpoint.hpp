#pragma once

// Binary checkpoint, little-endian:
//   "DPNW" | u32 version (=1) | u32 tensor count
//   per tensor: u16 name length | name (UTF-8) | u8 rank | u32 dims[rank] | f32 payload
//   optional: "ADAM" | u64 step | u32 count | tensor records named "<param>.m" / "<param>.v"
// The architecture is recovered from tensor names and shapes.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>

#include "dpn/model.hpp"

namespace dpn {

class CheckpointError : public std::runtime_error {
 public:
  enum class Code { kIo, kBadMagic, kVersion, kTruncated, kDimensionOverflow, kMalformed };
  CheckpointError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] Code code() const { return code_; }

 private:
  Code code_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a sibling temp file and renames it into place, so an interrupted
/// save never clobbers the previous checkpoint.
void save_checkpoint(const DpnModel& model, const std::filesystem::path& path,
                     std::optional<std::uint64_t> adam_step = std::nullopt);

struct LoadedCheckpoint {
  DpnModel model;
  std::optional<std::uint64_t> adam_step;  // present when optimizer moments were saved
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dpn
