#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dpn/autograd.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

/// Which DP-Block branches are active: the full-resolution branch alone,
/// plus the stride-2 branch, or all three.
enum class Branches : std::uint8_t { kOs1, kOs1Os2, kAll };

Branches parse_branches(std::string_view text);  // "os1", "os1,os2", "os1,os2,os4"
std::string to_string(Branches b);

struct DpnConfig {
  int c0 = 16;
  int c1 = 8;
  int c2 = 8;
  int stem_channels = 32;
  int num_blocks = 8;
  Branches branches = Branches::kAll;
  bool aux_losses = true;
  std::vector<int> aux_positions{2, 4, 6};

  /// Throws std::invalid_argument on widths < 1, aux positions outside [1, num_blocks), ...
  void validate() const;
  /// Blocks after which a head is attached: the aux positions (when enabled), then the last block.
  [[nodiscard]] std::vector<int> head_positions() const;

  friend bool operator==(const DpnConfig&, const DpnConfig&) = default;
};

template <typename T>
struct BasicConv {
  BasicParam<T> weight;  // [out, in, k, k]
  BasicParam<T> bias;    // [out, 1, 1, 1]

  BasicConv() = default;
  BasicConv(const std::string& name, int in, int out, int k);

  [[nodiscard]] int in_channels() const { return static_cast<int>(weight.value.c()); }
  [[nodiscard]] int out_channels() const { return static_cast<int>(weight.value.n()); }
  [[nodiscard]] int kernel() const { return static_cast<int>(weight.value.h()); }
  [[nodiscard]] std::size_t parameter_count() const { return weight.size() + bias.size(); }

  template <typename U>
  [[nodiscard]] BasicConv<U> cast() const {
    BasicConv<U> out;
    out.weight = weight.template cast<U>();
    out.bias = bias.template cast<U>();
    return out;
  }
};

/// Weights of one detail-preserving block. k2..k5 are absent when the
/// corresponding branches are disabled.
template <typename T>
struct BasicDpBlock {
  int in_channels = 0;
  BasicConv<T> k1;                 // X -> c0
  std::optional<BasicConv<T>> k2;  // pool2(X) -> c1
  std::optional<BasicConv<T>> k3;  // pool4(X) -> c2
  std::optional<BasicConv<T>> k4;  // [x2, up(x3)] -> c1   (or x2 -> c1 without the stride-4 branch)
  std::optional<BasicConv<T>> k5;  // [x1, up(x4)] -> c0
  BasicConv<T> k6;                 // [x5, X] -> c0

  BasicDpBlock() = default;
  BasicDpBlock(const std::string& name, int in, const DpnConfig& cfg);

  [[nodiscard]] std::vector<BasicConv<T>*> convs();
  [[nodiscard]] std::vector<const BasicConv<T>*> convs() const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] Branches branches() const;

  template <typename U>
  [[nodiscard]] BasicDpBlock<U> cast() const;
};

template <typename T>
struct BasicDpnModel {
  DpnConfig config;
  BasicConv<T> stem;
  std::vector<BasicDpBlock<T>> blocks;
  std::vector<BasicConv<T>> heads;  // aligned with config.head_positions()

  /// Every learnable tensor in a fixed order (stem, blocks, heads; weight before bias).
  [[nodiscard]] std::vector<BasicParam<T>*> parameters();
  [[nodiscard]] std::vector<const BasicParam<T>*> parameters() const;

  template <typename U>
  [[nodiscard]] BasicDpnModel<U> cast() const;
};

using Conv = BasicConv<float>;
using DpBlock = BasicDpBlock<float>;
using DpnModel = BasicDpnModel<float>;
using DpnModelD = BasicDpnModel<double>;

/// Builds a model with zero weights laid out for cfg.
template <typename T = float>
BasicDpnModel<T> make_model(const DpnConfig& cfg);

/// Xavier/Glorot uniform weights, zero biases; deterministic in seed.
template <typename T>
void init_xavier(BasicDpnModel<T>& model, std::uint64_t seed);

/// Half-width of the Xavier uniform interval for a k x k convolution.
double xavier_bound(int in, int out, int k);

// -- forward passes ------------------------------------------------------------

/// One detail-preserving block without gradient recording.
template <typename T>
BasicTensor<T> dp_block_forward(const BasicTensor<T>& x, const BasicDpBlock<T>& block);

/// One detail-preserving block recorded on a tape.
template <typename T>
Var dp_block_forward(BasicTape<T>& tape, Var x, BasicDpBlock<T>& block);

/// Head logit maps (one per head position, each N x 1 x H x W). The image must
/// already be padded to a multiple of 4. With final_only, only the last head is evaluated.
template <typename T>
std::vector<BasicTensor<T>> dpn_forward(const BasicTensor<T>& image, const BasicDpnModel<T>& model,
                                        bool final_only = false);

template <typename T>
std::vector<Var> dpn_forward(BasicTape<T>& tape, Var image, BasicDpnModel<T>& model);

// -- parameter accounting -------------------------------------------------------

struct ParamTable {
  struct Row {
    std::string group;  // "stem", "block<i>", "heads"
    std::string name;
    std::size_t count = 0;
  };
  std::vector<Row> rows;
  std::vector<std::pair<std::string, std::size_t>> groups;
  std::size_t total = 0;

  /// Sum for one group; 0 if absent.
  [[nodiscard]] std::size_t group(std::string_view name) const;
  [[nodiscard]] std::string format() const;
};

template <typename T>
ParamTable count_parameters(const BasicDpnModel<T>& model);

}  // namespace dpn
