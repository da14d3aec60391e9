#include "dpn/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dpn/kernels.hpp"

namespace dpn {

Branches parse_branches(std::string_view text) {
  std::string s;
  for (char ch : text) {
    if (ch != ' ') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  if (s == "os1") return Branches::kOs1;
  if (s == "os1,os2") return Branches::kOs1Os2;
  if (s == "os1,os2,os4" || s == "all") return Branches::kAll;
  throw std::invalid_argument("unsupported branch set '" + std::string(text) +
                              "' (expected os1 | os1,os2 | os1,os2,os4)");
}

std::string to_string(Branches b) {
  switch (b) {
    case Branches::kOs1: return "os1";
    case Branches::kOs1Os2: return "os1,os2";
    case Branches::kAll: return "os1,os2,os4";
  }
  return "?";
}

void DpnConfig::validate() const {
  if (c0 < 1 || c1 < 1 || c2 < 1) throw std::invalid_argument("filter widths must be positive");
  if (stem_channels < 1) throw std::invalid_argument("stem_channels must be positive");
  if (num_blocks < 1) throw std::invalid_argument("num_blocks must be positive");
  if (aux_losses) {
    int prev = 0;
    for (int p : aux_positions) {
      if (p < 1 || p >= num_blocks) {
        throw std::invalid_argument("aux position " + std::to_string(p) + " outside [1, " +
                                    std::to_string(num_blocks) + ")");
      }
      if (p <= prev) throw std::invalid_argument("aux positions must be strictly increasing");
      prev = p;
    }
  }
}

std::vector<int> DpnConfig::head_positions() const {
  std::vector<int> out;
  if (aux_losses) out = aux_positions;
  out.push_back(num_blocks);
  return out;
}

// -- construction ----------------------------------------------------------------

template <typename T>
BasicConv<T>::BasicConv(const std::string& name, int in, int out, int k)
    : weight(name + ".weight", Shape{static_cast<std::size_t>(out), static_cast<std::size_t>(in),
                                     static_cast<std::size_t>(k), static_cast<std::size_t>(k)}),
      bias(name + ".bias", Shape{static_cast<std::size_t>(out), 1, 1, 1}) {}

template <typename T>
BasicDpBlock<T>::BasicDpBlock(const std::string& name, int in, const DpnConfig& cfg)
    : in_channels(in), k1(name + ".k1", in, cfg.c0, 3), k6(name + ".k6", cfg.c0 + in, cfg.c0, 3) {
  if (cfg.branches == Branches::kOs1) return;
  k2.emplace(name + ".k2", in, cfg.c1, 3);
  if (cfg.branches == Branches::kAll) {
    k3.emplace(name + ".k3", in, cfg.c2, 3);
    k4.emplace(name + ".k4", cfg.c1 + cfg.c2, cfg.c1, 3);
  } else {
    k4.emplace(name + ".k4", cfg.c1, cfg.c1, 3);
  }
  k5.emplace(name + ".k5", cfg.c0 + cfg.c1, cfg.c0, 3);
}

template <typename T>
std::vector<BasicConv<T>*> BasicDpBlock<T>::convs() {
  std::vector<BasicConv<T>*> out{&k1};
  for (auto* c : {&k2, &k3, &k4, &k5}) {
    if (c->has_value()) out.push_back(&**c);
  }
  out.push_back(&k6);
  return out;
}

template <typename T>
std::vector<const BasicConv<T>*> BasicDpBlock<T>::convs() const {
  std::vector<const BasicConv<T>*> out{&k1};
  for (const auto* c : {&k2, &k3, &k4, &k5}) {
    if (c->has_value()) out.push_back(&**c);
  }
  out.push_back(&k6);
  return out;
}

template <typename T>
std::size_t BasicDpBlock<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto* c : convs()) total += c->parameter_count();
  return total;
}

template <typename T>
Branches BasicDpBlock<T>::branches() const {
  if (!k2) return Branches::kOs1;
  return k3 ? Branches::kAll : Branches::kOs1Os2;
}

template <typename T>
template <typename U>
BasicDpBlock<U> BasicDpBlock<T>::cast() const {
  BasicDpBlock<U> out;
  out.in_channels = in_channels;
  out.k1 = k1.template cast<U>();
  if (k2) out.k2 = k2->template cast<U>();
  if (k3) out.k3 = k3->template cast<U>();
  if (k4) out.k4 = k4->template cast<U>();
  if (k5) out.k5 = k5->template cast<U>();
  out.k6 = k6.template cast<U>();
  return out;
}

template <typename T>
std::vector<BasicParam<T>*> BasicDpnModel<T>::parameters() {
  std::vector<BasicParam<T>*> out{&stem.weight, &stem.bias};
  for (auto& b : blocks) {
    for (auto* c : b.convs()) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    }
  }
  for (auto& h : heads) {
    out.push_back(&h.weight);
    out.push_back(&h.bias);
  }
  return out;
}

template <typename T>
std::vector<const BasicParam<T>*> BasicDpnModel<T>::parameters() const {
  auto mut = const_cast<BasicDpnModel<T>*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
template <typename U>
BasicDpnModel<U> BasicDpnModel<T>::cast() const {
  BasicDpnModel<U> out;
  out.config = config;
  out.stem = stem.template cast<U>();
  for (const auto& b : blocks) out.blocks.push_back(b.template cast<U>());
  for (const auto& h : heads) out.heads.push_back(h.template cast<U>());
  return out;
}

template <typename T>
BasicDpnModel<T> make_model(const DpnConfig& cfg) {
  cfg.validate();
  BasicDpnModel<T> m;
  m.config = cfg;
  m.stem = BasicConv<T>("stem", 3, cfg.stem_channels, 3);
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const int in = i == 0 ? cfg.stem_channels : cfg.c0;
    m.blocks.emplace_back("block" + std::to_string(i + 1), in, cfg);
  }
  for (int pos : cfg.head_positions()) m.heads.emplace_back("head" + std::to_string(pos), cfg.c0, 1, 1);
  return m;
}

double xavier_bound(int in, int out, int k) {
  const double fan_in = static_cast<double>(k * k * in), fan_out = static_cast<double>(k * k * out);
  return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
void init_xavier(BasicDpnModel<T>& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto init = [&rng](BasicConv<T>& c) {
    const double bound = xavier_bound(c.in_channels(), c.out_channels(), c.kernel());
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& v : c.weight.value.data()) v = static_cast<T>(dist(rng));
    c.bias.value.fill(T{0});
  };
  init(model.stem);
  for (auto& b : model.blocks) {
    for (auto* c : b.convs()) init(*c);
  }
  for (auto& h : model.heads) init(h);
}

// -- forward -----------------------------------------------------------------------

namespace {

template <typename T>
struct EagerOps {
  using Value = BasicTensor<T>;
  Value conv3x3(const Value& x, const BasicConv<T>& c) {
    return dpn::conv3x3(x, c.weight.value, std::span<const T>(c.bias.value.data()));
  }
  Value conv1x1(const Value& x, const BasicConv<T>& c) {
    return dpn::conv1x1(x, c.weight.value, std::span<const T>(c.bias.value.data()));
  }
  Value maxpool(const Value& x, int k) { return dpn::maxpool(x, k); }
  Value upsample(const Value& x) { return dpn::upsample2x(x); }
  Value concat(const Value& a, const Value& b) { return concat_channels(a, b); }
  Value relu(Value x) { return dpn::relu(std::move(x)); }
  const Shape& shape(const Value& x) const { return x.shape(); }
};

template <typename T>
struct TapeOps {
  BasicTape<T>& tape;
  using Value = Var;
  Value conv3x3(Var x, BasicConv<T>& c) { return tape.conv3x3(x, tape.param(c.weight), tape.param(c.bias)); }
  Value conv1x1(Var x, BasicConv<T>& c) { return tape.conv1x1(x, tape.param(c.weight), tape.param(c.bias)); }
  Value maxpool(Var x, int k) { return tape.maxpool(x, k); }
  Value upsample(Var x) { return tape.upsample2x(x); }
  Value concat(Var a, Var b) { return tape.concat(a, b); }
  Value relu(Var x) { return tape.relu(x); }
  const Shape& shape(Var x) const { return tape.value(x).shape(); }
};

void check_block_input(const Shape& s, int in_channels) {
  if (s.c != static_cast<std::size_t>(in_channels)) {
    throw ShapeError("dp_block: input has " + std::to_string(s.c) + " channels, block expects " +
                     std::to_string(in_channels));
  }
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("dp_block: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be divisible by 4");
  }
}

// x1 = relu(k1 * X)
// x2 = relu(k2 * pool2(X))
// x3 = relu(k3 * pool4(X))
// x4 = relu(k4 * [x2, up(x3)])
// x5 = relu(k5 * [x1, up(x4)])
// Y  = relu(k6 * [x5, X])
template <class Ops, class Block>
typename Ops::Value block_impl(Ops& ops, const typename Ops::Value& X, Block& b) {
  using Value = typename Ops::Value;
  check_block_input(ops.shape(X), b.in_channels);
  Value x1 = ops.relu(ops.conv3x3(X, b.k1));
  Value x5;
  if (!b.k2) {
    x5 = std::move(x1);
  } else {
    Value x2 = ops.relu(ops.conv3x3(ops.maxpool(X, 2), *b.k2));
    Value x4;
    if (b.k3) {
      Value x3 = ops.relu(ops.conv3x3(ops.maxpool(X, 4), *b.k3));
      x4 = ops.relu(ops.conv3x3(ops.concat(x2, ops.upsample(x3)), *b.k4));
    } else {
      x4 = ops.relu(ops.conv3x3(x2, *b.k4));
    }
    x5 = ops.relu(ops.conv3x3(ops.concat(x1, ops.upsample(x4)), *b.k5));
  }
  return ops.relu(ops.conv3x3(ops.concat(x5, X), b.k6));
}

template <class Ops, class Model>
std::vector<typename Ops::Value> network_impl(Ops& ops, const typename Ops::Value& image, Model& model,
                                              bool final_only) {
  using Value = typename Ops::Value;
  const Shape& s = ops.shape(image);
  if (s.c != 3) throw ShapeError("dpn_forward: expected a 3-channel image, got " + std::to_string(s.c));
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("dpn_forward: image " + s.str() + " must be padded to a multiple of 4");
  }
  const std::vector<int> positions = model.config.head_positions();
  std::vector<Value> logits;
  Value x = ops.relu(ops.conv3x3(image, model.stem));
  std::size_t head = 0;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    x = block_impl(ops, x, model.blocks[i]);
    const int block_no = static_cast<int>(i) + 1;
    if (head < positions.size() && positions[head] == block_no) {
      if (!final_only || head + 1 == positions.size()) logits.push_back(ops.conv1x1(x, model.heads[head]));
      ++head;
    }
  }
  return logits;
}

}  // namespace

template <typename T>
BasicTensor<T> dp_block_forward(const BasicTensor<T>& x, const BasicDpBlock<T>& block) {
  EagerOps<T> ops;
  return block_impl(ops, x, block);
}

template <typename T>
Var dp_block_forward(BasicTape<T>& tape, Var x, BasicDpBlock<T>& block) {
  TapeOps<T> ops{tape};
  return block_impl(ops, x, block);
}

template <typename T>
std::vector<BasicTensor<T>> dpn_forward(const BasicTensor<T>& image, const BasicDpnModel<T>& model, bool final_only) {
  EagerOps<T> ops;
  return network_impl(ops, image, model, final_only);
}

template <typename T>
std::vector<Var> dpn_forward(BasicTape<T>& tape, Var image, BasicDpnModel<T>& model) {
  TapeOps<T> ops{tape};
  return network_impl(ops, image, model, false);
}

// -- accounting ---------------------------------------------------------------------

std::size_t ParamTable::group(std::string_view name) const {
  for (const auto& [g, n] : groups) {
    if (g == name) return n;
  }
  return 0;
}

std::string ParamTable::format() const {
  std::ostringstream os;
  os << std::left << std::setw(10) << "group" << std::setw(22) << "tensor" << std::right << std::setw(10) << "count"
     << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(10) << r.group << std::setw(22) << r.name << std::right << std::setw(10) << r.count
       << '\n';
  }
  os << '\n';
  for (const auto& [g, n] : groups) os << std::left << std::setw(32) << g << std::right << std::setw(10) << n << '\n';
  os << std::left << std::setw(32) << "stem+block1" << std::right << std::setw(10)
     << group("stem") + group("block1") << '\n';
  os << std::left << std::setw(32) << "total" << std::right << std::setw(10) << total << '\n';
  return os.str();
}

template <typename T>
ParamTable count_parameters(const BasicDpnModel<T>& model) {
  ParamTable table;
  auto add = [&table](const std::string& group, const BasicConv<T>& c) {
    for (const BasicParam<T>* p : {&c.weight, &c.bias}) {
      table.rows.push_back({group, p->name, p->size()});
      if (table.groups.empty() || table.groups.back().first != group) table.groups.emplace_back(group, 0);
      table.groups.back().second += p->size();
      table.total += p->size();
    }
  };
  add("stem", model.stem);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    for (const auto* c : model.blocks[i].convs()) add("block" + std::to_string(i + 1), *c);
  }
  for (const auto& h : model.heads) add("heads", h);
  return table;
}

#define DPN_INSTANTIATE_MODEL(T)                                                                            \
  template struct BasicConv<T>;                                                                             \
  template struct BasicDpBlock<T>;                                                                          \
  template struct BasicDpnModel<T>;                                                                         \
  template BasicDpnModel<T> make_model<T>(const DpnConfig&);                                                \
  template void init_xavier<T>(BasicDpnModel<T>&, std::uint64_t);                                           \
  template BasicTensor<T> dp_block_forward<T>(const BasicTensor<T>&, const BasicDpBlock<T>&);               \
  template Var dp_block_forward<T>(BasicTape<T>&, Var, BasicDpBlock<T>&);                                   \
  template std::vector<BasicTensor<T>> dpn_forward<T>(const BasicTensor<T>&, const BasicDpnModel<T>&, bool); \
  template std::vector<Var> dpn_forward<T>(BasicTape<T>&, Var, BasicDpnModel<T>&);                          \
  template ParamTable count_parameters<T>(const BasicDpnModel<T>&);

DPN_INSTANTIATE_MODEL(float)
DPN_INSTANTIATE_MODEL(double)

template BasicDpBlock<double> BasicDpBlock<float>::cast<double>() const;
template BasicDpBlock<float> BasicDpBlock<double>::cast<float>() const;
template BasicDpnModel<double> BasicDpnModel<float>::cast<double>() const;
template BasicDpnModel<float> BasicDpnModel<double>::cast<float>() const;

#undef DPN_INSTANTIATE_MODEL

}  // namespace dpn
