#include "dpn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>

namespace dpn {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'N', 'W'};
constexpr char kAdamTag[4] = {'A', 'D', 'A', 'M'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void tensor(const std::string& name, const Tensor4& t, bool bias) {
    put(static_cast<std::uint16_t>(name.size()));
    bytes(name.data(), name.size());
    if (bias) {
      put(std::uint8_t{1});
      put(static_cast<std::uint32_t>(t.n()));
    } else {
      put(std::uint8_t{4});
      for (std::size_t d : {t.n(), t.c(), t.h(), t.w()}) put(static_cast<std::uint32_t>(d));
    }
    bytes(t.data().data(), t.size() * sizeof(float));
  }
  [[nodiscard]] const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

struct Record {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> payload;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  [[nodiscard]] bool at_end() const { return pos_ == data_.size(); }
  [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }

  Record record() {
    Record r;
    const auto len = get<std::uint16_t>();
    r.name.resize(len);
    bytes(r.name.data(), len);
    const auto rank = get<std::uint8_t>();
    std::uint64_t count = 1;
    for (int i = 0; i < rank; ++i) {
      const auto d = get<std::uint32_t>();
      r.dims.push_back(d);
      if (d != 0 && count > kMaxElements / d) {
        throw CheckpointError(CheckpointError::Code::kDimensionOverflow,
                              "dimension overflow in tensor '" + r.name + "'");
      }
      count *= d;
    }
    if (count > kMaxElements) {
      throw CheckpointError(CheckpointError::Code::kDimensionOverflow, "dimension overflow in tensor '" + r.name + "'");
    }
    r.payload.resize(count);
    bytes(r.payload.data(), count * sizeof(float));
    return r;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError(CheckpointError::Code::kTruncated, "truncated file");
  }
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

[[noreturn]] void malformed(const std::string& what) {
  throw CheckpointError(CheckpointError::Code::kMalformed, "malformed checkpoint: " + what);
}

const Record& find(const std::map<std::string, Record>& recs, const std::string& name) {
  auto it = recs.find(name);
  if (it == recs.end()) malformed("missing tensor '" + name + "'");
  return it->second;
}

int out_channels(const std::map<std::string, Record>& recs, const std::string& name) {
  const Record& r = find(recs, name);
  if (r.dims.size() != 4) malformed("tensor '" + name + "' must have rank 4");
  return static_cast<int>(r.dims[0]);
}

DpnConfig infer_config(const std::map<std::string, Record>& recs) {
  DpnConfig cfg;
  cfg.stem_channels = out_channels(recs, "stem.weight");
  int blocks = 0;
  while (recs.count("block" + std::to_string(blocks + 1) + ".k1.weight")) ++blocks;
  if (blocks == 0) malformed("no blocks");
  cfg.num_blocks = blocks;
  cfg.c0 = out_channels(recs, "block1.k1.weight");
  const bool has_os2 = recs.count("block1.k2.weight") > 0;
  const bool has_os4 = recs.count("block1.k3.weight") > 0;
  if (has_os4 && !has_os2) malformed("stride-4 branch without stride-2 branch");
  cfg.branches = has_os4 ? Branches::kAll : (has_os2 ? Branches::kOs1Os2 : Branches::kOs1);
  if (has_os2) cfg.c1 = out_channels(recs, "block1.k2.weight");
  if (has_os4) cfg.c2 = out_channels(recs, "block1.k3.weight");

  static const std::regex head_re(R"(head(\d+)\.weight)");
  std::vector<int> positions;
  for (const auto& [name, rec] : recs) {
    std::smatch m;
    if (std::regex_match(name, m, head_re)) positions.push_back(std::stoi(m[1]));
  }
  std::sort(positions.begin(), positions.end());
  if (positions.empty() || positions.back() != blocks) malformed("missing final head after block " + std::to_string(blocks));
  positions.pop_back();
  cfg.aux_losses = !positions.empty();
  cfg.aux_positions = positions;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    malformed(e.what());
  }
  return cfg;
}

void assign(Param& p, const Record& r, const std::string& name, Tensor4& dst) {
  if (r.payload.size() != p.size()) {
    malformed("tensor '" + name + "' has " + std::to_string(r.payload.size()) + " values, expected " +
              std::to_string(p.size()));
  }
  std::copy(r.payload.begin(), r.payload.end(), dst.data().begin());
}

}  // namespace

void save_checkpoint(const DpnModel& model, const std::filesystem::path& path, std::optional<std::uint64_t> adam_step) {
  Writer w;
  w.bytes(kMagic, 4);
  w.put(kCheckpointVersion);
  const auto params = model.parameters();
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) w.tensor(p->name, p->value, p->name.ends_with(".bias"));
  if (adam_step) {
    w.bytes(kAdamTag, 4);
    w.put(*adam_step);
    w.put(static_cast<std::uint32_t>(2 * params.size()));
    for (const Param* p : params) {
      const bool bias = p->name.ends_with(".bias");
      const Tensor4 zeros(p->value.shape());
      w.tensor(p->name + ".m", p->m.shape() == p->value.shape() ? p->m : zeros, bias);
      w.tensor(p->name + ".v", p->v.shape() == p->value.shape() ? p->v : zeros, bias);
    }
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Code::kIo, "cannot open '" + tmp.string() + "' for writing");
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw CheckpointError(CheckpointError::Code::kIo, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointError::Code::kIo, "cannot move checkpoint into place: " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Code::kIo, "cannot open checkpoint '" + path.string() + "'");
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  char magic[4] = {};
  try {
    r.bytes(magic, 4);
  } catch (const CheckpointError&) {
    throw CheckpointError(CheckpointError::Code::kBadMagic, "bad magic");
  }
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError(CheckpointError::Code::kBadMagic, "bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Code::kVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::map<std::string, Record> recs;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec = r.record();
    std::string name = rec.name;
    if (!recs.emplace(std::move(name), std::move(rec)).second) malformed("duplicate tensor");
  }

  LoadedCheckpoint out{make_model(infer_config(recs)), std::nullopt};
  std::size_t used = 0;
  for (Param* p : out.model.parameters()) {
    assign(*p, find(recs, p->name), p->name, p->value);
    ++used;
  }
  if (used != recs.size()) malformed("unexpected extra tensors");

  if (!r.at_end()) {
    char tag[4];
    r.bytes(tag, 4);
    if (std::memcmp(tag, kAdamTag, 4) != 0) malformed("unknown trailing section");
    out.adam_step = r.get<std::uint64_t>();
    const auto moments = r.get<std::uint32_t>();
    std::map<std::string, Record> mrecs;
    for (std::uint32_t i = 0; i < moments; ++i) {
      Record rec = r.record();
      std::string name = rec.name;
      mrecs.emplace(std::move(name), std::move(rec));
    }
    for (Param* p : out.model.parameters()) {
      assign(*p, find(mrecs, p->name + ".m"), p->name + ".m", p->m);
      assign(*p, find(mrecs, p->name + ".v"), p->name + ".v", p->v);
    }
    if (!r.at_end()) malformed("trailing bytes after optimizer state");
  }
  return out;
}

}  // namespace dpn
