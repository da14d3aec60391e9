#include "dpn/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dpn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string normalize_key(std::string key) {
  key = trim(key);
  while (!key.empty() && key.front() == '-') key.erase(key.begin());
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void parse_filters(const std::string& text, DpnConfig& cfg) {
  int vals[3];
  std::stringstream ss(text);
  std::string part;
  int n = 0;
  while (std::getline(ss, part, ',')) {
    if (n == 3) throw std::invalid_argument("filters: expected three widths C0,C1,C2, got '" + text + "'");
    vals[n++] = parse_int<int>("filters", trim(part));
  }
  if (n != 3) throw std::invalid_argument("filters: expected three widths C0,C1,C2, got '" + text + "'");
  cfg.c0 = vals[0];
  cfg.c1 = vals[1];
  cfg.c2 = vals[2];
  cfg.validate();
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = normalize_key(raw_key);
  const std::string v = trim(raw_value);
  if (key == "dataset") dataset = parse_dataset(v);
  else if (key == "data_root") data_root = v;
  else if (key == "train_dir") train_dir = v;
  else if (key == "pred_dir") pred_dir = v;
  else if (key == "chase_split") chase_split = parse_chase_split(v);
  else if (key == "seed") seed = parse_int<std::uint64_t>(key, v);
  else if (key == "iters") iters = parse_int<long>(key, v);
  else if (key == "crop") crop = parse_int<int>(key, v);
  else if (key == "checkpoint") checkpoint = v;
  else if (key == "resume") resume = parse_bool(key, v);
  else if (key == "out") out = v;
  else if (key == "threshold") {
    if (v == "auto") threshold.reset();
    else threshold = parse_double(key, v);
    if (threshold && (*threshold < 0 || *threshold > 1)) throw std::invalid_argument("threshold must lie in [0, 1]");
  } else if (key == "threads") threads = parse_int<int>(key, v);
  else if (key == "aux") model.aux_losses = parse_bool(key, v);
  else if (key == "no_aux") model.aux_losses = !parse_bool(key, v);
  else if (key == "branches") model.branches = parse_branches(v);
  else if (key == "filters") parse_filters(v, model);
  else if (key == "lr") adam.lr = parse_double(key, v);
  else if (key == "weight_decay") adam.weight_decay = parse_double(key, v);
  else if (key == "eval_mode") eval_mode = parse_aggregation(v);
  else if (key == "checkpoint_every") checkpoint_every = parse_int<long>(key, v);
  else if (key == "log_every") log_every = parse_int<long>(key, v);
  else if (key == "runs") runs = parse_int<int>(key, v);
  else if (key == "gradcheck_seeds") gradcheck_seeds = parse_int<int>(key, v);
  else if (key == "gradcheck_step") gradcheck_step = parse_double(key, v);
  else throw std::invalid_argument("unknown setting '" + raw_key + "'");

  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (iters < 0 || crop < 0) throw std::invalid_argument("iters and crop must be >= 0");
  if (checkpoint_every < 1 || log_every < 1) throw std::invalid_argument("checkpoint_every and log_every must be >= 1");
}

void RunConfig::load_stream(std::istream& in, const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const std::exception& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  load_stream(in, path.string());
}

long RunConfig::effective_iters() const { return iters > 0 ? iters : dataset_spec().iterations; }

int RunConfig::effective_crop() const { return crop > 0 ? crop : dataset_spec().crop_size; }

DatasetSpec RunConfig::dataset_spec() const {
  DatasetSpec s = DatasetSpec::defaults(dataset, data_root);
  s.chase_split = chase_split;
  return s;
}

std::string RunConfig::echo() const {
  std::ostringstream o;
  o << "dataset = " << to_string(dataset) << '\n'
    << "data_root = " << data_root.string() << '\n'
    << "train_dir = " << train_dir.string() << '\n'
    << "pred_dir = " << pred_dir.string() << '\n'
    << "chase_split = " << (chase_split == ChaseSplit::k20_8 ? "20/8" : "14/14") << '\n'
    << "seed = " << seed << '\n'
    << "iters = " << effective_iters() << '\n'
    << "crop = " << effective_crop() << '\n'
    << "checkpoint = " << checkpoint.string() << '\n'
    << "resume = " << (resume ? "true" : "false") << '\n'
    << "out = " << out.string() << '\n'
    << "threshold = " << (threshold ? num(*threshold) : "auto") << '\n'
    << "threads = " << threads << '\n'
    << "aux = " << (model.aux_losses ? "true" : "false") << '\n'
    << "branches = " << to_string(model.branches) << '\n'
    << "filters = " << model.c0 << ',' << model.c1 << ',' << model.c2 << '\n'
    << "lr = " << num(adam.lr) << '\n'
    << "weight_decay = " << num(adam.weight_decay) << '\n'
    << "eval_mode = " << to_string(eval_mode) << '\n'
    << "checkpoint_every = " << checkpoint_every << '\n'
    << "log_every = " << log_every << '\n'
    << "runs = " << runs << '\n'
    << "gradcheck_seeds = " << gradcheck_seeds << '\n'
    << "gradcheck_step = " << num(gradcheck_step) << '\n';
  return o.str();
}

}  // namespace dpn
