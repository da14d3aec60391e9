#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dpn/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::vector<std::pair<std::string, std::string>> values;  // key, storage
  bool resume = false;
  bool no_aux = false;
  std::vector<std::string> inputs;
};

const std::vector<std::pair<std::string, std::string>> kOptions = {
    {"dataset", "drive | chase | hrf"},
    {"data-root", "dataset root with images/, labels/, fov/"},
    {"train-dir", "pre-augmented training set (from `augment`)"},
    {"pred-dir", "evaluate saved <stem>_prob.png maps instead of running the model"},
    {"chase-split", "20/8 | 14/14"},
    {"seed", "random seed"},
    {"iters", "training iterations (0: dataset default)"},
    {"crop", "training crop size (0: dataset default)"},
    {"checkpoint", "checkpoint path"},
    {"out", "output directory"},
    {"threshold", "binarization threshold, or auto"},
    {"threads", "worker threads"},
    {"branches", "os1 | os1,os2 | os1,os2,os4"},
    {"filters", "C0,C1,C2 filter widths"},
    {"lr", "ADAM learning rate"},
    {"weight-decay", "L2 weight decay"},
    {"eval-mode", "pooled | per-image"},
    {"checkpoint-every", "iterations between checkpoints"},
    {"log-every", "iterations between progress lines"},
    {"runs", "benchmark timed runs (at least 20)"},
    {"gradcheck-seeds", "number of gradient-check seeds"},
    {"gradcheck-step", "central-difference step"},
};

void add_common(CLI::App* sub, Flags& f, bool positional) {
  sub->add_option("--config", f.config, "key = value configuration file")->check(CLI::ExistingFile);
  f.values.reserve(kOptions.size());
  for (const auto& [name, help] : kOptions) {
    f.values.emplace_back(name, std::string());
    sub->add_option("--" + name, f.values.back().second, help);
  }
  sub->add_flag("--resume", f.resume, "continue from --checkpoint when it exists");
  sub->add_flag("--no-aux", f.no_aux, "drop the auxiliary heads");
  if (positional) sub->add_option("inputs", f.inputs, "image files or directories");
}

dpn::RunConfig build_config(CLI::App* sub, const Flags& f) {
  dpn::RunConfig cfg;
  if (!f.config.empty()) cfg.load_file(f.config);
  for (const auto& [name, value] : f.values) {
    if (sub->count("--" + name) > 0) cfg.set(name, value);
  }
  if (f.resume) cfg.resume = true;
  if (f.no_aux) cfg.model.aux_losses = false;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpn: full-resolution vessel segmentation of fundus images"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    bool positional;
  };
  const Command commands[] = {
      {"train", "train on a dataset (batch size 1, ADAM)", false},
      {"predict", "write probability and binary maps for images", true},
      {"evaluate", "FOV-masked metrics on the test split", false},
      {"augment", "write the 11x augmented training set", false},
      {"count-params", "print the learnable parameter table", false},
      {"gradcheck", "central-difference check of every op and the full network", false},
      {"benchmark", "disk-to-disk inference timing", true},
      {"make-synthetic", "write a synthetic dataset with a public dataset's layout", false},
  };
  std::map<std::string, std::unique_ptr<Flags>> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    auto& f = flags[c.name] = std::make_unique<Flags>();
    add_common(sub, *f, c.positional);
    subs[c.name] = sub;
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const Flags& f = *flags[name];
      const dpn::RunConfig cfg = build_config(sub, f);
      std::vector<std::filesystem::path> inputs(f.inputs.begin(), f.inputs.end());
      if (name == "train") return dpn::cmd_train(cfg, std::cout);
      if (name == "predict") return dpn::cmd_predict(cfg, inputs, std::cout);
      if (name == "evaluate") return dpn::cmd_evaluate(cfg, std::cout);
      if (name == "augment") return dpn::cmd_augment(cfg, std::cout);
      if (name == "count-params") return dpn::cmd_count_params(cfg, std::cout);
      if (name == "gradcheck") return dpn::cmd_gradcheck(cfg, std::cout);
      if (name == "benchmark") return dpn::cmd_benchmark(cfg, inputs, std::cout);
      if (name == "make-synthetic") return dpn::cmd_make_synthetic(cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
