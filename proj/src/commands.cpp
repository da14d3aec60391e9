#include "dpn/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <cmath>
#include <limits>
#include <map>

#include "dpn/checkpoint.hpp"
#include "dpn/grad_suite.hpp"
#include "dpn/kernels.hpp"
#include "dpn/pipeline.hpp"
#include "dpn/synthetic.hpp"

namespace dpn {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

void echo_config(const RunConfig& cfg, const char* command, std::ostream& out) {
  out << "# dpn " << command << " effective configuration\n" << cfg.echo() << "# end configuration\n";
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

DpnModel load_or_init(const RunConfig& cfg, std::ostream& out) {
  if (fs::exists(cfg.checkpoint)) {
    out << "model: " << cfg.checkpoint.string() << '\n';
    return load_checkpoint(cfg.checkpoint).model;
  }
  out << "model: no checkpoint at " << cfg.checkpoint.string() << ", using Xavier weights from seed " << cfg.seed
      << '\n';
  DpnModel m = make_model(cfg.model);
  init_xavier(m, cfg.seed);
  return m;
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.push_back(in);
    }
  }
  return out;
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  echo_config(cfg, "train", out);
  set_kernel_threads(cfg.threads);
  cfg.model.validate();

  std::vector<Sample> samples;
  if (!cfg.train_dir.empty()) {
    samples = load_directory(cfg.train_dir, true);
    out << "training set: " << samples.size() << " samples from " << cfg.train_dir.string() << '\n';
  } else {
    const Split split = load_split(cfg.dataset_spec());
    samples = augment_offline(split.train);
    out << "training set: " << split.train.size() << " images augmented to " << samples.size() << " samples\n";
  }

  DpnModel model;
  std::uint64_t start = 0;
  if (cfg.resume && fs::exists(cfg.checkpoint)) {
    LoadedCheckpoint ck = load_checkpoint(cfg.checkpoint);
    model = std::move(ck.model);
    start = ck.adam_step.value_or(0);
    out << "resuming from " << cfg.checkpoint.string() << " at iteration " << start << '\n';
  } else {
    model = make_model(cfg.model);
    init_xavier(model, cfg.seed);
  }
  Adam adam(cfg.adam, start);

  fs::create_directories(cfg.out);
  std::ofstream(cfg.out / "config.txt") << cfg.echo();

  TrainOptions opt;
  opt.iterations = cfg.effective_iters();
  opt.crop = cfg.effective_crop();
  opt.seed = cfg.seed;
  opt.checkpoint_every = cfg.checkpoint_every;
  opt.checkpoint = cfg.checkpoint;
  opt.loss_log = cfg.out / "loss.csv";

  double window_ms = 0;
  try {
    const TrainResult r = train(model, adam, samples, opt, [&](const IterationRecord& rec) {
      window_ms += rec.ms;
      if (rec.report.n_pos == 0) {
        std::cerr << "warning: iteration " << rec.iteration << " crop has no vessel pixels (beta = 1)\n";
      }
      if (rec.iteration % cfg.log_every == 0 || rec.iteration == opt.iterations) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "iter %7ld  loss %.6g  data %.6g  decay %.6g  beta %.4f  %.1f ms/iter\n",
                      rec.iteration, rec.report.total, rec.report.data_loss, rec.report.decay_term, rec.report.beta,
                      window_ms / static_cast<double>(cfg.log_every));
        out << buf << std::flush;
        window_ms = 0;
      }
    });
    out << "done: " << r.iterations << " iterations, loss " << r.first_loss << " -> " << r.last_loss
        << "; checkpoint " << cfg.checkpoint.string() << '\n';
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << "; last saved checkpoint kept\n";
    return 2;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "error: " << e.what() << "; last saved checkpoint kept\n";
    return 2;
  }
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::vector<fs::path>& inputs, std::ostream& out) {
  echo_config(cfg, "predict", out);
  set_kernel_threads(cfg.threads);
  const DpnModel model = load_or_init(cfg, out);
  const std::vector<fs::path> files = expand_inputs(inputs.empty() ? std::vector{cfg.data_root / "images"} : inputs);
  const double threshold = cfg.threshold.value_or(0.5);
  fs::create_directories(cfg.out);

  int failures = 0;
  double total_ms = 0;
  int done = 0;
  for (const auto& f : files) {
    try {
      int h = 0, w = 0;
      const double ms = predict_file(model, f, cfg.out, threshold, cfg.dataset == DatasetName::kHrf, &h, &w);
      total_ms += ms;
      ++done;
      char buf[200];
      std::snprintf(buf, sizeof buf, "%-28s %5dx%-5d %9.1f ms  %7.3f fps\n", f.filename().string().c_str(), w, h, ms,
                    1000.0 / ms);
      out << buf << std::flush;
    } catch (const std::exception& e) {
      std::cerr << "error: " << f.string() << ": " << e.what() << '\n';
      ++failures;
    }
  }
  if (done > 0) {
    out << "predicted " << done << " images, mean " << total_ms / done << " ms, " << 1000.0 * done / total_ms
        << " fps (disk read to disk write, model load excluded)\n";
  }
  return failures == 0 ? 0 : 1;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  echo_config(cfg, "evaluate", out);
  set_kernel_threads(cfg.threads);
  const Split split = load_split(cfg.dataset_spec());

  std::optional<DpnModel> model;
  if (cfg.pred_dir.empty()) model = load_or_init(cfg, out);

  std::vector<ImageEval> evals;
  for (const Sample& s : split.test) {
    ImageEval e;
    e.id = s.id;
    e.height = s.height();
    e.width = s.width();
    e.gt = s.label.px;
    e.fov = s.fov.px;
    if (model) {
      const auto t0 = Clock::now();
      e.prob = predict_probabilities(*model, s.image_tensor());
      e.ms = ms_since(t0);
    } else {
      const fs::path p = cfg.pred_dir / (s.id + "_prob.png");
      Raster png = read_gray(p);
      if (!png.same_size(s.image)) {
        throw std::runtime_error(p.string() + " is " + std::to_string(png.width) + "x" + std::to_string(png.height) +
                                 ", GT is " + std::to_string(s.width()) + "x" + std::to_string(s.height()));
      }
      e.prob.resize(png.px.size());
      for (std::size_t i = 0; i < png.px.size(); ++i) e.prob[i] = static_cast<float>(png.px[i] / 255.0);
    }
    evals.push_back(std::move(e));
  }

  const EvalReport report = aggregate(evals, cfg.eval_mode, cfg.threshold);
  fs::create_directories(cfg.out);
  {
    std::ofstream csv(cfg.out / "eval.csv");
    write_csv(csv, report);
    std::ofstream txt(cfg.out / "eval.txt");
    write_text(txt, report);
  }
  write_text(out, report);
  out << "report: " << (cfg.out / "eval.csv").string() << '\n';
  if (report.weak_threshold) std::cerr << "warning: best Youden J <= 0\n";
  return 0;
}

int cmd_augment(const RunConfig& cfg, std::ostream& out) {
  echo_config(cfg, "augment", out);
  set_kernel_threads(cfg.threads);
  const Split split = load_split(cfg.dataset_spec());
  std::size_t written = 0;
  for (const Sample& s : split.train) {
    for (const Sample& a : augment_sample(s)) {
      const std::string name = a.id + "_" + a.tag + ".png";
      write_png(cfg.out / "images" / name, a.image);
      write_mask_png(cfg.out / "labels" / name, a.label);
      write_mask_png(cfg.out / "fov" / name, a.fov);
      ++written;
    }
  }
  out << "wrote " << written << " image/label/fov triples from " << split.train.size() << " training images to "
      << cfg.out.string() << '\n';
  return 0;
}

int cmd_count_params(const RunConfig& cfg, std::ostream& out) {
  echo_config(cfg, "count-params", out);
  const DpnModel model = make_model(cfg.model);
  out << count_parameters(model).format();
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  echo_config(cfg, "gradcheck", out);
  set_kernel_threads(cfg.threads);
  struct Worst {
    double err = 0;
    double tol = 0;
    bool ok = true;
    std::string where;
    std::size_t coords = 0;
    std::size_t skipped = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Worst> worst;
  for (int i = 0; i < cfg.gradcheck_seeds; ++i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    for (const GradCase& c : run_grad_suite(seed, cfg.gradcheck_step)) {
      auto [it, fresh] = worst.try_emplace(c.name);
      if (fresh) order.push_back(c.name);
      Worst& w = it->second;
      w.tol = c.tolerance;
      w.ok = w.ok && c.passed();
      w.coords += c.report.coordinates;
      w.skipped += c.report.skipped;
      if (!c.report.finite || c.report.max_abs_error >= w.err) {
        w.err = c.report.finite ? c.report.max_abs_error : std::numeric_limits<double>::infinity();
        w.where = "seed " + std::to_string(seed) + " " + c.report.worst;
      }
    }
  }
  bool all = true;
  for (const auto& name : order) {
    const Worst& w = worst[name];
    all = all && w.ok;
    char buf[260];
    std::snprintf(buf, sizeof buf, "%-4s %-22s max abs err %.3e (tol %.0e)  %5zu coords  %3zu at kinks  worst at %s\n",
                  w.ok ? "PASS" : "FAIL", name.c_str(), w.err, w.tol, w.coords, w.skipped, w.where.c_str());
    out << buf;
  }
  out << (all ? "gradcheck passed" : "gradcheck FAILED") << " over " << cfg.gradcheck_seeds << " seeds\n";
  return all ? 0 : 1;
}

int cmd_benchmark(const RunConfig& cfg, const std::vector<fs::path>& inputs, std::ostream& out) {
  echo_config(cfg, "benchmark", out);
  set_kernel_threads(cfg.threads);
  std::vector<fs::path> files;
  if (inputs.empty()) {
    for (const Sample& s : load_split(cfg.dataset_spec()).test) files.push_back(s.source);
  } else {
    files = expand_inputs(inputs);
  }
  if (files.empty()) {
    std::cerr << "error: no images to benchmark\n";
    return 1;
  }
  const DpnModel model = load_or_init(cfg, out);
  const int runs = std::max(cfg.runs, 20);
  const fs::path dir = cfg.out / "benchmark";
  fs::create_directories(dir);
  out << "protocol: per image, wall time from reading the raw image to writing both output PNGs;\n"
      << "          model load is done once and excluded; " << runs << " timed runs over " << files.size()
      << " images; threads " << cfg.threads << '\n';

  std::vector<double> seconds;
  for (int i = 0; i < runs; ++i) {
    seconds.push_back(predict_file(model, files[i % files.size()], dir, cfg.threshold.value_or(0.5),
                                   cfg.dataset == DatasetName::kHrf) /
                      1000.0);
  }
  std::vector<double> sorted = seconds;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0;
  for (double s : seconds) sum += s;
  const double mean = sum / runs;
  const double median = runs % 2 ? sorted[runs / 2] : 0.5 * (sorted[runs / 2 - 1] + sorted[runs / 2]);
  char buf[200];
  std::snprintf(buf, sizeof buf, "seconds/image: mean %.4f  median %.4f  min %.4f  max %.4f\n", mean, median,
                sorted.front(), sorted.back());
  out << buf;
  std::snprintf(buf, sizeof buf, "fps: mean %.3f  median %.3f  best %.3f\n", 1.0 / mean, 1.0 / median,
                1.0 / sorted.front());
  out << buf;
  return 0;
}

int cmd_make_synthetic(const RunConfig& cfg, std::ostream& out) {
  echo_config(cfg, "make-synthetic", out);
  const int n = write_synthetic_dataset(cfg.dataset, cfg.out, cfg.seed);
  out << "wrote " << n << " synthetic " << to_string(cfg.dataset) << " samples to " << cfg.out.string() << '\n';
  return 0;
}

}  // namespace dpn
