#include "dpn/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dpn/checkpoint.hpp"
#include "dpn/kernels.hpp"

namespace dpn {

LossReport train_step(DpnModel& model, Adam& adam, const Tensor4& image, const Tensor4& label) {
  if (image.h() % 4 != 0 || image.w() % 4 != 0) {
    throw ShapeError("train_step: training crops must be multiples of 4, got " + image.shape().str());
  }
  std::vector<Param*> params = model.parameters();
  for (Param* p : params) p->zero_grad();

  Tape tape;
  const Var x = tape.input(image);
  const std::vector<Var> heads = dpn_forward(tape, x, model);
  const std::vector<const Param*> cparams(params.begin(), params.end());
  const Objective obj = total_objective<float>(tape, heads, label, adam.config().weight_decay, cparams,
                                               model.config.head_positions().size());
  if (!std::isfinite(obj.report.total)) {
    throw NonFiniteLoss("non-finite loss " + std::to_string(obj.report.total) + " at iteration " +
                        std::to_string(adam.steps() + 1));
  }
  tape.backward(obj.loss);
  tape.clear();
  adam.step<float>(params);
  return obj.report;
}

namespace {

struct Draw {
  std::size_t index;
  int y0, x0;
  bool mirror;
};

Draw draw(const std::vector<Sample>& samples, int size, bool mirror, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  Draw d{};
  d.index = pick(rng);
  const Sample& s = samples[d.index];
  if (size > s.height() || size > s.width()) {
    throw std::invalid_argument("crop size " + std::to_string(size) + " does not fit sample " + s.file_stem() + " (" +
                                std::to_string(s.height()) + "x" + std::to_string(s.width()) + ")");
  }
  // Same draw order as random_crop / random_mirror.
  std::uniform_int_distribution<int> dy(0, s.height() - size);
  std::uniform_int_distribution<int> dx(0, s.width() - size);
  d.y0 = dy(rng);
  d.x0 = dx(rng);
  if (mirror) {
    std::bernoulli_distribution coin(0.5);
    d.mirror = coin(rng);
  }
  return d;
}

void write_log_header(std::ostream& out, std::size_t heads) {
  out << "iteration,total,data,decay,beta";
  for (std::size_t i = 0; i < heads; ++i) out << ",head" << i;
  out << '\n';
}

void write_log_row(std::ostream& out, long it, const LossReport& r) {
  char buf[64];
  out << it;
  for (double v : {r.total, r.data_loss, r.decay_term, r.beta}) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    out << buf;
  }
  for (double v : r.head_losses) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    out << buf;
  }
  out << '\n';
}

}  // namespace

TrainResult train(DpnModel& model, Adam& adam, const std::vector<Sample>& samples, const TrainOptions& options,
                  const std::function<void(const IterationRecord&)>& on_iteration) {
  if (samples.empty()) throw std::invalid_argument("train: no training samples");
  if (options.crop % 4 != 0) throw std::invalid_argument("train: crop size must be a multiple of 4");
  std::mt19937_64 rng(options.seed);
  const auto start = static_cast<long>(adam.steps());
  for (long i = 0; i < start; ++i) draw(samples, options.crop, options.mirror, rng);

  std::ofstream log;
  if (!options.loss_log.empty()) {
    if (options.loss_log.has_parent_path()) std::filesystem::create_directories(options.loss_log.parent_path());
    const bool append = start > 0 && std::filesystem::exists(options.loss_log);
    log.open(options.loss_log, append ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open loss log " + options.loss_log.string());
    if (!append) write_log_header(log, model.heads.size());
  }

  TrainResult result;
  for (long it = start + 1; it <= options.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const Draw d = draw(samples, options.crop, options.mirror, rng);
    Sample s = crop(samples[d.index], d.y0, d.x0, options.crop, options.crop);
    if (d.mirror) s = hflip(s);
    const LossReport report = train_step(model, adam, s.image_tensor(), s.label_tensor());
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    if (result.iterations == 0) result.first_loss = report.total;
    result.last_loss = report.total;
    ++result.iterations;
    if (log) {
      write_log_row(log, it, report);
      log.flush();
    }
    if (on_iteration) on_iteration(IterationRecord{it, report, ms});
    if (!options.checkpoint.empty() && (it % options.checkpoint_every == 0 || it == options.iterations)) {
      save_checkpoint(model, options.checkpoint, adam.steps());
    }
  }
  return result;
}

std::vector<float> predict_probabilities(const DpnModel& model, const Tensor4& image) {
  const Padded<float> padded = pad_to_multiple(image, 4);
  std::vector<Tensor4> logits = dpn_forward(padded.tensor, model, true);
  const Tensor4 cropped = crop(logits.back(), image.h(), image.w());
  const Tensor4 prob = sigmoid(cropped);
  return prob.storage();
}

Raster probability_png(const std::vector<float>& prob, int height, int width) {
  if (prob.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("probability_png: map size does not match dimensions");
  }
  Raster out(height, width, 1);
  for (std::size_t i = 0; i < prob.size(); ++i) {
    out.px[i] = static_cast<std::uint8_t>(std::clamp(std::lround(prob[i] * 255.0), 0L, 255L));
  }
  return out;
}

Raster binary_from_png(const Raster& prob_png, double threshold) {
  Raster out(prob_png.height, prob_png.width, 1);
  for (std::size_t i = 0; i < prob_png.px.size(); ++i) out.px[i] = prob_png.px[i] / 255.0 >= threshold ? 1 : 0;
  return out;
}

double predict_file(const DpnModel& model, const std::filesystem::path& in, const std::filesystem::path& out_dir,
                    double threshold, bool hrf, int* height, int* width) {
  const auto t0 = std::chrono::steady_clock::now();
  Raster image = read_rgb(in);
  if (hrf && (image.height != kHrfHeight || image.width != kHrfWidth)) {
    image = resize_bilinear(image, kHrfHeight, kHrfWidth);
  }
  Sample s;
  s.image = std::move(image);
  const std::vector<float> prob = predict_probabilities(model, s.image_tensor());
  const Raster png = probability_png(prob, s.height(), s.width());
  const std::string stem = in.stem().string();
  write_png(out_dir / (stem + "_prob.png"), png);
  write_mask_png(out_dir / (stem + "_bin.png"), binary_from_png(png, threshold));
  if (height) *height = s.height();
  if (width) *width = s.width();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace dpn
