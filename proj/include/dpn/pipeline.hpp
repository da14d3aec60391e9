#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "dpn/data.hpp"
#include "dpn/loss.hpp"
#include "dpn/model.hpp"
#include "dpn/optim.hpp"

namespace dpn {

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Forward, class-balanced objective over every head, backward and one ADAM
/// update on a single image/label pair (batch size 1). The image must be a
/// multiple of 4 in both dimensions. Throws NonFiniteLoss before touching the
/// weights if the loss is not finite.
LossReport train_step(DpnModel& model, Adam& adam, const Tensor4& image, const Tensor4& label);

struct TrainOptions {
  long iterations = 2000;
  int crop = 512;
  std::uint64_t seed = 0;
  bool mirror = true;
  long checkpoint_every = 5000;
  std::filesystem::path checkpoint;  // empty: no checkpoints
  std::filesystem::path loss_log;    // empty: no CSV
};

struct IterationRecord {
  long iteration = 0;
  LossReport report;
  double ms = 0.0;
};

struct TrainResult {
  long iterations = 0;  // iterations completed in this call
  double first_loss = 0.0;
  double last_loss = 0.0;
};

/// Per iteration: pick a sample uniformly, random_crop, random_mirror, train_step.
/// Starts after adam.steps() iterations, replaying the random draws of the
/// skipped ones so a resumed run sees the same stream.
TrainResult train(DpnModel& model, Adam& adam, const std::vector<Sample>& samples, const TrainOptions& options,
                  const std::function<void(const IterationRecord&)>& on_iteration = {});

/// Sigmoid of the final head for one [1,3,H,W] image of any size, as H*W floats.
std::vector<float> predict_probabilities(const DpnModel& model, const Tensor4& image);

/// round(p * 255) as a gray raster.
Raster probability_png(const std::vector<float>& prob, int height, int width);
/// 0/1 mask of q / 255 >= threshold, computed from the stored 8-bit map so that
/// re-thresholding a reloaded probability PNG gives the same mask.
Raster binary_from_png(const Raster& prob_png, double threshold);

/// Disk-to-disk prediction of one image file: read, forward, write
/// <stem>_prob.png and <stem>_bin.png into out_dir. With hrf the image is
/// first resized to 600 x 900. Returns the wall time in milliseconds.
double predict_file(const DpnModel& model, const std::filesystem::path& in, const std::filesystem::path& out_dir,
                    double threshold, bool hrf, int* height = nullptr, int* width = nullptr);

}  // namespace dpn
