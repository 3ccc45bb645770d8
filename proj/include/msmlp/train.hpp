#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "msmlp/model.hpp"
#include "msmlp/tensor.hpp"

namespace msmlp {

// ---------------------------------------------------------------------------
// AdamW

struct OptimState {
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One AdamW update of every parameter from its .grad. Weight decay is
/// decoupled (theta -= lr*wd*theta) and applied before the moment step;
/// decay_scale[k] multiplies the decay of parameter k (empty = all 1).
void adamw_step(std::span<Parameter* const> params, OptimState& state,
                std::span<const double> decay_scale = {});

/// Linear warm-up over the first warmup_steps, cosine decay to 0 afterwards.
double cosine_lr(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr);

// ---------------------------------------------------------------------------
// loss

struct LossResult {
  double loss = 0.0;
  Tensor4 grad;  // d loss / d logits, same shape as logits
};

/// Mean over the batch of -log softmax(logits)[label]; logits are (n,1,1,k).
LossResult cross_entropy(const Tensor4& logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// synthetic data

struct SyntheticTask {
  int image_size = 32;
  int in_channels = 3;
  int num_classes = 8;
  std::uint64_t seed = 0;
  int samples = 64;
};

struct Dataset {
  Tensor4 images;  // (samples, size, size, channels)
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  Tensor4 batch_images(std::span<const int> indices) const;
  std::vector<int> batch_labels(std::span<const int> indices) const;
};

/// Each image holds one striped square on a noisy background. The label is
/// 2 * quadrant + orientation, where quadrant is the coarse position of the
/// square and orientation is whether its stripes run along rows or columns.
/// Requires num_classes == 8.
Dataset make_synthetic_task(const SyntheticTask& task);

// ---------------------------------------------------------------------------
// training loop

struct TrainConfig {
  int steps = 600;
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double warmup_fraction = 0.05;
  double max_grad_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // on the step's batch
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<StepMetrics> steps;
  double final_accuracy = 0.0;  // eval mode over the whole dataset
  double final_loss = 0.0;
};

/// Throws std::runtime_error if a loss turns non-finite.
TrainHistory train_loop(Model& model, const Dataset& data, const TrainConfig& config);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(Model& model, const Dataset& data, int batch_size = 64);

/// Softmax regression on raw pixels trained with the same optimizer; returns
/// its final train accuracy. Baseline for how hard the synthetic task is.
double linear_baseline_accuracy(const Dataset& data, int steps, double lr, std::uint64_t seed);

void write_history_csv(std::ostream& out, const TrainHistory& history);

}  // namespace msmlp
