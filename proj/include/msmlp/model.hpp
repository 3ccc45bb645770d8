#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msmlp/autograd.hpp"
#include "msmlp/mixshift.hpp"
#include "msmlp/ops.hpp"
#include "msmlp/tensor.hpp"

namespace msmlp {

struct BlockSpec {
  int channels = 0;
  MixShiftSpec mixshift;
  int mlp_ratio = 4;
  double drop_path_rate = 0.0;

  void validate() const;
};

struct StageSpec {
  int patch_ratio = 4;
  int out_channels = 96;
  int num_blocks = 1;
  MixShiftSpec mixshift;
  int mlp_ratio = 4;
  double drop_path_max = 0.0;

  void validate() const;
  bool operator==(const StageSpec&) const = default;
};

struct ModelSpec {
  std::string name = "custom";
  int image_size = 224;
  int in_channels = 3;
  int num_classes = 1000;
  std::vector<StageSpec> stages;

  void validate() const;
  int total_blocks() const;
  /// Largest drop_path_max over all stages; blocks ramp linearly from 0 to it.
  double drop_path_max() const;
  /// Spatial side length of each stage's token map for `image_size`.
  std::vector<int> stage_resolutions(int image_size) const;
  std::vector<int> stage_resolutions() const { return stage_resolutions(image_size); }

  bool operator==(const ModelSpec&) const = default;
};

/// Named configurations: ms-mlp-{t,s,b}, ms-mlp-{t,s}-lite, ablation-{local,
/// global,isolated,regional}, tiny-desk.
ModelSpec preset(const std::string& name);
std::vector<std::string> preset_names();

struct BlockParams {
  BlockSpec spec;
  NormAffine norm1;
  MixShiftParams mix;
  NormAffine norm2;
  LinearWeights fc1;
  LinearWeights fc2;
};

struct StageParams {
  int patch_ratio = 1;
  LinearWeights embed;
  std::vector<BlockParams> blocks;
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};

class Model {
 public:
  ModelSpec spec;
  std::vector<StageParams> stages;
  NormAffine final_norm;
  LinearWeights head;

  /// Every learnable array in a fixed depth-first order.
  std::vector<NamedParameter> named_parameters();
  std::size_t num_parameters() const;
  Parameter& parameter(const std::string& name);
  void zero_grad();
};

/// Zero-filled parameters shaped for `spec`; drop-path rates assigned.
Model allocate_model(const ModelSpec& spec);
/// Truncated-normal (std 0.02) linear and conv weights, zero biases, unit norms.
Model build_model(const ModelSpec& spec, std::uint64_t seed);

/// Drop path rates ramp linearly over all blocks in depth order, first block 0.
std::vector<double> drop_path_schedule(int total_blocks, double max_rate);

/// Z = X + mix(norm1(X)); O = Z + mlp(norm2(Z)). In train mode each residual
/// branch of each sample is dropped with the block's drop_path_rate and
/// otherwise rescaled by 1/(1-rate).
Var ms_block_forward(const Var& x, BlockParams& block, bool train_mode, Rng* rng);

/// Stage-by-stage patch embedding and blocks, final norm, average pool, and
/// head. Logits are (n, 1, 1, num_classes). Shapes of every stage output are
/// appended to `stage_shapes` when given.
Var model_forward(Model& model, const Var& images, bool train_mode, Rng* rng,
                  std::vector<Shape4>* stage_shapes = nullptr);
/// Inference convenience on a non-recording tape.
Tensor4 model_forward(Model& model, const Tensor4& images, std::vector<Shape4>* stage_shapes = nullptr);

}  // namespace msmlp
