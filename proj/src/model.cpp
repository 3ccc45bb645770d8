#include "msmlp/model.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace msmlp {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

MixShiftSpec table_mixshift(std::vector<int> r, std::vector<int> d = {0, 1, 2, 3, 4}) {
  MixShiftSpec m;
  m.d = std::move(d);
  m.r = std::move(r);
  m.axis_mode = AxisMode::dual;
  m.conv_type = ConvType::depthwise;
  m.projection = Projection::none;
  return m;
}

// Per-stage region sizes of the Tiny/Small/Base models.
const std::vector<std::vector<int>> kStageRegions = {
    {1, 1, 3, 5, 7}, {1, 3, 3, 5, 7}, {1, 5, 5, 5, 7}, {1, 7, 7, 7, 7}};

ModelSpec pyramid(const std::string& name, std::vector<int> channels, std::vector<int> blocks,
                  double drop_path_max) {
  ModelSpec spec;
  spec.name = name;
  const std::vector<int> ratios = {4, 2, 2, 2};
  for (std::size_t s = 0; s < 4; ++s) {
    StageSpec st;
    st.patch_ratio = ratios[s];
    st.out_channels = channels[s];
    st.num_blocks = blocks[s];
    st.mixshift = table_mixshift(kStageRegions[s]);
    st.drop_path_max = drop_path_max;
    spec.stages.push_back(st);
  }
  return spec;
}

ModelSpec ablation(const std::string& name, std::vector<int> r, std::vector<int> d) {
  ModelSpec spec = pyramid(name, {96, 192, 384, 768}, {3, 3, 9, 3}, 0.2);
  for (auto& st : spec.stages) st.mixshift = table_mixshift(r, d);
  return spec;
}

ModelSpec tiny_desk() {
  ModelSpec spec;
  spec.name = "tiny-desk";
  spec.image_size = 32;
  spec.in_channels = 3;
  spec.num_classes = 8;
  StageSpec s1;
  s1.patch_ratio = 2;
  s1.out_channels = 16;
  s1.num_blocks = 1;
  s1.mixshift = table_mixshift({1, 1, 3, 5, 7});
  s1.mixshift.projection = Projection::pre_post;
  StageSpec s2 = s1;
  s2.out_channels = 32;
  s2.mixshift.r = {1, 3, 3, 5, 7};
  spec.stages = {s1, s2};
  return spec;
}

void init_linear(LinearWeights& w, Rng& rng) { fill_trunc_normal(w.weight.value, rng, 0.02); }

}  // namespace

void BlockSpec::validate() const {
  mixshift.validate();
  require(mlp_ratio >= 1, "BlockSpec: mlp_ratio must be >= 1");
  require(drop_path_rate >= 0.0 && drop_path_rate < 1.0, "BlockSpec: drop_path_rate must be in [0, 1)");
  require(channels >= mixshift.S(), "BlockSpec: " + std::to_string(channels) +
                                        " channels cannot be split into S = " +
                                        std::to_string(mixshift.S()) + " groups");
}

void StageSpec::validate() const {
  require(patch_ratio == 2 || patch_ratio == 4, "StageSpec: patch_ratio must be 2 or 4");
  require(out_channels >= 1, "StageSpec: out_channels must be positive");
  require(num_blocks >= 1, "StageSpec: num_blocks must be >= 1");
  require(mlp_ratio >= 1, "StageSpec: mlp_ratio must be >= 1");
  require(drop_path_max >= 0.0 && drop_path_max < 1.0, "StageSpec: drop_path_max must be in [0, 1)");
  mixshift.validate();
  require(out_channels >= mixshift.S(), "StageSpec: fewer channels than groups");
}

void ModelSpec::validate() const {
  require(!stages.empty(), "ModelSpec: at least one stage required");
  require(image_size >= 1 && in_channels >= 1 && num_classes >= 1,
          "ModelSpec: image_size, in_channels and num_classes must be positive");
  int total_ratio = 1;
  for (const auto& st : stages) {
    st.validate();
    total_ratio *= st.patch_ratio;
  }
  require(image_size % total_ratio == 0, "ModelSpec: image_size " + std::to_string(image_size) +
                                             " not divisible by the patch ratio product " +
                                             std::to_string(total_ratio));
}

int ModelSpec::total_blocks() const {
  int n = 0;
  for (const auto& st : stages) n += st.num_blocks;
  return n;
}

double ModelSpec::drop_path_max() const {
  double m = 0.0;
  for (const auto& st : stages) m = std::max(m, st.drop_path_max);
  return m;
}

std::vector<int> ModelSpec::stage_resolutions(int size) const {
  std::vector<int> res;
  for (const auto& st : stages) {
    require(size % st.patch_ratio == 0, "stage_resolutions: size not divisible by patch ratio");
    size /= st.patch_ratio;
    res.push_back(size);
  }
  return res;
}

ModelSpec preset(const std::string& name) {
  if (name == "ms-mlp-t") return pyramid(name, {96, 192, 384, 768}, {3, 3, 9, 3}, 0.2);
  if (name == "ms-mlp-s") return pyramid(name, {96, 192, 384, 768}, {3, 3, 27, 3}, 0.3);
  if (name == "ms-mlp-b") return pyramid(name, {128, 256, 512, 1024}, {3, 3, 27, 3}, 0.5);
  if (name == "ms-mlp-t-lite") return pyramid(name, {96, 192, 384, 768}, {2, 2, 6, 2}, 0.2);
  if (name == "ms-mlp-s-lite") return pyramid(name, {96, 192, 384, 768}, {2, 2, 18, 2}, 0.3);
  if (name == "ablation-local") return ablation(name, {1, 1, 1, 1, 1}, {0, 1, 2, 3, 4});
  if (name == "ablation-global") return ablation(name, {7, 7, 7, 7, 7}, {0, 1, 2, 3, 4});
  if (name == "ablation-isolated") return ablation(name, {1, 1, 3, 5, 7}, {0, 2, 5, 10, 17});
  if (name == "ablation-regional") return ablation(name, {1, 1, 3, 5, 7}, {0, 1, 2, 3, 4});
  if (name == "tiny-desk") return tiny_desk();
  throw std::out_of_range("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"ms-mlp-t",       "ms-mlp-s",        "ms-mlp-b",          "ms-mlp-t-lite",
          "ms-mlp-s-lite",  "ablation-local",  "ablation-global",   "ablation-isolated",
          "ablation-regional", "tiny-desk"};
}

// ---------------------------------------------------------------------------

std::vector<NamedParameter> Model::named_parameters() {
  std::vector<NamedParameter> out;
  auto add = [&](const std::string& name, Parameter& p) { out.push_back({name, &p}); };
  for (std::size_t s = 0; s < stages.size(); ++s) {
    StageParams& st = stages[s];
    const std::string sp = "stages." + std::to_string(s) + ".";
    add(sp + "embed.weight", st.embed.weight);
    add(sp + "embed.bias", st.embed.bias);
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      BlockParams& bl = st.blocks[b];
      const std::string bp = sp + "blocks." + std::to_string(b) + ".";
      add(bp + "norm1.gamma", bl.norm1.gamma);
      add(bp + "norm1.beta", bl.norm1.beta);
      for_each_parameter(bl.mix, bp + "mix.", add);
      add(bp + "norm2.gamma", bl.norm2.gamma);
      add(bp + "norm2.beta", bl.norm2.beta);
      add(bp + "mlp.fc1.weight", bl.fc1.weight);
      add(bp + "mlp.fc1.bias", bl.fc1.bias);
      add(bp + "mlp.fc2.weight", bl.fc2.weight);
      add(bp + "mlp.fc2.bias", bl.fc2.bias);
    }
  }
  add("norm.gamma", final_norm.gamma);
  add("norm.beta", final_norm.beta);
  add("head.weight", head.weight);
  add("head.bias", head.bias);
  return out;
}

std::size_t Model::num_parameters() const {
  std::size_t total = 0;
  for (const auto& np : const_cast<Model*>(this)->named_parameters()) total += np.param->size();
  return total;
}

Parameter& Model::parameter(const std::string& name) {
  for (auto& np : named_parameters())
    if (np.name == name) return *np.param;
  throw std::out_of_range("Model: no parameter named '" + name + "'");
}

void Model::zero_grad() {
  for (auto& np : named_parameters()) np.param->zero_grad();
}

std::vector<double> drop_path_schedule(int total_blocks, double max_rate) {
  std::vector<double> rates(std::max(0, total_blocks), 0.0);
  if (total_blocks > 1)
    for (int k = 0; k < total_blocks; ++k) rates[k] = max_rate * k / (total_blocks - 1);
  return rates;
}

Model allocate_model(const ModelSpec& spec) {
  spec.validate();
  Model m;
  m.spec = spec;
  const std::vector<double> rates = drop_path_schedule(spec.total_blocks(), spec.drop_path_max());
  int in_ch = spec.in_channels;
  int block_index = 0;
  for (const auto& st : spec.stages) {
    StageParams sp;
    sp.patch_ratio = st.patch_ratio;
    sp.embed = LinearWeights(st.patch_ratio * st.patch_ratio * in_ch, st.out_channels);
    const int C = st.out_channels;
    for (int b = 0; b < st.num_blocks; ++b) {
      BlockParams bl;
      bl.spec = BlockSpec{C, st.mixshift, st.mlp_ratio, rates[block_index++]};
      bl.spec.validate();
      bl.norm1 = NormAffine(C);
      bl.mix = make_mix_shift_params(st.mixshift, C, true);
      bl.norm2 = NormAffine(C);
      bl.fc1 = LinearWeights(C, st.mlp_ratio * C);
      bl.fc2 = LinearWeights(st.mlp_ratio * C, C);
      sp.blocks.push_back(std::move(bl));
    }
    m.stages.push_back(std::move(sp));
    in_ch = C;
  }
  m.final_norm = NormAffine(in_ch);
  m.head = LinearWeights(in_ch, spec.num_classes);
  return m;
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  Model m = allocate_model(spec);
  Rng rng(seed);
  for (auto& st : m.stages) {
    init_linear(st.embed, rng);
    for (auto& bl : st.blocks) {
      randomize(bl.mix, rng, 0.02, 0.0);
      init_linear(bl.fc1, rng);
      init_linear(bl.fc2, rng);
    }
  }
  init_linear(m.head, rng);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

Var drop_path(const Var& branch, double rate, bool train_mode, Rng* rng) {
  if (!train_mode || rate <= 0.0) return branch;
  if (rng == nullptr) throw std::invalid_argument("drop path in train mode needs an Rng");
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> factors(branch.shape().n);
  for (double& f : factors) f = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
  return ag::scale_samples(branch, std::move(factors));
}

}  // namespace

Var ms_block_forward(const Var& x, BlockParams& block, bool train_mode, Rng* rng) {
  if (x.shape().c != block.spec.channels) {
    throw std::invalid_argument("ms_block_forward: input has " + std::to_string(x.shape().c) +
                                " channels, block expects " + std::to_string(block.spec.channels));
  }
  Var mixed = mix_shift_forward(ag::layer_norm(x, block.norm1), block.spec.mixshift, block.mix);
  Var z = ag::add(x, drop_path(mixed, block.spec.drop_path_rate, train_mode, rng));
  Var hidden = ag::gelu(ag::channel_linear(ag::layer_norm(z, block.norm2), block.fc1));
  Var mlp = ag::channel_linear(hidden, block.fc2);
  return ag::add(z, drop_path(mlp, block.spec.drop_path_rate, train_mode, rng));
}

Var model_forward(Model& model, const Var& images, bool train_mode, Rng* rng,
                  std::vector<Shape4>* stage_shapes) {
  const Shape4& s = images.shape();
  if (s.h != model.spec.image_size || s.w != model.spec.image_size || s.c != model.spec.in_channels) {
    throw std::invalid_argument("model_forward: expected images of " +
                                std::to_string(model.spec.image_size) + "x" +
                                std::to_string(model.spec.image_size) + "x" +
                                std::to_string(model.spec.in_channels) + ", got " + s.str());
  }
  Var x = images;
  for (auto& st : model.stages) {
    x = ag::patch_embed(x, st.patch_ratio, st.embed);
    for (auto& bl : st.blocks) x = ms_block_forward(x, bl, train_mode, rng);
    if (stage_shapes) stage_shapes->push_back(x.shape());
  }
  x = ag::global_avg_pool(ag::layer_norm(x, model.final_norm));
  return ag::channel_linear(x, model.head);
}

Tensor4 model_forward(Model& model, const Tensor4& images, std::vector<Shape4>* stage_shapes) {
  Tape tape(false);
  Var logits = model_forward(model, tape.constant(images), false, nullptr, stage_shapes);
  return logits.value();
}

}  // namespace msmlp
