#include "msmlp/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace msmlp {

using nlohmann::json;

void to_json(json& j, const MixShiftSpec& spec) {
  j = json{{"S", spec.S()},
           {"d", spec.d},
           {"r", spec.r},
           {"axis_mode", to_string(spec.axis_mode)},
           {"conv_type", to_string(spec.conv_type)},
           {"projection", to_string(spec.projection)}};
}

void from_json(const json& j, MixShiftSpec& spec) {
  MixShiftSpec out;
  j.at("d").get_to(out.d);
  j.at("r").get_to(out.r);
  if (j.contains("S") && j.at("S").get<int>() != out.S()) {
    throw std::invalid_argument("MixShiftSpec JSON: S does not match the length of d");
  }
  if (j.contains("axis_mode")) out.axis_mode = axis_mode_from_string(j.at("axis_mode").get<std::string>());
  if (j.contains("conv_type")) out.conv_type = conv_type_from_string(j.at("conv_type").get<std::string>());
  if (j.contains("projection")) out.projection = projection_from_string(j.at("projection").get<std::string>());
  out.validate();
  spec = std::move(out);
}

void to_json(json& j, const StageSpec& stage) {
  j = json{{"p", stage.patch_ratio},
           {"c", stage.out_channels},
           {"blocks", stage.num_blocks},
           {"mixshift", stage.mixshift},
           {"mlp_ratio", stage.mlp_ratio},
           {"drop_path_max", stage.drop_path_max}};
}

void from_json(const json& j, StageSpec& stage) {
  StageSpec out;
  j.at("p").get_to(out.patch_ratio);
  j.at("c").get_to(out.out_channels);
  j.at("blocks").get_to(out.num_blocks);
  j.at("mixshift").get_to(out.mixshift);
  out.mlp_ratio = j.value("mlp_ratio", 4);
  out.drop_path_max = j.value("drop_path_max", 0.0);
  stage = std::move(out);
}

void to_json(json& j, const ModelSpec& spec) {
  j = json{{"name", spec.name},
           {"image_size", spec.image_size},
           {"in_channels", spec.in_channels},
           {"num_classes", spec.num_classes},
           {"stages", spec.stages}};
}

void from_json(const json& j, ModelSpec& spec) {
  ModelSpec out;
  out.name = j.value("name", std::string("custom"));
  out.image_size = j.value("image_size", 224);
  out.in_channels = j.value("in_channels", 3);
  j.at("num_classes").get_to(out.num_classes);
  j.at("stages").get_to(out.stages);
  out.validate();
  spec = std::move(out);
}

MixShiftSpec mix_shift_spec_from_string(const std::string& json_text) {
  return json::parse(json_text).get<MixShiftSpec>();
}

std::string to_json_string(const MixShiftSpec& spec, int indent) { return json(spec).dump(indent); }

ModelSpec model_spec_from_string(const std::string& json_text) {
  return json::parse(json_text).get<ModelSpec>();
}

std::string to_json_string(const ModelSpec& spec, int indent) { return json(spec).dump(indent); }

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr const char* kFormat = "msmlp-checkpoint";

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated header length");
  return v;
}

}  // namespace

void save_checkpoint(Model& model, std::ostream& out) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  auto params = model.named_parameters();
  for (const auto& np : params) {
    tensors.push_back({{"name", np.name}, {"shape", np.param->shape}, {"offset", offset}});
    offset += np.param->size() * sizeof(double);
  }
  const std::string header =
      json{{"format", kFormat}, {"version", 1}, {"spec", model.spec}, {"tensors", tensors}}.dump();
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& np : params) {
    out.write(reinterpret_cast<const char*>(np.param->value.data()),
              static_cast<std::streamsize>(np.param->size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

void save_checkpoint(Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(model, out);
}

Model load_checkpoint(std::istream& in) {
  const std::uint64_t len = read_u64(in);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  const json meta = json::parse(header);
  if (meta.value("format", std::string()) != kFormat) {
    throw std::runtime_error("checkpoint: not an msmlp checkpoint");
  }
  Model model = allocate_model(meta.at("spec").get<ModelSpec>());
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const auto& entry : meta.at("tensors")) {
    Parameter& p = model.parameter(entry.at("name").get<std::string>());
    if (entry.at("shape").get<std::vector<int>>() != p.shape) {
      throw std::runtime_error("checkpoint: shape mismatch for " + entry.at("name").get<std::string>());
    }
    const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    const std::size_t bytes = p.size() * sizeof(double);
    if (off + bytes > blob.size()) throw std::runtime_error("checkpoint: truncated tensor data");
    std::memcpy(p.value.data(), blob.data() + off, bytes);
  }
  return model;
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace msmlp
