#pragma once

// JSON forms of the configuration types and the checkpoint file format.
//
// Checkpoint layout (all integers little-endian):
//   bytes 0..7   uint64 length L of the JSON header
//   bytes 8..8+L UTF-8 JSON: {"format": "msmlp-checkpoint", "version": 1,
//                "spec": <ModelSpec>, "tensors": [{"name", "shape", "offset"}]}
//   remainder    float64 values; each tensor starts at its byte offset
//                relative to the end of the header.

#include <iosfwd>
#include <string>

#include "json.hpp"
#include "msmlp/mixshift.hpp"
#include "msmlp/model.hpp"

namespace msmlp {

void to_json(nlohmann::json& j, const MixShiftSpec& spec);
void from_json(const nlohmann::json& j, MixShiftSpec& spec);
void to_json(nlohmann::json& j, const StageSpec& stage);
void from_json(const nlohmann::json& j, StageSpec& stage);
void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

MixShiftSpec mix_shift_spec_from_string(const std::string& json_text);
std::string to_json_string(const MixShiftSpec& spec, int indent = -1);
ModelSpec model_spec_from_string(const std::string& json_text);
std::string to_json_string(const ModelSpec& spec, int indent = -1);

void save_checkpoint(Model& model, std::ostream& out);
void save_checkpoint(Model& model, const std::string& path);
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::string& path);

}  // namespace msmlp
