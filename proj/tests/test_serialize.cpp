#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "msmlp/serialize.hpp"

using namespace msmlp;

TEST(Json, ModelSpecRoundTrip) {
  for (const auto& name : preset_names()) {
    const ModelSpec spec = preset(name);
    EXPECT_EQ(model_spec_from_string(to_json_string(spec)), spec) << name;
    EXPECT_EQ(model_spec_from_string(to_json_string(spec, 2)), spec) << name;
  }
}

TEST(Json, MixShiftFieldsAreReadable) {
  const MixShiftSpec s = mix_shift_spec_from_string(
      R"({"S": 3, "d": [0, 1, -2], "r": [1, 3, 5], "axis_mode": "horizontal", "conv_type": "full", "projection": "post"})");
  EXPECT_EQ(s.d, (std::vector<int>{0, 1, -2}));
  EXPECT_EQ(s.axis_mode, AxisMode::horizontal);
  EXPECT_EQ(s.conv_type, ConvType::full);
  EXPECT_EQ(s.projection, Projection::post);
}

TEST(Json, Rejects) {
  EXPECT_THROW(mix_shift_spec_from_string(R"({"S": 2, "d": [0], "r": [1]})"), std::invalid_argument);
  EXPECT_ANY_THROW(mix_shift_spec_from_string(R"({"d": [0], "r": [1], "axis_mode": "diagonal"})"));
  EXPECT_ANY_THROW(mix_shift_spec_from_string("not json"));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Model m = build_model(preset("tiny-desk"), 21);
  std::stringstream ss;
  save_checkpoint(m, ss);
  Model back = load_checkpoint(ss);
  EXPECT_EQ(back.spec, m.spec);
  auto a = m.named_parameters(), b = back.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].name, b[k].name);
    EXPECT_TRUE(bitwise_equal(a[k].param->value, b[k].param->value)) << a[k].name;
  }
  Rng rng(1);
  const Tensor4 x = random_tensor({2, 32, 32, 3}, rng);
  EXPECT_TRUE(bitwise_equal(model_forward(m, x).data(), model_forward(back, x).data()));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "msmlp_test_ckpt.bin").string();
  Model m = build_model(preset("tiny-desk"), 3);
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);
  EXPECT_TRUE(bitwise_equal(m.parameter("head.weight").value, back.parameter("head.weight").value));
  std::remove(path.c_str());
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

TEST(Checkpoint, RejectsGarbage) {
  std::stringstream empty;
  EXPECT_THROW(load_checkpoint(empty), std::runtime_error);
  Model m = build_model(preset("tiny-desk"), 3);
  std::stringstream ss;
  save_checkpoint(m, ss);
  std::string blob = ss.str();
  blob.resize(blob.size() - 16);
  std::stringstream cut(blob);
  EXPECT_THROW(load_checkpoint(cut), std::runtime_error);
}
