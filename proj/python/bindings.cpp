#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

#include "msmlp/checks.hpp"
#include "msmlp/flops.hpp"
#include "msmlp/mixshift.hpp"
#include "msmlp/model.hpp"
#include "msmlp/serialize.hpp"
#include "msmlp/train.hpp"

namespace py = pybind11;
using namespace msmlp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor4 to_tensor(const Array& a) {
  if (a.ndim() != 4) throw std::invalid_argument("expected a 4-d (n, h, w, c) array");
  const Shape4 s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                 static_cast<int>(a.shape(3))};
  return Tensor4(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor4& t) {
  Array out({t.n(), t.h(), t.w(), t.c()});
  std::copy(t.ptr(), t.ptr() + t.size(), out.mutable_data());
  return out;
}

py::dict flops_dict(const FlopsReport& rep) {
  py::list rows;
  for (const auto& r : rep.rows) rows.append(py::make_tuple(r.name, r.macs, r.params));
  py::dict d;
  d["total_macs"] = rep.total_macs;
  d["total_params"] = rep.total_params;
  d["rows"] = rows;
  return d;
}

// Spec from its JSON text and seeded random parameters; keeps Python free of the parameter structs.
struct Operator {
  MixShiftSpec spec;
  MixShiftParams params;
};

Operator make_operator(const std::string& spec_json, int channels, std::uint64_t seed, bool identity) {
  Operator op{mix_shift_spec_from_string(spec_json), {}};
  if (identity) {
    op.params = identity_mix_shift_params(op.spec, channels);
  } else {
    Rng rng(seed);
    op.params = make_mix_shift_params(op.spec, channels, true);
    randomize(op.params, rng, 0.5, 0.1);
  }
  return op;
}

}  // namespace

PYBIND11_MODULE(_msmlp, m) {
  m.doc() = "Mix-shift MLP core: operator, models, counters and checks";

  py::register_exception<std::invalid_argument>(m, "InvalidArgument", PyExc_ValueError);

  m.def("preset_names", &preset_names);
  m.def("preset_json", [](const std::string& name) { return to_json_string(preset(name), 2); },
        py::arg("name"));
  m.def("count_flops",
        [](const std::string& name, int image_size) { return flops_dict(count_flops(preset(name), image_size)); },
        py::arg("preset"), py::arg("image_size") = 224);
  m.def("count_params", [](const std::string& name) { return flops_dict(count_params(preset(name))); },
        py::arg("preset"));

  m.def(
      "mix_shift",
      [](const Array& x, const std::string& spec_json, std::uint64_t seed, bool identity) {
        const Tensor4 t = to_tensor(x);
        const Operator op = make_operator(spec_json, t.c(), seed, identity);
        return to_array(mix_shift_forward(t, op.spec, op.params));
      },
      py::arg("x"), py::arg("spec_json"), py::arg("seed") = 0, py::arg("identity") = false,
      "Optimized operator with parameters drawn from `seed` (or identity parameters).");
  m.def(
      "mix_shift_reference",
      [](const Array& x, const std::string& spec_json, std::uint64_t seed, bool identity) {
        const Tensor4 t = to_tensor(x);
        const Operator op = make_operator(spec_json, t.c(), seed, identity);
        return to_array(mix_shift_forward_reference(t, op.spec, op.params));
      },
      py::arg("x"), py::arg("spec_json"), py::arg("seed") = 0, py::arg("identity") = false);

  m.def(
      "oracle",
      [](int cases, std::uint64_t seed) {
        const OracleSummary s = run_oracle_suite(cases, seed);
        return py::dict(py::arg("cases") = s.cases.size(), py::arg("max_deviation") = s.max_deviation,
                        py::arg("failures") = s.failures);
      },
      py::arg("cases") = 200, py::arg("seed") = 0);

  m.def(
      "gradcheck",
      [](std::uint64_t seed, int samples, const std::string& name) {
        const GradCheckReport prim = gradcheck_primitives(seed);
        const GradCheckReport model = gradcheck_model(preset(name), seed, samples);
        return py::dict(py::arg("primitive_max_rel_error") = prim.max_rel_error,
                        py::arg("model_max_rel_error") = model.max_rel_error,
                        py::arg("tensors") = model.entries.size());
      },
      py::arg("seed") = 0, py::arg("samples") = 10, py::arg("preset") = "tiny-desk");

  m.def(
      "forward",
      [](const std::string& name, const Array& images, std::uint64_t seed) {
        Model model = build_model(preset(name), seed);
        const Tensor4 x = to_tensor(images);
        Tensor4 logits;
        {
          py::gil_scoped_release release;
          logits = model_forward(model, x);
        }
        return to_array(logits);
      },
      py::arg("preset"), py::arg("images"), py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::string& name, int steps, std::uint64_t seed, double lr, int samples) {
        const ModelSpec spec = preset(name);
        SyntheticTask task;
        task.image_size = spec.image_size;
        task.in_channels = spec.in_channels;
        task.num_classes = spec.num_classes;
        task.seed = seed;
        task.samples = samples;
        const Dataset data = make_synthetic_task(task);
        Model model = build_model(spec, seed);
        TrainConfig cfg;
        cfg.steps = steps;
        cfg.seed = seed;
        cfg.lr = lr;
        TrainHistory h;
        {
          py::gil_scoped_release release;
          h = train_loop(model, data, cfg);
        }
        std::vector<double> losses;
        for (const auto& s : h.steps) losses.push_back(s.loss);
        return py::dict(py::arg("losses") = losses, py::arg("final_accuracy") = h.final_accuracy,
                        py::arg("final_loss") = h.final_loss);
      },
      py::arg("preset") = "tiny-desk", py::arg("steps") = 600, py::arg("seed") = 0, py::arg("lr") = 1e-3,
      py::arg("samples") = 64);
}
