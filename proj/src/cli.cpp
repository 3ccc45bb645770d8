#include "msmlp/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "msmlp/bench.hpp"
#include "msmlp/checks.hpp"
#include "msmlp/flops.hpp"
#include "msmlp/model.hpp"
#include "msmlp/ops.hpp"
#include "msmlp/serialize.hpp"
#include "msmlp/train.hpp"

namespace msmlp {

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

// Thrown for bad flag values discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ModelSpec preset_or_usage(const std::string& name) {
  try {
    return preset(name);
  } catch (const std::out_of_range&) {
    throw UsageError("unknown preset '" + name + "' (see `msmlp presets`)");
  }
}

std::ofstream open_or_usage(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw UsageError("cannot open '" + path + "' for writing");
  return f;
}

std::string giga(std::uint64_t v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << static_cast<double>(v) / 1e9 << "G";
  return s.str();
}

std::string mega(std::uint64_t v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << static_cast<double>(v) / 1e6 << "M";
  return s.str();
}

struct Options {
  bool json = false;
  int threads = 1;
  std::string preset_name = "tiny-desk";
  int image_size = 0;
  std::string csv;
  std::uint64_t seed = 0;
  double tol = 1e-5;
  int cases = 200;
  int samples = 10;
  std::string op = "mix-shift";
  std::string sizes = "28x28,56x56,112x112,224x224";
  int channels = 96;
  int reps = 5;
  int steps = 600;
  double lr = 1e-3;
  int train_samples = 64;
  int batch = 16;
};

int run_flops(const Options& o, std::ostream& out) {
  const ModelSpec spec = preset_or_usage(o.preset_name);
  const int size = o.image_size > 0 ? o.image_size : spec.image_size;
  const FlopsReport rep = count_flops(spec, size);
  FlopsOptions single;
  single.axis_override = AxisMode::horizontal;
  FlopsOptions body_only;
  body_only.include_head = false;
  body_only.include_patch_embed = false;
  const std::uint64_t single_macs = count_flops(spec, size, single).total_macs;
  const std::uint64_t body_macs = count_flops(spec, size, body_only).total_macs;

  if (!o.csv.empty()) {
    std::ofstream f = open_or_usage(o.csv);
    f << "layer,name,macs,params\n";
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
      f << k << ',' << rep.rows[k].name << ',' << rep.rows[k].macs << ',' << rep.rows[k].params << '\n';
    }
  }
  if (o.json) {
    json j = {{"preset", spec.name},
              {"image_size", size},
              {"total_macs", rep.total_macs},
              {"total_params", rep.total_params},
              {"conventions",
               {{"mac_equals_flop", true},
                {"single_axis_macs", single_macs},
                {"without_embed_and_head_macs", body_macs}}}};
    out << j.dump(2) << '\n';
  } else {
    out << spec.name << " @ " << size << "x" << size << '\n'
        << "  params " << mega(rep.total_params) << " (" << rep.total_params << ")\n"
        << "  MACs   " << giga(rep.total_macs) << " (" << rep.total_macs << "), 1 FLOP = 1 MAC\n"
        << "  single-axis mixing:          " << giga(single_macs) << '\n'
        << "  without patch embed / head:  " << giga(body_macs) << '\n';
  }
  return kOk;
}

int run_params(const Options& o, std::ostream& out) {
  const ModelSpec spec = preset_or_usage(o.preset_name);
  const FlopsReport rep = count_params(spec);
  if (o.json) {
    out << json{{"preset", spec.name}, {"total_params", rep.total_params}}.dump(2) << '\n';
  } else {
    out << spec.name << " params " << mega(rep.total_params) << " (" << rep.total_params << ")\n";
  }
  return kOk;
}

int run_gradcheck(const Options& o, std::ostream& out) {
  const ModelSpec spec = preset_or_usage(o.preset_name);
  const double primitive_tol = std::min(o.tol, 1e-6);
  const GradCheckReport prim = gradcheck_primitives(o.seed);
  const GradCheckReport model = gradcheck_model(spec, o.seed, o.samples);
  const bool ok = prim.passed(primitive_tol) && model.passed(o.tol);
  if (o.json) {
    json entries = json::array();
    for (const auto* rep : {&prim, &model}) {
      for (const auto& e : rep->entries) {
        entries.push_back({{"name", e.name}, {"checked", e.checked}, {"max_rel_error", e.max_rel_error}});
      }
    }
    out << json{{"seed", o.seed},
                {"primitive_tol", primitive_tol},
                {"model_tol", o.tol},
                {"primitive_max_rel_error", prim.max_rel_error},
                {"model_max_rel_error", model.max_rel_error},
                {"passed", ok},
                {"entries", entries}}
               .dump(2)
        << '\n';
  } else {
    out << std::setprecision(3) << "primitives: " << prim.entries.size() << " tensors, max rel error "
        << prim.max_rel_error << " (tol " << primitive_tol << ")\n"
        << spec.name << ": " << model.entries.size() << " tensors, max rel error " << model.max_rel_error
        << " (tol " << o.tol << ")\n"
        << (ok ? "PASS" : "FAIL") << '\n';
  }
  return ok ? kOk : kCheckFailed;
}

int run_oracle(const Options& o, std::ostream& out) {
  const double tol = 1e-10;
  const OracleSummary s = run_oracle_suite(o.cases, o.seed, tol);
  if (o.json) {
    out << json{{"cases", s.cases.size()},
                {"seed", o.seed},
                {"tol", tol},
                {"max_deviation", s.max_deviation},
                {"failures", s.failures}}
               .dump(2)
        << '\n';
  } else {
    out << s.cases.size() << " cases, max deviation " << std::setprecision(3) << s.max_deviation
        << ", failures " << s.failures << '\n'
        << (s.failures == 0 ? "PASS" : "FAIL") << '\n';
  }
  return s.failures == 0 ? kOk : kCheckFailed;
}

int run_bench(const Options& o, std::ostream& out) {
  std::vector<std::pair<int, int>> sizes;
  try {
    sizes = parse_sizes(o.sizes);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  std::vector<ScalingRecord> records;
  try {
    records = run_scaling_sweep(o.op, sizes, o.channels, o.reps, o.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!o.csv.empty()) {
    std::ofstream f = open_or_usage(o.csv);
    write_scaling_csv(f, records);
  }
  json j = {{"op", o.op}, {"threads", num_threads()}, {"records", records.size()}};
  if (records.size() >= 4) {
    const FitResult fit = fit_scaling(records);
    j["slope"] = fit.slope;
    j["intercept"] = fit.intercept;
    j["r2"] = fit.r2;
  }
  if (o.json) {
    out << j.dump(2) << '\n';
  } else {
    out << "threads " << num_threads() << '\n';
    write_scaling_csv(out, records);
    if (j.contains("slope")) {
      out << "log-log slope " << std::setprecision(4) << j["slope"].get<double>() << ", R^2 "
          << j["r2"].get<double>() << '\n';
    }
  }
  return kOk;
}

int run_train(const Options& o, std::ostream& out) {
  ModelSpec spec = preset_or_usage(o.preset_name);
  SyntheticTask task;
  task.image_size = spec.image_size;
  task.in_channels = spec.in_channels;
  task.num_classes = spec.num_classes;
  task.seed = o.seed;
  task.samples = o.train_samples;
  if (task.num_classes != 8) throw UsageError("train: the synthetic task needs a preset with 8 classes");
  const Dataset data = make_synthetic_task(task);
  Model model = build_model(spec, o.seed);
  TrainConfig cfg;
  cfg.steps = o.steps;
  cfg.lr = o.lr;
  cfg.seed = o.seed;
  cfg.batch_size = o.batch;
  const TrainHistory h = train_loop(model, data, cfg);
  if (!o.csv.empty()) {
    std::ofstream f = open_or_usage(o.csv);
    write_history_csv(f, h);
  }
  if (o.json) {
    out << json{{"preset", spec.name},
                {"steps", o.steps},
                {"final_loss", h.final_loss},
                {"final_accuracy", h.final_accuracy}}
               .dump(2)
        << '\n';
  } else {
    out << spec.name << ": " << o.steps << " steps, final loss " << std::setprecision(4) << h.final_loss
        << ", train accuracy " << h.final_accuracy << '\n';
  }
  return kOk;
}

int run_presets(const Options& o, std::ostream& out) {
  if (o.json) {
    json j = json::array();
    for (const auto& name : preset_names()) j.push_back(json(preset(name)));
    out << j.dump(2) << '\n';
  } else {
    for (const auto& name : preset_names()) out << name << '\n';
  }
  return kOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mix-shift MLP toolkit: FLOPs reports, oracle and gradient checks, scaling sweeps, training"};
  app.require_subcommand(1, 1);
  Options o;
  app.add_flag("--json", o.json, "print a JSON summary");
  app.add_option("--threads", o.threads, "worker threads for the data-parallel loops")->check(CLI::PositiveNumber);

  auto* flops = app.add_subcommand("flops", "per-layer MACs and parameters of a preset");
  flops->add_option("--preset", o.preset_name)->required();
  flops->add_option("--image-size", o.image_size)->check(CLI::PositiveNumber);
  flops->add_option("--csv", o.csv, "write layer,name,macs,params rows");
  flops->add_flag("--json", o.json);

  auto* params = app.add_subcommand("params", "parameter count of a preset");
  params->add_option("--preset", o.preset_name)->required();
  params->add_flag("--json", o.json);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--seed", o.seed);
  gradcheck->add_option("--tol", o.tol, "relative error bound for the model check")->check(CLI::PositiveNumber);
  gradcheck->add_option("--samples", o.samples, "entries checked per parameter tensor")->check(CLI::PositiveNumber);
  gradcheck->add_option("--preset", o.preset_name);
  gradcheck->add_flag("--json", o.json);

  auto* oracle = app.add_subcommand("oracle", "optimized operator vs naive reference");
  oracle->add_option("--cases", o.cases)->check(CLI::PositiveNumber);
  oracle->add_option("--seed", o.seed);
  oracle->add_flag("--json", o.json);

  auto* bench = app.add_subcommand("bench", "wall-time scaling sweep of one operator");
  bench->add_option("--op", o.op)->required();
  bench->add_option("--sizes", o.sizes, "comma-separated HxW list");
  bench->add_option("--channels", o.channels);
  bench->add_option("--reps", o.reps);
  bench->add_option("--csv", o.csv, "write op,h,w,c,reps,median_s,macs rows");
  bench->add_option("--seed", o.seed);
  bench->add_flag("--json", o.json);

  auto* train = app.add_subcommand("train", "fit a preset to the synthetic task");
  train->add_option("--preset", o.preset_name);
  train->add_option("--steps", o.steps)->check(CLI::NonNegativeNumber);
  train->add_option("--seed", o.seed);
  train->add_option("--lr", o.lr)->check(CLI::NonNegativeNumber);
  train->add_option("--samples", o.train_samples)->check(CLI::PositiveNumber);
  train->add_option("--batch", o.batch)->check(CLI::PositiveNumber);
  train->add_option("--csv", o.csv, "write step,loss,acc rows");
  train->add_flag("--json", o.json);

  auto* presets = app.add_subcommand("presets", "list the named configurations");
  presets->add_flag("--json", o.json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  const int saved_threads = num_threads();
  set_num_threads(o.threads);
  int code = kOk;
  try {
    if (flops->parsed()) code = run_flops(o, out);
    else if (params->parsed()) code = run_params(o, out);
    else if (gradcheck->parsed()) code = run_gradcheck(o, out);
    else if (oracle->parsed()) code = run_oracle(o, out);
    else if (bench->parsed()) code = run_bench(o, out);
    else if (train->parsed()) code = run_train(o, out);
    else if (presets->parsed()) code = run_presets(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    code = kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kCheckFailed;
  }
  set_num_threads(saved_threads);
  return code;
}

int cli_main(int argc, const char* const* argv) { return cli_main(argc, argv, std::cout, std::cerr); }

}  // namespace msmlp
