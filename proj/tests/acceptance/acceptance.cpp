// Acceptance run: one PASS/FAIL line per criterion.
//
//   msmlp_acceptance               every criterion
//   msmlp_acceptance --criterion 6 just one
//
// Exit status is 0 only when every requested line is PASS.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msmlp/bench.hpp"
#include "msmlp/checks.hpp"
#include "msmlp/flops.hpp"
#include "msmlp/model.hpp"
#include "msmlp/taxonomy.hpp"
#include "msmlp/train.hpp"

#ifndef MSMLP_CLI_PATH
#define MSMLP_CLI_PATH ""
#endif

using namespace msmlp;

namespace {

int g_failures = 0;

void report(const std::string& id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << id << "  " << detail << std::endl;
  if (!ok) ++g_failures;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

double rel_dev(double got, double target) { return std::abs(got - target) / target; }

// ---------------------------------------------------------------------------

void c1_params() {
  const struct { const char* name; double target; } rows[] = {
      {"ms-mlp-t", 28e6}, {"ms-mlp-s", 50e6}, {"ms-mlp-b", 88e6}};
  for (const auto& r : rows) {
    const double p = static_cast<double>(count_params(preset(r.name)).total_params);
    const double dev = rel_dev(p, r.target);
    report(std::string("c1 params ") + r.name, dev <= 0.05,
           fmt(p / 1e6) + "M vs " + fmt(r.target / 1e6) + "M, deviation " + fmt(100 * dev, 3) + "% (tol 5%)");
  }
}

void c2_flops() {
  const struct { const char* name; double target; } rows[] = {
      {"ms-mlp-t", 4.9e9}, {"ms-mlp-s", 9.0e9}, {"ms-mlp-b", 16.1e9}, {"ms-mlp-t-lite", 4.3e9}};
  for (const auto& r : rows) {
    const ModelSpec spec = preset(r.name);
    const double f = static_cast<double>(count_flops(spec, 224).total_macs);
    FlopsOptions single;
    single.axis_override = AxisMode::horizontal;
    const double fs = static_cast<double>(count_flops(spec, 224, single).total_macs);
    const double dev = rel_dev(f, r.target);
    report(std::string("c2 flops ") + r.name, dev <= 0.10,
           fmt(f / 1e9) + "G vs " + fmt(r.target / 1e9) + "G, deviation " + fmt(100 * dev, 3) +
               "% (tol 10%); single-axis convention " + fmt(fs / 1e9) + "G");
  }
}

void c3_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const OracleSummary s = run_oracle_suite(200, 2024, 1e-10);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report("c3 oracle", s.cases.size() >= 200 && s.failures == 0 && s.max_deviation <= 1e-10,
         std::to_string(s.cases.size()) + " cases, max deviation " + fmt(s.max_deviation, 3) +
             " (tol 1e-10), " + fmt(secs, 3) + " s");
}

void c4_gradcheck() {
  double prim_max = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) prim_max = std::max(prim_max, gradcheck_primitives(seed).max_rel_error);
  report("c4 gradcheck primitives", prim_max < 1e-6, "max rel error " + fmt(prim_max, 3) + " (tol 1e-6)");

  const GradCheckReport m = gradcheck_model(preset("tiny-desk"), 0, 10, 1e-5);
  // every tensor sampled at 10 scalars, or all of them when it is smaller
  Model sizes = allocate_model(preset("tiny-desk"));
  const auto named = sizes.named_parameters();
  bool coverage = m.entries.size() == named.size();
  std::size_t total = 0;
  for (std::size_t k = 0; coverage && k < named.size(); ++k) {
    coverage = m.entries[k].checked >= std::min<std::size_t>(10, named[k].param->size());
    total += m.entries[k].checked;
  }
  report("c4 gradcheck tiny-desk", coverage && m.max_rel_error < 1e-5,
         std::to_string(m.entries.size()) + " tensors, " + std::to_string(total) +
             " scalars (min(10, size) per tensor), max rel error " + fmt(m.max_rel_error, 3) + " (tol 1e-5)");
}

void c5_axial_reduction() {
  Rng rng(5);
  const std::vector<int> d{0, 1, 2, 3, 4};
  bool ok = true;
  double worst = 0.0;
  for (AxisMode mode : {AxisMode::horizontal, AxisMode::vertical, AxisMode::dual}) {
    for (Projection proj : {Projection::none, Projection::post, Projection::pre_post}) {
      MixShiftSpec s{d, {1, 1, 1, 1, 1}, mode, ConvType::depthwise, proj};
      const MixShiftParams p = identity_mix_shift_params(s, 96);
      const Tensor4 x = random_tensor({2, 14, 14, 96}, rng);
      Tensor4 expected(x.shape());
      for (Axis axis : s.branch_axes()) expected += multi_shift(x, p.widths, d, axis);
      const Tensor4 y = mix_shift_forward(x, s, p);
      worst = std::max(worst, max_abs_diff(y.data(), expected.data()));
      ok = ok && bitwise_equal(y.data(), expected.data());
    }
  }
  report("c5 axial-shift reduction", ok, "max deviation " + fmt(worst, 3) + " (exact)");
}

void c6_scaling() {
  const std::vector<std::pair<int, int>> sizes = {{28, 28}, {56, 56}, {112, 112}, {224, 224}};
  const auto ms = run_scaling_sweep("mix-shift", sizes, 96, 5);
  const FitResult fm = fit_scaling(ms);
  std::string times;
  for (const auto& r : ms) times += " " + fmt(r.median_s, 3);
  report("c6 scaling mix-shift", fm.slope >= 0.85 && fm.slope <= 1.25,
         "slope " + fmt(fm.slope) + " in [0.85, 1.25], R^2 " + fmt(fm.r2) + ", medians" + times + " s");
  const auto gm = run_scaling_sweep("global-mix", sizes, 96, 3);
  const FitResult fg = fit_scaling(gm);
  times.clear();
  for (const auto& r : gm) times += " " + fmt(r.median_s, 3);
  report("c6 scaling global-mix", fg.slope >= 1.7,
         "slope " + fmt(fg.slope) + " >= 1.7, R^2 " + fmt(fg.r2) + ", medians" + times + " s");
}

void c7_training() {
  const ModelSpec spec = preset("tiny-desk");
  SyntheticTask task;
  task.samples = 64;
  const Dataset data = make_synthetic_task(task);

  // gradient flow after a single backward pass
  Model probe = build_model(spec, 0);
  probe.zero_grad();
  {
    Tape tape;
    const std::vector<int> idx = {0, 1, 2, 3, 4, 5, 6, 7};
    Var logits = model_forward(probe, tape.constant(data.batch_images(idx)), false, nullptr);
    const LossResult ce = cross_entropy(logits.value(), data.batch_labels(idx));
    tape.backward(logits, ce.grad);
  }
  int dead = 0, tensors = 0;
  std::string first_dead;
  for (auto& np : probe.named_parameters()) {
    ++tensors;
    bool any = false;
    for (double g : np.param->grad) any = any || g != 0.0;
    if (!any && dead++ == 0) first_dead = np.name;
  }
  report("c7 gradient flow", dead == 0,
         std::to_string(tensors - dead) + "/" + std::to_string(tensors) + " tensors with nonzero gradient" +
             (dead ? ", first dead: " + first_dead : ""));

  Model model = build_model(spec, 0);
  TrainConfig cfg;
  cfg.steps = 600;
  const auto t0 = std::chrono::steady_clock::now();
  bool finite = true;
  TrainHistory h;
  try {
    h = train_loop(model, data, cfg);
  } catch (const std::runtime_error& e) {
    finite = false;
    std::cout << "  " << e.what() << '\n';
  }
  for (const auto& s : h.steps) finite = finite && std::isfinite(s.loss);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report("c7 overfit tiny-desk", finite && h.final_accuracy >= 0.99,
         std::to_string(cfg.steps) + " steps, train accuracy " + fmt(100 * h.final_accuracy) + "% (>= 99%), final loss " +
             fmt(h.final_loss) + ", all losses finite: " + (finite ? "yes" : "no") + ", " + fmt(secs, 3) + " s");
}

// Centers of the nonzero support of each group after an impulse at j0 (or i0).
std::vector<int> impulse_centers(const MixShiftSpec& spec, Axis axis) {
  MixShiftSpec one = spec;
  one.axis_mode = axis == Axis::horizontal ? AxisMode::horizontal : AxisMode::vertical;
  one.projection = Projection::none;
  const int C = one.S();  // one channel per group
  MixShiftParams p = make_mix_shift_params(one, C, false);
  for (auto& m : p.branches[0].mixers)
    std::visit([](auto& k) { std::fill(k.weight.value.begin(), k.weight.value.end(), 1.0); }, m);
  const int L = 48, mid = 24;
  Tensor4 x({1, L, L, C});
  for (int c = 0; c < C; ++c) x.at(0, mid, mid, c) = 1.0;
  const Tensor4 y = mix_shift_forward(x, one, p);
  std::vector<int> offsets;
  for (int c = 0; c < C; ++c) {
    int lo = L, hi = -1;
    for (int t = 0; t < L; ++t) {
      const double v = axis == Axis::horizontal ? y.at(0, mid, t, c) : y.at(0, t, mid, c);
      if (v != 0.0) lo = std::min(lo, t), hi = std::max(hi, t);
    }
    offsets.push_back(hi < 0 ? -999 : mid - (lo + hi) / 2);
  }
  return offsets;
}

void c8_ablation() {
  const char* names[] = {"ablation-local", "ablation-global", "ablation-isolated", "ablation-regional"};
  for (const char* name : names) {
    bool ok = true;
    std::string detail;
    try {
      Model m = build_model(preset(name), 0);
      Rng rng(8);
      Tape tape;
      Var logits = model_forward(m, tape.constant(random_tensor({1, 224, 224, 3}, rng)), true, &rng);
      Tensor4 seed(logits.shape(), 1.0);
      tape.backward(logits, seed);
      double gsum = 0.0;
      for (auto& np : m.named_parameters())
        for (double g : np.param->grad) gsum += std::abs(g);
      ok = logits.shape() == Shape4{1, 1, 1, 1000} && std::isfinite(gsum) && gsum > 0.0;
      detail = "logits " + logits.shape().str() + ", |grad| sum " + fmt(gsum, 3) + ", " +
               std::to_string(count_params(preset(name)).total_params) + " params";
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    report(std::string("c8 forward/backward ") + name, ok, detail);
  }
  const MixShiftSpec iso = preset("ablation-isolated").stages[0].mixshift;
  const std::vector<int> want = {0, 2, 5, 10, 17};
  for (Axis axis : {Axis::horizontal, Axis::vertical}) {
    const std::vector<int> got = impulse_centers(iso, axis);
    std::string s;
    for (int v : got) s += (s.empty() ? "" : ",") + std::to_string(v);
    report(std::string("c8 impulse centers ") + to_string(axis), got == want, "[" + s + "] vs [0,2,5,10,17]");
  }
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

// Runs the CLI twice with identical arguments and compares stdout and any CSV.
bool cli_twice(const std::string& args, bool with_csv, std::string& why) {
  const std::string cli = MSMLP_CLI_PATH;
  if (cli.empty() || !std::filesystem::exists(cli)) {
    why = "CLI binary not found";
    return false;
  }
  const auto dir = std::filesystem::temp_directory_path();
  std::string outs[2], csvs[2];
  for (int k = 0; k < 2; ++k) {
    const std::string out = (dir / ("msmlp_acc_out" + std::to_string(k))).string();
    const std::string csv = (dir / ("msmlp_acc_csv" + std::to_string(k))).string();
    const std::string cmd =
        "\"" + cli + "\" " + args + (with_csv ? " --csv \"" + csv + "\"" : "") + " > \"" + out + "\"";
    if (std::system(cmd.c_str()) != 0) {
      why = "command failed: " + cmd;
      return false;
    }
    outs[k] = slurp(out);
    csvs[k] = with_csv ? slurp(csv) : "";
    std::filesystem::remove(out);
    if (with_csv) std::filesystem::remove(csv);
  }
  if (outs[0] != outs[1] || csvs[0] != csvs[1]) {
    why = "outputs differ";
    return false;
  }
  return !outs[0].empty();
}

void c9_determinism() {
  // in-process
  bool ok = true;
  {
    Model a = build_model(preset("ms-mlp-t"), 42), b = build_model(preset("ms-mlp-t"), 42);
    auto pa = a.named_parameters(), pb = b.named_parameters();
    for (std::size_t k = 0; k < pa.size(); ++k) ok = ok && bitwise_equal(pa[k].param->value, pb[k].param->value);
    report("c9 deterministic build", ok, std::to_string(pa.size()) + " tensors of ms-mlp-t");
  }
  {
    Model m = build_model(preset("tiny-desk"), 3);
    Rng r1(4), r2(4);
    const Tensor4 x1 = random_tensor({4, 32, 32, 3}, r1), x2 = random_tensor({4, 32, 32, 3}, r2);
    ok = bitwise_equal(model_forward(m, x1).data(), model_forward(m, x2).data());
    report("c9 deterministic forward", ok, "tiny-desk logits bitwise equal");
  }
  {
    const GradCheckReport a = gradcheck_model(preset("tiny-desk"), 5, 4);
    const GradCheckReport b = gradcheck_model(preset("tiny-desk"), 5, 4);
    ok = a.entries.size() == b.entries.size();
    for (std::size_t k = 0; ok && k < a.entries.size(); ++k)
      ok = a.entries[k].max_rel_error == b.entries[k].max_rel_error && a.entries[k].checked == b.entries[k].checked;
    report("c9 deterministic gradcheck", ok, "per-tensor errors bitwise equal");
  }
  {
    SyntheticTask task;
    task.samples = 32;
    const Dataset data = make_synthetic_task(task);
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.seed = 9;
    Model a = build_model(preset("tiny-desk"), 9), b = build_model(preset("tiny-desk"), 9);
    const TrainHistory ha = train_loop(a, data, cfg), hb = train_loop(b, data, cfg);
    ok = ha.steps.size() == hb.steps.size() && ha.final_loss == hb.final_loss;
    for (std::size_t k = 0; ok && k < ha.steps.size(); ++k) ok = ha.steps[k].loss == hb.steps[k].loss;
    report("c9 deterministic training", ok, "20-step loss curves bitwise equal");
  }
  // separate processes
  std::string why;
  ok = cli_twice("--json gradcheck --seed 7 --samples 3", false, why);
  report("c9 process gradcheck", ok, ok ? "two invocations, identical output" : why);
  ok = cli_twice("--json train --steps 15 --samples 32 --seed 2", true, why);
  report("c9 process training", ok, ok ? "two invocations, identical output and CSV" : why);
  ok = cli_twice("--json oracle --cases 30 --seed 6", false, why);
  report("c9 process oracle", ok, ok ? "two invocations, identical output" : why);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<void()>> criteria = {c1_params,  c2_flops,    c3_oracle,
                                                       c4_gradcheck, c5_axial_reduction, c6_scaling,
                                                       c7_training, c8_ablation, c9_determinism};
  for (int k = 1; k <= 9; ++k) {
    if (only != 0 && only != k) continue;
    try {
      criteria[k - 1]();
    } catch (const std::exception& e) {
      report("c" + std::to_string(k), false, std::string("exception: ") + e.what());
    }
  }
  return g_failures == 0 ? 0 : 1;
}
