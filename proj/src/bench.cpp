#include "msmlp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "msmlp/flops.hpp"
#include "msmlp/mixshift.hpp"
#include "msmlp/ops.hpp"
#include "msmlp/taxonomy.hpp"

namespace msmlp {

namespace {

constexpr int kGlobalMixTile = 784;

MixShiftSpec sweep_spec(std::vector<int> r) {
  MixShiftSpec spec;
  spec.d = {0, 1, 2, 3, 4};
  spec.r = std::move(r);
  spec.axis_mode = AxisMode::dual;
  spec.projection = Projection::none;
  return spec;
}

struct Prepared {
  std::function<void()> run;
  std::uint64_t macs = 0;
};

Prepared prepare(const std::string& op, int h, int w, int c, std::uint64_t seed) {
  Rng rng(seed);
  auto x = std::make_shared<Tensor4>(random_tensor({1, h, w, c}, rng));
  Prepared p;
  if (op == "mix-shift" || op == "axial-shift") {
    const MixShiftSpec spec =
        sweep_spec(op == "mix-shift" ? std::vector<int>{1, 1, 3, 5, 7} : std::vector<int>{1, 1, 1, 1, 1});
    auto params = std::make_shared<MixShiftParams>(make_mix_shift_params(spec, c));
    randomize(*params, rng, 0.02);
    p.macs = mix_shift_macs(spec, h, w, c);
    p.run = [x, params, spec] {
      Tensor4 y = mix_shift_forward(*x, spec, *params);
      (void)y;
    };
  } else if (op == "global-mix") {
    const int tile = std::min(kGlobalMixTile, h * w);
    auto weights = std::make_shared<std::vector<double>>(static_cast<std::size_t>(tile) * tile);
    fill_normal(*weights, rng, 0.0, 1.0 / tile);
    ComplexityQuery q;
    q.method = MixingMethod::global_mix;
    q.H = h;
    q.W = w;
    q.C = c;
    p.macs = complexity_formula(q);
    p.run = [x, weights, tile] {
      Tensor4 y = global_mix_tiled(*x, *weights, tile);
      (void)y;
    };
  } else if (op == "channel-mlp") {
    auto fc1 = std::make_shared<LinearWeights>(c, 4 * c);
    auto fc2 = std::make_shared<LinearWeights>(4 * c, c);
    fill_trunc_normal(fc1->weight.value, rng, 0.02);
    fill_trunc_normal(fc2->weight.value, rng, 0.02);
    p.macs = static_cast<std::uint64_t>(h) * w * 8ULL * c * c;
    p.run = [x, fc1, fc2] {
      Tensor4 y = channel_linear(gelu(channel_linear(*x, *fc1)), *fc2);
      (void)y;
    };
  } else {
    throw std::invalid_argument("unknown benchmark operator '" + op + "'");
  }
  return p;
}

// glibc serves blocks above 32 MiB with fresh mmaps, so only the largest maps
// would pay page faults on every call. Keeping everything on the heap makes
// all sizes measure the operator under the same allocator behavior.
void steady_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<std::string> bench_operators() {
  return {"mix-shift", "axial-shift", "global-mix", "channel-mlp"};
}

std::vector<ScalingRecord> run_scaling_sweep(const std::string& op,
                                             const std::vector<std::pair<int, int>>& sizes,
                                             int channels, int reps, std::uint64_t seed) {
  const auto ops = bench_operators();
  if (std::find(ops.begin(), ops.end(), op) == ops.end()) {
    throw std::invalid_argument("unknown benchmark operator '" + op + "'");
  }
  if (reps < 3) throw std::invalid_argument("run_scaling_sweep: reps must be >= 3");
  if (channels < 5) throw std::invalid_argument("run_scaling_sweep: need at least 5 channels");
  std::set<std::pair<int, int>> seen;
  for (const auto& s : sizes) {
    if (s.first < 1 || s.second < 1) throw std::invalid_argument("run_scaling_sweep: bad size");
    if (!seen.insert(s).second) throw std::invalid_argument("run_scaling_sweep: sizes must be distinct");
  }

  steady_allocator();
  std::vector<ScalingRecord> out;
  for (const auto& [h, w] : sizes) {
    Prepared p = prepare(op, h, w, channels, seed);
    p.run();  // warm-up
    std::vector<double> times;
    for (int k = 0; k < reps; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      p.run();
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::max(std::chrono::duration<double>(t1 - t0).count(),
                               std::numeric_limits<double>::min()));
    }
    out.push_back({op, h, w, channels, reps, median(times), p.macs});
  }
  return out;
}

FitResult fit_scaling(const std::vector<ScalingRecord>& records) {
  if (records.size() < 4) throw std::invalid_argument("fit_scaling: need at least 4 records");
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    if (!(r.median_s > 0.0)) throw std::invalid_argument("fit_scaling: times must be positive");
    xs.push_back(std::log(static_cast<double>(r.h) * r.w));
    ys.push_back(std::log(r.median_s));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("fit_scaling: all records have the same token count");
  FitResult f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double e = ys[k] - (f.intercept + f.slope * xs[k]);
    ss_res += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRecord>& records) {
  out << "op,h,w,c,reps,median_s,macs\n";
  const auto old = out.precision(17);
  for (const auto& r : records) {
    out << r.op << ',' << r.h << ',' << r.w << ',' << r.c << ',' << r.reps << ',' << r.median_s
        << ',' << r.macs << '\n';
  }
  out.precision(old);
}

std::vector<ScalingRecord> read_scaling_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "op,h,w,c,reps,median_s,macs") {
    throw std::runtime_error("scaling CSV: missing or unexpected header");
  }
  std::vector<ScalingRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 7) throw std::runtime_error("scaling CSV: expected 7 fields in '" + line + "'");
    ScalingRecord r;
    r.op = f[0];
    r.h = std::stoi(f[1]);
    r.w = std::stoi(f[2]);
    r.c = std::stoi(f[3]);
    r.reps = std::stoi(f[4]);
    r.median_s = std::stod(f[5]);
    r.macs = std::stoull(f[6]);
    out.push_back(r);
  }
  return out;
}

std::vector<std::pair<int, int>> parse_sizes(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw std::invalid_argument("size '" + item + "' is not HxW");
    std::size_t used_h = 0, used_w = 0;
    const int h = std::stoi(item.substr(0, x), &used_h);
    const int w = std::stoi(item.substr(x + 1), &used_w);
    if (used_h != x || used_w != item.size() - x - 1 || h < 1 || w < 1) {
      throw std::invalid_argument("size '" + item + "' is not HxW");
    }
    out.emplace_back(h, w);
  }
  if (out.empty()) throw std::invalid_argument("no sizes given");
  return out;
}

}  // namespace msmlp
