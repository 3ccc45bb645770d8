#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace msmlp {

struct ScalingRecord {
  std::string op;
  int h = 0;
  int w = 0;
  int c = 0;
  int reps = 0;
  double median_s = 0.0;
  std::uint64_t macs = 0;

  bool operator==(const ScalingRecord&) const = default;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Operators the sweep knows: mix-shift (first-stage Tiny configuration,
/// dual branch), axial-shift (same groups, r = 1), global-mix (dense token
/// mixing), channel-mlp (C -> 4C -> C).
std::vector<std::string> bench_operators();

/// One warm-up call, then the median wall time of `reps` timed calls per size.
/// Inputs come from a fixed seed. Throws std::invalid_argument for unknown
/// operators, reps < 3, or repeated sizes. On glibc the first call switches
/// the process allocator to heap-only mode (no per-block mmap) for the rest of
/// the process so that large maps are not timed with page-fault overhead.
std::vector<ScalingRecord> run_scaling_sweep(const std::string& op,
                                             const std::vector<std::pair<int, int>>& sizes,
                                             int channels, int reps, std::uint64_t seed = 0);

/// Least squares of log(median_s) on log(h*w). Needs >= 4 records and at
/// least two distinct token counts.
FitResult fit_scaling(const std::vector<ScalingRecord>& records);

/// Header `op,h,w,c,reps,median_s,macs`; times printed with 17 significant digits.
void write_scaling_csv(std::ostream& out, const std::vector<ScalingRecord>& records);
std::vector<ScalingRecord> read_scaling_csv(std::istream& in);

/// "28x28,56x56" -> {{28,28},{56,56}}.
std::vector<std::pair<int, int>> parse_sizes(const std::string& text);

}  // namespace msmlp
