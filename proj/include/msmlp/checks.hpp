#pragma once

// Self-checks shared by the CLI, the acceptance suite and the Python module:
// randomized optimized-vs-reference comparisons of the mix-shift operator and
// finite-difference gradient checks of the primitives and of whole models.

#include <cstdint>
#include <string>
#include <vector>

#include "msmlp/gradcheck.hpp"
#include "msmlp/mixshift.hpp"
#include "msmlp/model.hpp"

namespace msmlp {

struct OracleCase {
  Shape4 shape;
  MixShiftSpec spec;
  double max_deviation = 0.0;
};

struct OracleSummary {
  std::vector<OracleCase> cases;
  double max_deviation = 0.0;
  int failures = 0;  // cases above the tolerance
};

/// Random valid spec: 1 <= S <= 6, offsets in [-6, 6] (group 0 fixed at 0),
/// odd regions up to 7, random axis mode, conv type and projection.
MixShiftSpec random_mix_shift_spec(Rng& rng);

/// `count` random (shape, spec, params, input) cases; each compares
/// both mix_shift_forward paths (direct and taped) against
/// mix_shift_forward_reference elementwise.
OracleSummary run_oracle_suite(int count, std::uint64_t seed, double tol = 1e-10);

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed(double tol) const { return max_rel_error < tol; }
};

/// Input and parameter gradients of every differentiable primitive (and of
/// the mix-shift operator in each mode) against central differences.
GradCheckReport gradcheck_primitives(std::uint64_t seed, double step = 1e-5);

/// Tape gradients of the loss sum(R * logits) for a random batch against
/// central differences at `per_tensor` random entries of every parameter
/// tensor (all entries when the tensor is smaller). Weights are drawn with
/// std `weight_std` so that every path carries a measurable gradient.
GradCheckReport gradcheck_model(const ModelSpec& spec, std::uint64_t seed, int per_tensor = 10,
                                double step = 1e-5, double weight_std = 0.2, int batch = 2);

}  // namespace msmlp
