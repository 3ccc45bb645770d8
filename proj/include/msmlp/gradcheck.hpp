#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "msmlp/tensor.hpp"

namespace msmlp {

/// Central differences: (f(theta + step*e_i) - f(theta - step*e_i)) / (2*step).
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta, double step);

/// |a - b| / max(|a|, |b|, floor). The floor keeps entries whose true
/// gradient is ~0 from turning round-off into huge relative errors.
inline constexpr double kRelErrorFloor = 1e-6;
double relative_error(double analytic, double numeric, double floor = kRelErrorFloor);

/// Central difference of `loss` with respect to one entry of a parameter,
/// restoring the entry afterwards.
double finite_diff_entry(std::vector<double>& values, std::size_t index, double step,
                         const std::function<double()>& loss);

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

}  // namespace msmlp
