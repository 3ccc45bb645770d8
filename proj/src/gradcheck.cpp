#include "msmlp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msmlp {

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double up = f(point);
    point[i] = saved - step;
    const double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

double finite_diff_entry(std::vector<double>& values, std::size_t index, double step,
                         const std::function<double()>& loss) {
  const double saved = values.at(index);
  values[index] = saved + step;
  const double up = loss();
  values[index] = saved - step;
  const double down = loss();
  values[index] = saved;
  return (up - down) / (2.0 * step);
}

}  // namespace msmlp
