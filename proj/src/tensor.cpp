#include "msmlp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace msmlp {

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << h << ", " << w << ", " << c << ")";
  return os.str();
}

namespace {
void check_dims(const Shape4& s) {
  if (s.n < 1 || s.h < 1 || s.w < 1 || s.c < 1) {
    throw std::invalid_argument("Tensor4: all dimensions must be >= 1, got " + s.str());
  }
}
}  // namespace

Tensor4::Tensor4(Shape4 shape, double fill) : shape_(shape) {
  check_dims(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("Tensor4: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_.str());
  }
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor4& Tensor4::operator+=(const Tensor4& other) {
  if (other.shape_ != shape_) {
    throw std::invalid_argument("Tensor4 +=: shape mismatch " + shape_.str() + " vs " +
                                other.shape_.str());
  }
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

Parameter::Parameter(std::vector<int> dims, double fill) : shape(std::move(dims)) {
  std::size_t count = 1;
  for (int d : shape) {
    if (d < 1) throw std::invalid_argument("Parameter: non-positive dimension");
    count *= static_cast<std::size_t>(d);
  }
  value.assign(count, fill);
  grad.assign(count, 0.0);
}

void Parameter::zero_grad() { grad.assign(value.size(), 0.0); }

void fill_normal(std::span<double> out, Rng& rng, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : out) v = dist(rng);
}

void fill_uniform(std::span<double> out, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : out) v = dist(rng);
}

void fill_trunc_normal(std::span<double> out, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : out) {
    double s = dist(rng);
    while (std::abs(s) > 2.0 * stddev) s = dist(rng);
    v = s;
  }
}

Tensor4 random_tensor(Shape4 shape, Rng& rng, double stddev) {
  Tensor4 t(shape);
  fill_normal(t.data(), rng, 0.0, stddev);
  return t;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace msmlp
