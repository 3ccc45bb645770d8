#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace msmlp {

/// Dimensions of a rank-4 activation tensor in (batch, rows, cols, channels) order.
struct Shape4 {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * h * w * c;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

/// Dense NHWC tensor of doubles.
///
/// A default-constructed tensor is empty (all dims zero) and only serves as a
/// placeholder; every tensor built from a Shape4 has all dims >= 1 and
/// data().size() == shape().numel().
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0);
  Tensor4(Shape4 shape, std::vector<double> data);

  static Tensor4 zeros_like(const Tensor4& t) { return Tensor4(t.shape()); }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int b, int i, int j, int ch) const {
    return ((static_cast<std::size_t>(b) * shape_.h + i) * shape_.w + j) * shape_.c + ch;
  }
  double& at(int b, int i, int j, int ch) { return data_[index(b, i, j, ch)]; }
  double at(int b, int i, int j, int ch) const { return data_[index(b, i, j, ch)]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  void fill(double v);
  Tensor4& operator+=(const Tensor4& other);

 private:
  Shape4 shape_;
  std::vector<double> data_;
};

/// A learnable array with an arbitrary shape and a gradient buffer of the
/// same size. Empty value means "absent" (e.g. a disabled bias).
struct Parameter {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  explicit Parameter(std::vector<int> dims, double fill = 0.0);

  std::size_t size() const { return value.size(); }
  bool empty() const { return value.empty(); }
  void zero_grad();
};

using Rng = std::mt19937_64;

void fill_normal(std::span<double> out, Rng& rng, double mean = 0.0, double stddev = 1.0);
void fill_uniform(std::span<double> out, Rng& rng, double lo, double hi);
/// Normal(0, stddev) resampled until it falls in [-2*stddev, 2*stddev].
void fill_trunc_normal(std::span<double> out, Rng& rng, double stddev);

Tensor4 random_tensor(Shape4 shape, Rng& rng, double stddev = 1.0);

double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool bitwise_equal(std::span<const double> a, std::span<const double> b);

}  // namespace msmlp
