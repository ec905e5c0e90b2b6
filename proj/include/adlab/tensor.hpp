#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace adlab {

using Shape = std::vector<std::int64_t>;

// Dense row-major tensor of doubles, rank 0 (scalar), 1 (vector) or 2 (matrix).
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor vec(std::vector<double> v);
  static Tensor mat(std::int64_t r, std::int64_t c, std::vector<double> v);
  static Tensor identity(std::int64_t n);
  static Tensor ones(const Shape& s) { return full(s, 1.0); }

  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t numel() const;
  std::int64_t rows() const { return shape.at(0); }
  std::int64_t cols() const { return shape.at(1); }

  double value() const;  // rank-0 access
  double& at(std::int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(std::int64_t i, std::int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
  double at(std::int64_t i, std::int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

}  // namespace adlab
