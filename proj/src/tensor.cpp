#include "adlab/tensor.hpp"

#include <cmath>

namespace adlab {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Tensor Tensor::zeros(const Shape& s) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0));
}

Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), v));
}

Tensor Tensor::vec(std::vector<double> v) {
  Shape s{static_cast<std::int64_t>(v.size())};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::mat(std::int64_t r, std::int64_t c, std::vector<double> v) {
  if (static_cast<std::int64_t>(v.size()) != r * c)
    throw std::invalid_argument("Tensor::mat: value count does not match " +
                                std::to_string(r) + "x" + std::to_string(c));
  return Tensor({r, c}, std::move(v));
}

Tensor Tensor::identity(std::int64_t n) {
  Tensor t = zeros({n, n});
  for (std::int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::int64_t Tensor::numel() const { return shape_numel(shape); }

double Tensor::value() const {
  if (rank() != 0 && numel() != 1)
    throw std::invalid_argument("Tensor::value: tensor is not scalar, shape " + shape_str(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace adlab
