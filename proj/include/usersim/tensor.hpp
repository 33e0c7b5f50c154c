#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "usersim/common.hpp"

namespace usersim::nn {

/// Dense array of doubles in row-major order. Rank is arbitrary but the
/// networks in this project only ever build rank-1 (vectors, biases) and
/// rank-2 (batches, weight matrices) tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor row_vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  /// Extent helpers for the rank-2 case; a rank-1 tensor of length n is
  /// treated as a single row [1 x n].
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  /// Throws NumericError naming `label` if any entry is NaN/Inf.
  void require_finite(const std::string& label) const;

  void fill(double value);
  void zero() { fill(0.0); }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Throws ShapeError unless the two shapes match.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& context);

}  // namespace usersim::nn
