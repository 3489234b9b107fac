#pragma once

#include <cstddef>
#include <vector>

namespace qdit {

// Dense row-major tensor of doubles. All math in this library runs in
// 64-bit; values that cross the serialization boundary are kept exactly
// representable in 32-bit (see bundle.hpp).
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor of the given shape. Every dim must be positive.
  explicit Tensor(std::vector<int> shape);

  // Validating constructor for data of external origin: rejects NaN/Inf
  // and shape/data size mismatches.
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor identity(int n);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // 2-D helpers.
  int rows() const { return dim(0); }
  int cols() const { return dim(1); }
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// C = A * B for 2-D tensors. Plain triple loop, 64-bit accumulation,
// summation strictly in ascending k for every output element.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

double max_abs(const Tensor& a);
double frobenius_norm(const Tensor& a);

}  // namespace qdit
