#include "qdit/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "qdit/error.hpp"

namespace qdit {

namespace {

std::size_t checked_count(const std::vector<int>& shape) {
  if (shape.empty()) throw dim_error("tensor shape must have at least one dim");
  std::size_t count = 1;
  for (int d : shape) {
    if (d <= 0) throw dim_error("tensor dims must be positive, got " + std::to_string(d));
    count *= static_cast<std::size_t>(d);
  }
  return count;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) {
  const std::size_t count = checked_count(shape);
  shape_ = std::move(shape);
  data_.assign(count, 0.0);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  const std::size_t count = checked_count(shape);
  if (count != data.size())
    throw dim_error("tensor data size " + std::to_string(data.size()) +
                    " does not match shape element count " + std::to_string(count));
  for (double v : data)
    if (!std::isfinite(v)) throw validation_error("tensor data contains a non-finite value");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t({n, n});
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw dim_error("dim index " + std::to_string(i) + " out of range");
  return shape_[static_cast<std::size_t>(i)];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw dim_error("matmul expects 2-D tensors");
  if (a.cols() != b.rows())
    throw dim_error("matmul inner dims differ: " + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* orow = po + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw dim_error("transpose expects a 2-D tensor");
  Tensor out({a.cols(), a.rows()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

}  // namespace qdit
