#include "qdit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "qdit/error.hpp"

namespace qdit {

namespace {

constexpr int kMaxEigDim = 1024;
constexpr int kMaxJacobiSweeps = 100;

void require_square(const Tensor& a, const char* who) {
  if (a.rank() != 2 || a.rows() != a.cols())
    throw dim_error(std::string(who) + " expects a square 2-D tensor");
}

void require_symmetric(const Tensor& a, const char* who) {
  const double tol = 1e-8 * std::max(1.0, max_abs(a));
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (std::fabs(a.at(i, j) - a.at(j, i)) > tol)
        throw validation_error(std::string(who) + ": input is not symmetric at (" +
                               std::to_string(i) + "," + std::to_string(j) + ")");
}

double off_diagonal_norm(const Tensor& a) {
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (i != j) s += a.at(i, j) * a.at(i, j);
  return std::sqrt(s);
}

}  // namespace

EigResult sym_eig(const Tensor& input) {
  require_square(input, "sym_eig");
  const int n = input.rows();
  if (n > kMaxEigDim)
    throw validation_error("sym_eig: dimension " + std::to_string(n) + " exceeds cap " +
                           std::to_string(kMaxEigDim));
  require_symmetric(input, "sym_eig");

  Tensor a = input;
  Tensor v = Tensor::identity(n);
  const double stop = 1e-12 * frobenius_norm(a);

  bool converged = off_diagonal_norm(a) <= stop;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double app = a.at(p, p);
        const double aqq = a.at(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        // Smaller-angle root of t^2 + 2 theta t - 1 = 0.
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k);
          const double aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p);
          const double vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal_norm(a) <= stop;
  }
  if (!converged)
    throw convergence_error("sym_eig: Jacobi did not converge in " +
                            std::to_string(kMaxJacobiSweeps) + " sweeps");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](int x, int y) { return a.at(x, x) > a.at(y, y); });

  EigResult out{Tensor({n}), Tensor({n, n})};
  for (int i = 0; i < n; ++i) {
    out.values[static_cast<std::size_t>(i)] = a.at(order[i], order[i]);
    for (int k = 0; k < n; ++k) out.vectors.at(k, i) = v.at(k, order[i]);
  }
  return out;
}

Tensor psd_sqrt(const Tensor& a) {
  EigResult e = sym_eig(a);
  const int n = a.rows();
  double lambda_max = 0.0;
  for (int i = 0; i < n; ++i) lambda_max = std::max(lambda_max, std::fabs(e.values[i]));
  const double neg_tol = 1e-6 * std::max(lambda_max, 1e-300);

  Tensor scaled = e.vectors;  // columns scaled by sqrt(lambda)
  for (int i = 0; i < n; ++i) {
    double lambda = e.values[static_cast<std::size_t>(i)];
    if (lambda < -neg_tol)
      throw domain_error("psd_sqrt: materially negative eigenvalue " + std::to_string(lambda));
    if (lambda < 0.0) lambda = 0.0;
    const double r = std::sqrt(lambda);
    for (int k = 0; k < n; ++k) scaled.at(k, i) *= r;
  }
  Tensor s = matmul(scaled, transpose(e.vectors));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (s.at(i, j) + s.at(j, i));
      s.at(i, j) = avg;
      s.at(j, i) = avg;
    }
  return s;
}

Tensor cholesky(const Tensor& a) {
  require_square(a, "cholesky");
  require_symmetric(a, "cholesky");
  const int n = a.rows();
  Tensor l({n, n});
  double* pl = l.data();
  const double* pa = a.data();
  for (int j = 0; j < n; ++j) {
    const double* lj = pl + static_cast<std::size_t>(j) * n;
    double d = pa[static_cast<std::size_t>(j) * n + j];
    for (int k = 0; k < j; ++k) d -= lj[k] * lj[k];
    if (d <= 0.0)
      throw domain_error("cholesky: not positive definite (pivot " + std::to_string(d) +
                         " at column " + std::to_string(j) + ")");
    const double ljj = std::sqrt(d);
    pl[static_cast<std::size_t>(j) * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double* li = pl + static_cast<std::size_t>(i) * n;
      double s = pa[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) s -= li[k] * lj[k];
      li[j] = s / ljj;
    }
  }
  return l;
}

Tensor cholesky_inverse(const Tensor& lower) {
  require_square(lower, "cholesky_inverse");
  const int n = lower.rows();

  // Row j of t holds column j of L^{-1}, so every inner walk below is
  // contiguous; the per-unit-vector substitution variant thrashes caches
  // at a thousand dims.
  Tensor t({n, n});
  double* pt = t.data();
  const double* pl = lower.data();
  for (int j = 0; j < n; ++j) {
    double* trow = pt + static_cast<std::size_t>(j) * n;
    trow[j] = 1.0 / pl[static_cast<std::size_t>(j) * n + j];
    for (int i = j + 1; i < n; ++i) {
      const double* lrow = pl + static_cast<std::size_t>(i) * n;
      double s = 0.0;
      for (int k = j; k < i; ++k) s += lrow[k] * trow[k];
      trow[i] = -s / lrow[i];
    }
  }

  // inv(i, j) = sum_k L^{-1}(k, i) L^{-1}(k, j), nonzero only for k past
  // the later of the two columns.
  Tensor inv({n, n});
  double* pi = inv.data();
  for (int i = 0; i < n; ++i) {
    const double* ti = pt + static_cast<std::size_t>(i) * n;
    for (int j = i; j < n; ++j) {
      const double* tj = pt + static_cast<std::size_t>(j) * n;
      double s = 0.0;
      for (int k = j; k < n; ++k) s += ti[k] * tj[k];
      pi[static_cast<std::size_t>(i) * n + j] = s;
      pi[static_cast<std::size_t>(j) * n + i] = s;
    }
  }
  return inv;
}

}  // namespace qdit
