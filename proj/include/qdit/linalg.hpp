#pragma once

#include "qdit/tensor.hpp"

namespace qdit {

struct EigResult {
  Tensor values;   // [n], sorted descending
  Tensor vectors;  // [n x n], eigenvector i in column i
};

// Symmetric eigendecomposition by cyclic Jacobi rotations. Converges when
// the off-diagonal Frobenius norm drops below 1e-12 * ||A||_F, capped at
// 100 sweeps (convergence_error beyond that). Supported up to n = 1024;
// the callers here stay well under (covariances are 64 x 64).
// Throws validation_error if the input is not symmetric within
// 1e-8 * max(1, max|a_ij|).
EigResult sym_eig(const Tensor& a);

// Symmetric PSD square root via eigendecomposition: V sqrt(L) V^T.
// Slightly negative eigenvalues are clamped to zero; a materially negative
// one (< -1e-6 * max|lambda|) raises domain_error.
Tensor psd_sqrt(const Tensor& a);

// Lower-triangular Cholesky factor L with A = L L^T.
// Throws domain_error("not positive definite ...") on a non-positive pivot.
Tensor cholesky(const Tensor& a);

// A^{-1} from the lower Cholesky factor of A: inverts the triangle, then
// composes A^{-1} = L^{-T} L^{-1}. Result is symmetrized.
Tensor cholesky_inverse(const Tensor& lower);

}  // namespace qdit
