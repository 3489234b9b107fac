#pragma once

#include <cstdint>

#include "qdit/quant.hpp"
#include "qdit/tensor.hpp"

namespace qdit {

// Running sum of X^T X over calibration batches, one accumulator per layer.
// X rows are the activation vectors that feed the layer.
class HessianAccumulator {
 public:
  explicit HessianAccumulator(int dim, double damping_fraction = 0.01);

  // The Hessian of a layer with no calibration traffic: plain identity.
  // Weight quantization then degenerates to round-to-nearest.
  static HessianAccumulator identity(int dim);

  void accumulate(const Tensor& x);  // x: [n x dim]

  const Tensor& sum() const { return h_; }
  std::int64_t sample_count() const { return count_; }
  int dim() const { return h_.rows(); }
  double damping_fraction() const { return damping_fraction_; }

 private:
  Tensor h_;
  std::int64_t count_ = 0;
  double damping_fraction_;
};

// Precomputed upper-triangular factor U with (H + lambda I)^{-1} = U^T U,
// where lambda = damping_fraction * mean(diag H). Independent of group size
// and bit width, so one factor serves every quantization config of a layer.
struct GptqFactor {
  Tensor upper;
};

// Builds the factor: dampen, Cholesky, invert, Cholesky again. A Cholesky
// failure retries once with 10x damping, then raises domain_error.
GptqFactor prepare_gptq_factor(const HessianAccumulator& acc);

// Quantizes a weight matrix [d_in x d_out] row by row in input-channel
// order. After quantizing row k, the residual (w_k - w^_k), scaled by the
// factor row, is subtracted from the not-yet-quantized rows so later
// rounding can absorb the error. Rows already quantized are never touched
// again. Group parameters are recomputed from the compensated weights each
// time a group begins.
//
// With an identity Hessian the factor is diagonal, no compensation flows,
// and the result is bitwise identical to group_quantize_weights.
QuantizedTensor gptq_quantize_layer(const Tensor& w, const GptqFactor& factor, int group_size,
                                    int bits);
QuantizedTensor gptq_quantize_layer(const Tensor& w, const HessianAccumulator& acc,
                                    int group_size, int bits);

}  // namespace qdit
