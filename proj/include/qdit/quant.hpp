#pragma once

#include <cstdint>
#include <vector>

#include "qdit/tensor.hpp"

namespace qdit {

// Scales never drop below this, so a constant range still quantizes
// without dividing by zero. Kept as a 32-bit literal: every scale is
// rounded to 32-bit precision so that serialized parameters reload to
// exactly the in-memory value.
inline constexpr float kScaleEps = 1e-8f;

// Asymmetric uniform quantization parameters for one group:
//   code = clip(round(x / scale) + zero_point, 0, 2^bits - 1)
//   x^   = scale * (code - zero_point)
// round() is round-half-away-from-zero. The zero point is signed and not
// clamped to the code range.
struct QuantParams {
  double scale = 1.0;  // always > 0 and exactly representable in 32 bits
  std::int64_t zero_point = 0;
  int bits = 8;

  int max_code() const { return (1 << bits) - 1; }
  bool operator==(const QuantParams&) const = default;
};

// scale = (max - min) / (2^bits - 1), floored at kScaleEps;
// zero_point = -round(min / scale). bits must be in [2, 8], min <= max.
QuantParams compute_params(double min_val, double max_val, int bits);

std::int32_t quantize_value(double x, const QuantParams& p);
double dequantize_value(std::int32_t code, const QuantParams& p);

// Integer codes with the shape of the tensor they came from.
struct IntTensor {
  std::vector<int> shape;
  std::vector<std::int32_t> data;
};

IntTensor quantize(const Tensor& x, const QuantParams& p);
// Validates every code against [0, 2^bits - 1].
Tensor dequantize(const IntTensor& codes, const QuantParams& p);
Tensor fake_quant(const Tensor& x, const QuantParams& p);

// Partition of an axis into contiguous groups. The last group may be
// shorter when group_size does not divide axis_len.
struct GroupLayout {
  int axis_len = 0;
  int group_size = 0;
  int group_count = 0;

  // group_size larger than axis_len is clamped (the caller can detect the
  // clamp by comparing against the requested size).
  static GroupLayout over(int axis_len, int group_size);
  int begin(int g) const { return g * group_size; }
  int end(int g) const;
  bool operator==(const GroupLayout&) const = default;
};

// A quantized 2-D tensor. The group layout always runs over the
// input-channel axis: rows for weight matrices [d_in x d_out], columns for
// activation matrices [n x d_in].
//
// Weight parameters are per (group, output column): params[g * d_out + j].
// Activation parameters are per group: params[g]; the whole [rows x group]
// slab of one sample shares them.
struct QuantizedTensor {
  std::vector<int> shape;
  std::vector<std::int32_t> codes;
  GroupLayout layout;
  bool per_column = false;  // true for weights
  int bits = 8;
  std::vector<QuantParams> params;

  const QuantParams& weight_params(int group, int col) const;
  const QuantParams& act_params(int group) const;
  Tensor dequantize() const;
};

// Min/max quantization of a weight matrix [d_in x d_out], one parameter set
// per (input-channel group, output column).
QuantizedTensor group_quantize_weights(const Tensor& w, int group_size, int bits);

// Quantizes one sample's activation matrix [n x d_in] with parameters
// computed from this very input (no calibration state): per group, min/max
// over the n x group slab. Pure function.
QuantizedTensor dynamic_quantize_activation(const Tensor& x, int group_size, int bits);

// Same slab layout, but with externally calibrated per-group parameters
// (values outside the calibrated range clip).
QuantizedTensor static_quantize_activation(const Tensor& x, const GroupLayout& layout,
                                           const std::vector<QuantParams>& params);

// Computes per-group parameters from per-channel ranges pooled by a
// calibration pass: group min = min over its channels, likewise max.
std::vector<QuantParams> group_params_from_channel_ranges(const std::vector<double>& ch_min,
                                                          const std::vector<double>& ch_max,
                                                          const GroupLayout& layout, int bits);

// y = x^ * w^ for quantized activations [n x d_in] and weights
// [d_in x d_out] sharing one input-channel group layout. Accumulates raw
// integer code products inside each group and applies one rescale per
// (group, output element). The zero points fold into the rescale:
//   sum (cx - Zx)(cw - Zw)
//     = sum cx*cw - Zw * sum cx - Zx * sum cw + count * Zx * Zw
// so the integer inner loop touches codes only.
Tensor quantized_matmul(const QuantizedTensor& x, const QuantizedTensor& w);

}  // namespace qdit
