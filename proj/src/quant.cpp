#include "qdit/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "qdit/error.hpp"

namespace qdit {

namespace {

void require_bits(int bits) {
  if (bits < 2 || bits > 8)
    throw validation_error("bits must be in [2, 8], got " + std::to_string(bits));
}

void require_matrix(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw dim_error(std::string(who) + " expects a 2-D tensor");
}

std::pair<double, double> min_max(const double* p, std::size_t n) {
  double lo = p[0], hi = p[0];
  for (std::size_t i = 1; i < n; ++i) {
    lo = std::min(lo, p[i]);
    hi = std::max(hi, p[i]);
  }
  return {lo, hi};
}

}  // namespace

QuantParams compute_params(double min_val, double max_val, int bits) {
  require_bits(bits);
  if (!(min_val <= max_val))
    throw validation_error("compute_params: min " + std::to_string(min_val) +
                           " exceeds max " + std::to_string(max_val));
  const int levels = (1 << bits) - 1;
  // Narrow to 32-bit so persisted parameters reload bit-exactly, then
  // floor so a constant range still has a usable step.
  float scale32 = static_cast<float>((max_val - min_val) / levels);
  if (scale32 < kScaleEps) scale32 = kScaleEps;

  QuantParams p;
  p.scale = static_cast<double>(scale32);
  p.bits = bits;
  double z = std::round(-min_val / p.scale);
  z = std::clamp(z, -9.0e18, 9.0e18);  // keep the cast defined for degenerate ranges
  p.zero_point = static_cast<std::int64_t>(z);
  return p;
}

std::int32_t quantize_value(double x, const QuantParams& p) {
  const double c = std::round(x / p.scale) + static_cast<double>(p.zero_point);
  const double clipped = std::clamp(c, 0.0, static_cast<double>(p.max_code()));
  return static_cast<std::int32_t>(clipped);
}

double dequantize_value(std::int32_t code, const QuantParams& p) {
  return p.scale * (static_cast<double>(code) - static_cast<double>(p.zero_point));
}

IntTensor quantize(const Tensor& x, const QuantParams& p) {
  require_bits(p.bits);
  IntTensor out;
  out.shape = x.shape();
  out.data.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = quantize_value(x[i], p);
  return out;
}

Tensor dequantize(const IntTensor& codes, const QuantParams& p) {
  Tensor out(codes.shape);
  for (std::size_t i = 0; i < codes.data.size(); ++i) {
    const std::int32_t c = codes.data[i];
    if (c < 0 || c > p.max_code())
      throw validation_error("dequantize: code " + std::to_string(c) + " outside [0, " +
                             std::to_string(p.max_code()) + "]");
    out[i] = dequantize_value(c, p);
  }
  return out;
}

Tensor fake_quant(const Tensor& x, const QuantParams& p) { return dequantize(quantize(x, p), p); }

GroupLayout GroupLayout::over(int axis_len, int group_size) {
  if (axis_len <= 0) throw dim_error("GroupLayout: axis_len must be positive");
  if (group_size < 1) throw validation_error("GroupLayout: group_size must be >= 1");
  GroupLayout l;
  l.axis_len = axis_len;
  l.group_size = std::min(group_size, axis_len);
  l.group_count = (axis_len + l.group_size - 1) / l.group_size;
  return l;
}

int GroupLayout::end(int g) const { return std::min((g + 1) * group_size, axis_len); }

const QuantParams& QuantizedTensor::weight_params(int group, int col) const {
  return params[static_cast<std::size_t>(group) * shape[1] + col];
}

const QuantParams& QuantizedTensor::act_params(int group) const {
  return params[static_cast<std::size_t>(group)];
}

Tensor QuantizedTensor::dequantize() const {
  Tensor out(shape);
  const int rows = shape[0], cols = shape[1];
  if (per_column) {
    for (int g = 0; g < layout.group_count; ++g)
      for (int r = layout.begin(g); r < layout.end(g); ++r)
        for (int c = 0; c < cols; ++c)
          out.at(r, c) = dequantize_value(codes[static_cast<std::size_t>(r) * cols + c],
                                          weight_params(g, c));
  } else {
    for (int g = 0; g < layout.group_count; ++g)
      for (int r = 0; r < rows; ++r)
        for (int c = layout.begin(g); c < layout.end(g); ++c)
          out.at(r, c) =
              dequantize_value(codes[static_cast<std::size_t>(r) * cols + c], act_params(g));
  }
  return out;
}

QuantizedTensor group_quantize_weights(const Tensor& w, int group_size, int bits) {
  require_matrix(w, "group_quantize_weights");
  require_bits(bits);
  const int d_in = w.rows(), d_out = w.cols();
  QuantizedTensor q;
  q.shape = w.shape();
  q.codes.resize(w.size());
  q.layout = GroupLayout::over(d_in, group_size);
  q.per_column = true;
  q.bits = bits;
  q.params.resize(static_cast<std::size_t>(q.layout.group_count) * d_out);

  for (int g = 0; g < q.layout.group_count; ++g) {
    const int r0 = q.layout.begin(g), r1 = q.layout.end(g);
    for (int c = 0; c < d_out; ++c) {
      double lo = w.at(r0, c), hi = lo;
      for (int r = r0 + 1; r < r1; ++r) {
        lo = std::min(lo, w.at(r, c));
        hi = std::max(hi, w.at(r, c));
      }
      const QuantParams p = compute_params(lo, hi, bits);
      q.params[static_cast<std::size_t>(g) * d_out + c] = p;
      for (int r = r0; r < r1; ++r)
        q.codes[static_cast<std::size_t>(r) * d_out + c] = quantize_value(w.at(r, c), p);
    }
  }
  return q;
}

QuantizedTensor dynamic_quantize_activation(const Tensor& x, int group_size, int bits) {
  require_matrix(x, "dynamic_quantize_activation");
  require_bits(bits);
  const int n = x.rows(), d_in = x.cols();
  QuantizedTensor q;
  q.shape = x.shape();
  q.codes.resize(x.size());
  q.layout = GroupLayout::over(d_in, group_size);
  q.per_column = false;
  q.bits = bits;
  q.params.resize(static_cast<std::size_t>(q.layout.group_count));

  for (int g = 0; g < q.layout.group_count; ++g) {
    const int c0 = q.layout.begin(g), c1 = q.layout.end(g);
    double lo = x.at(0, c0), hi = lo;
    for (int r = 0; r < n; ++r)
      for (int c = c0; c < c1; ++c) {
        const double v = x.at(r, c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const QuantParams p = compute_params(lo, hi, bits);
    q.params[static_cast<std::size_t>(g)] = p;
    for (int r = 0; r < n; ++r)
      for (int c = c0; c < c1; ++c)
        q.codes[static_cast<std::size_t>(r) * d_in + c] = quantize_value(x.at(r, c), p);
  }
  return q;
}

QuantizedTensor static_quantize_activation(const Tensor& x, const GroupLayout& layout,
                                           const std::vector<QuantParams>& params) {
  require_matrix(x, "static_quantize_activation");
  if (x.cols() != layout.axis_len)
    throw dim_error("static_quantize_activation: layout covers " +
                    std::to_string(layout.axis_len) + " channels, input has " +
                    std::to_string(x.cols()));
  if (static_cast<int>(params.size()) != layout.group_count)
    throw dim_error("static_quantize_activation: expected " +
                    std::to_string(layout.group_count) + " parameter sets, got " +
                    std::to_string(params.size()));
  QuantizedTensor q;
  q.shape = x.shape();
  q.codes.resize(x.size());
  q.layout = layout;
  q.per_column = false;
  q.bits = params.empty() ? 8 : params[0].bits;
  q.params = params;
  const int n = x.rows(), d_in = x.cols();
  for (int g = 0; g < layout.group_count; ++g) {
    const QuantParams& p = params[static_cast<std::size_t>(g)];
    for (int r = 0; r < n; ++r)
      for (int c = layout.begin(g); c < layout.end(g); ++c)
        q.codes[static_cast<std::size_t>(r) * d_in + c] = quantize_value(x.at(r, c), p);
  }
  return q;
}

std::vector<QuantParams> group_params_from_channel_ranges(const std::vector<double>& ch_min,
                                                          const std::vector<double>& ch_max,
                                                          const GroupLayout& layout, int bits) {
  if (static_cast<int>(ch_min.size()) != layout.axis_len || ch_min.size() != ch_max.size())
    throw dim_error("group_params_from_channel_ranges: range vectors must cover the axis");
  std::vector<QuantParams> out(static_cast<std::size_t>(layout.group_count));
  for (int g = 0; g < layout.group_count; ++g) {
    double lo = ch_min[static_cast<std::size_t>(layout.begin(g))];
    double hi = ch_max[static_cast<std::size_t>(layout.begin(g))];
    for (int c = layout.begin(g) + 1; c < layout.end(g); ++c) {
      lo = std::min(lo, ch_min[static_cast<std::size_t>(c)]);
      hi = std::max(hi, ch_max[static_cast<std::size_t>(c)]);
    }
    out[static_cast<std::size_t>(g)] = compute_params(lo, hi, bits);
  }
  return out;
}

Tensor quantized_matmul(const QuantizedTensor& x, const QuantizedTensor& w) {
  if (x.shape.size() != 2 || w.shape.size() != 2)
    throw dim_error("quantized_matmul expects 2-D operands");
  if (x.per_column || !w.per_column)
    throw validation_error("quantized_matmul expects activation x and weight w");
  if (x.shape[1] != w.shape[0])
    throw dim_error("quantized_matmul inner dims differ: " + std::to_string(x.shape[1]) +
                    " vs " + std::to_string(w.shape[0]));
  if (!(x.layout == w.layout))
    throw config_error("quantized_matmul: activation and weight group layouts differ");

  const int n = x.shape[0], d_in = x.shape[1], d_out = w.shape[1];
  Tensor out({n, d_out});
  std::vector<std::int32_t> acc(static_cast<std::size_t>(d_out));
  std::vector<std::int64_t> acc64(static_cast<std::size_t>(d_out));
  std::vector<std::int64_t> wsum(static_cast<std::size_t>(d_out));
  const int w_max_code = (1 << w.bits) - 1;

  for (int g = 0; g < x.layout.group_count; ++g) {
    const int k0 = x.layout.begin(g), k1 = x.layout.end(g);
    const int count = k1 - k0;
    const QuantParams& px = x.act_params(g);
    const double zx = static_cast<double>(px.zero_point);

    // Per-column code sums of this weight group (zero-point correction).
    std::fill(wsum.begin(), wsum.end(), 0);
    for (int k = k0; k < k1; ++k) {
      const std::int32_t* wrow = w.codes.data() + static_cast<std::size_t>(k) * d_out;
      for (int j = 0; j < d_out; ++j) wsum[static_cast<std::size_t>(j)] += wrow[j];
    }

    for (int i = 0; i < n; ++i) {
      const std::int32_t* xrow = x.codes.data() + static_cast<std::size_t>(i) * d_in;
      std::int64_t xsum = 0;
      for (int k = k0; k < k1; ++k) xsum += xrow[k];

      // Integer accumulation. Codes are at most 8-bit, so int32 holds the
      // group dot product for any group narrower than 2^31 / 255^2 ~ 33k
      // channels; wider groups take the int64 path.
      const bool narrow = static_cast<std::int64_t>(count) * px.max_code() * w_max_code <
                          static_cast<std::int64_t>(2147483647);
      std::fill(acc64.begin(), acc64.end(), 0);
      if (narrow) {
        std::fill(acc.begin(), acc.end(), 0);
        for (int k = k0; k < k1; ++k) {
          const std::int32_t cx = xrow[k];
          const std::int32_t* wrow = w.codes.data() + static_cast<std::size_t>(k) * d_out;
          for (int j = 0; j < d_out; ++j) acc[static_cast<std::size_t>(j)] += cx * wrow[j];
        }
        for (int j = 0; j < d_out; ++j)
          acc64[static_cast<std::size_t>(j)] = acc[static_cast<std::size_t>(j)];
      } else {
        for (int k = k0; k < k1; ++k) {
          const std::int64_t cx = xrow[k];
          const std::int32_t* wrow = w.codes.data() + static_cast<std::size_t>(k) * d_out;
          for (int j = 0; j < d_out; ++j) acc64[static_cast<std::size_t>(j)] += cx * wrow[j];
        }
      }

      double* orow = out.data() + static_cast<std::size_t>(i) * d_out;
      for (int j = 0; j < d_out; ++j) {
        const QuantParams& pw = w.weight_params(g, j);
        const double zw = static_cast<double>(pw.zero_point);
        const double dot = static_cast<double>(acc64[static_cast<std::size_t>(j)]) -
                           zw * static_cast<double>(xsum) -
                           zx * static_cast<double>(wsum[static_cast<std::size_t>(j)]) +
                           static_cast<double>(count) * zx * zw;
        orow[j] += px.scale * pw.scale * dot;
      }
    }
  }
  return out;
}

}  // namespace qdit
