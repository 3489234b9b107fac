#include "qdit/gptq.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "qdit/error.hpp"
#include "qdit/linalg.hpp"

namespace qdit {

HessianAccumulator::HessianAccumulator(int dim, double damping_fraction)
    : h_(std::vector<int>{dim, dim}), damping_fraction_(damping_fraction) {
  if (dim <= 0) throw dim_error("hessian dim must be positive, got " + std::to_string(dim));
  if (!(damping_fraction > 0.0)) {
    throw validation_error("damping fraction must be positive");
  }
}

HessianAccumulator HessianAccumulator::identity(int dim) {
  HessianAccumulator acc(dim);
  for (int i = 0; i < dim; ++i) acc.h_.at(i, i) = 1.0;
  acc.count_ = 0;
  return acc;
}

void HessianAccumulator::accumulate(const Tensor& x) {
  if (x.rank() != 2 || x.cols() != dim()) {
    throw dim_error("hessian batch must be [n x " + std::to_string(dim()) + "]");
  }
  const int n = x.rows();
  const int d = dim();
  // h += x^T x, accumulated row by row so the inner loop stays contiguous.
  for (int s = 0; s < n; ++s) {
    const double* row = x.data() + static_cast<std::size_t>(s) * d;
    for (int i = 0; i < d; ++i) {
      const double v = row[i];
      if (v == 0.0) continue;
      double* hrow = &h_.at(i, 0);
      for (int j = 0; j < d; ++j) hrow[j] += v * row[j];
    }
  }
  count_ += n;
}

GptqFactor prepare_gptq_factor(const HessianAccumulator& acc) {
  const int d = acc.dim();
  const Tensor& h = acc.sum();
  double mean_diag = 0.0;
  for (int i = 0; i < d; ++i) mean_diag += h.at(i, i);
  mean_diag /= d;
  const double lambda = acc.damping_fraction() * mean_diag;

  for (int attempt = 0; attempt < 2; ++attempt) {
    const double damp = attempt == 0 ? lambda : 10.0 * lambda;
    Tensor damped = h;
    for (int i = 0; i < d; ++i) damped.at(i, i) += damp;
    try {
      Tensor lower = cholesky(damped);
      Tensor inv = cholesky_inverse(lower);
      Tensor inv_lower = cholesky(inv);
      return GptqFactor{transpose(inv_lower)};
    } catch (const domain_error&) {
      // fall through to the boosted damping
    }
  }
  throw domain_error("hessian is not positive definite even after boosted damping");
}

namespace {

// Per-column min/max over rows [begin, end) of w, turned into group params.
void group_params_from_rows(const Tensor& w, int begin, int end, int bits,
                            std::vector<QuantParams>* out) {
  const int d_out = w.cols();
  for (int j = 0; j < d_out; ++j) {
    double lo = w.at(begin, j);
    double hi = lo;
    for (int r = begin + 1; r < end; ++r) {
      const double v = w.at(r, j);
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
    out->push_back(compute_params(lo, hi, bits));
  }
}

}  // namespace

QuantizedTensor gptq_quantize_layer(const Tensor& w, const GptqFactor& factor, int group_size,
                                    int bits) {
  if (w.rank() != 2) throw dim_error("gptq expects a 2-D weight matrix");
  const int d_in = w.rows();
  const int d_out = w.cols();
  const Tensor& u = factor.upper;
  if (u.rows() != d_in || u.cols() != d_in) {
    throw dim_error("gptq factor is " + std::to_string(u.rows()) + "x" +
                    std::to_string(u.cols()) + " but the layer has " + std::to_string(d_in) +
                    " input channels");
  }

  QuantizedTensor out;
  out.shape = {d_in, d_out};
  out.layout = GroupLayout::over(d_in, group_size);
  out.bits = bits;
  out.per_column = true;
  out.codes.assign(static_cast<std::size_t>(d_in) * d_out, 0);
  out.params.reserve((std::size_t)out.layout.group_count * d_out);

  Tensor work = w;  // compensated copy; original stays untouched
  std::vector<double> err((std::size_t)d_out);

  int group = -1;
  for (int k = 0; k < d_in; ++k) {
    if (group + 1 < out.layout.group_count && k == out.layout.begin(group + 1)) {
      ++group;
      group_params_from_rows(work, out.layout.begin(group), out.layout.end(group), bits,
                             &out.params);
    }
    const QuantParams* prow = &out.params[(std::size_t)group * d_out];
    const double dk = u.at(k, k);
    std::int32_t* crow = &out.codes[(std::size_t)k * d_out];
    const double* wrow = &work.at(k, 0);
    for (int j = 0; j < d_out; ++j) {
      const std::int32_t c = quantize_value(wrow[j], prow[j]);
      crow[j] = c;
      err[j] = (wrow[j] - dequantize_value(c, prow[j])) / dk;
    }
    for (int r = k + 1; r < d_in; ++r) {
      const double urk = u.at(k, r);
      if (urk == 0.0) continue;
      double* trow = &work.at(r, 0);
      for (int j = 0; j < d_out; ++j) trow[j] -= err[j] * urk;
    }
  }
  return out;
}

QuantizedTensor gptq_quantize_layer(const Tensor& w, const HessianAccumulator& acc,
                                    int group_size, int bits) {
  return gptq_quantize_layer(w, prepare_gptq_factor(acc), group_size, bits);
}

}  // namespace qdit
