#include "qdit/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "qdit/error.hpp"
#include "qdit/linalg.hpp"
#include "qdit/quant.hpp"

namespace qdit {

GaussianStats fit_gaussian(const Tensor& samples) {
  if (samples.rank() != 2) throw dim_error("fit_gaussian expects [n x d] samples");
  const int n = samples.rows();
  const int d = samples.cols();
  if (n < d + 1) {
    throw validation_error("need at least " + std::to_string(d + 1) + " samples for a rank-" +
                           std::to_string(d) + " covariance, got " + std::to_string(n));
  }

  GaussianStats out;
  out.n = n;
  out.mu = Tensor({d});
  for (int s = 0; s < n; ++s) {
    const double* row = samples.data() + static_cast<std::size_t>(s) * d;
    for (int j = 0; j < d; ++j) out.mu[j] += row[j];
  }
  for (int j = 0; j < d; ++j) out.mu[j] /= n;

  // Upper triangle of sum (x-mu)(x-mu)^T, mirrored afterwards so sigma is
  // exactly symmetric.
  out.sigma = Tensor({d, d});
  std::vector<double> c(static_cast<std::size_t>(d));
  for (int s = 0; s < n; ++s) {
    const double* row = samples.data() + static_cast<std::size_t>(s) * d;
    for (int j = 0; j < d; ++j) c[j] = row[j] - out.mu[j];
    for (int i = 0; i < d; ++i) {
      const double v = c[i];
      if (v == 0.0) continue;
      double* srow = &out.sigma.at(i, 0);
      for (int j = i; j < d; ++j) srow[j] += v * c[j];
    }
  }
  const double inv = 1.0 / (n - 1);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double v = out.sigma.at(i, j) * inv;
      out.sigma.at(i, j) = v;
      out.sigma.at(j, i) = v;
    }
  }
  return out;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mu.rank() != 1 || b.mu.rank() != 1 || a.mu.dim(0) != b.mu.dim(0)) {
    throw dim_error("gaussian stats dimensions do not match");
  }
  const int d = a.mu.dim(0);
  if (a.sigma.rank() != 2 || a.sigma.rows() != d || a.sigma.cols() != d ||
      b.sigma.rank() != 2 || b.sigma.rows() != d || b.sigma.cols() != d) {
    throw dim_error("covariance shape does not match mean dimension");
  }

  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mu[i] - b.mu[i];
    mean_term += diff * diff;
  }

  Tensor s1h = psd_sqrt(a.sigma);
  Tensor inner = matmul(matmul(s1h, b.sigma), s1h);
  // symmetric up to roundoff; fold it exactly symmetric for psd_sqrt
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double v = 0.5 * (inner.at(i, j) + inner.at(j, i));
      inner.at(i, j) = v;
      inner.at(j, i) = v;
    }
  }
  Tensor root = psd_sqrt(inner);

  double trace_term = 0.0;
  for (int i = 0; i < d; ++i) {
    trace_term += a.sigma.at(i, i) + b.sigma.at(i, i) - 2.0 * root.at(i, i);
  }

  const double dist = mean_term + trace_term;
  if (dist < -1e-6) {
    throw domain_error("distance came out materially negative: " + std::to_string(dist));
  }
  return dist < 0.0 ? 0.0 : dist;
}

namespace {

double sample_std(const double* v, std::size_t count, std::size_t stride) {
  if (count < 2) return 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < count; ++i) mean += v[i * stride];
  mean /= static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double dlt = v[i * stride] - mean;
    ss += dlt * dlt;
  }
  return std::sqrt(ss / static_cast<double>(count - 1));
}

double max_over_median(const std::vector<double>& stds) {
  if (stds.empty()) return 0.0;
  const double mx = *std::max_element(stds.begin(), stds.end());
  const double med = quantile(stds, 0.5);
  if (med == 0.0) return 0.0;
  return mx / med;
}

}  // namespace

ChannelVarianceReport channel_variance_report(const Tensor& w) {
  if (w.rank() != 2) throw dim_error("channel variance needs a 2-D matrix");
  const int rows = w.rows();
  const int cols = w.cols();
  ChannelVarianceReport rep;
  rep.input_channel_std.reserve(rows);
  rep.output_channel_std.reserve(cols);
  for (int i = 0; i < rows; ++i) {
    rep.input_channel_std.push_back(
        sample_std(w.data() + static_cast<std::size_t>(i) * cols, cols, 1));
  }
  // walk the transpose so both axes accumulate in the same order and the
  // report of w^T is the exact mirror of the report of w
  const Tensor wt = transpose(w);
  for (int j = 0; j < cols; ++j) {
    rep.output_channel_std.push_back(
        sample_std(wt.data() + static_cast<std::size_t>(j) * rows, rows, 1));
  }
  rep.input_max_over_median = max_over_median(rep.input_channel_std);
  rep.output_max_over_median = max_over_median(rep.output_channel_std);
  return rep;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw validation_error("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw validation_error("quantile order must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double rank = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  if (frac == 0.0 || lo + 1 >= values.size()) return values[lo];
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

ActivationSnapshot summarize_activation(const std::string& layer, int step, const Tensor& slab,
                                        bool keep_raw) {
  if (slab.empty()) throw validation_error("cannot summarize an empty activation slab");
  ActivationSnapshot snap;
  snap.layer = layer;
  snap.step = step;
  std::vector<double> vals(slab.data(), slab.data() + slab.size());
  snap.min_v = *std::min_element(vals.begin(), vals.end());
  snap.max_v = *std::max_element(vals.begin(), vals.end());
  snap.q1 = quantile(vals, 0.25);
  snap.median = quantile(vals, 0.5);
  snap.q3 = quantile(vals, 0.75);
  snap.stddev = sample_std(slab.data(), slab.size(), 1);
  if (keep_raw) snap.raw = std::move(vals);
  return snap;
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string activation_timeline_csv(const std::vector<ActivationSnapshot>& rows) {
  std::string out = "layer,timestep,min,q1,median,q3,max,std\n";
  for (const auto& r : rows) {
    out += r.layer;
    out += ',';
    out += std::to_string(r.step);
    for (double v : {r.min_v, r.q1, r.median, r.q3, r.max_v, r.stddev}) {
      out += ',';
      out += format_real(v);
    }
    out += '\n';
  }
  return out;
}

std::string channel_variance_summary_csv(
    const std::vector<std::pair<std::string, ChannelVarianceReport>>& rows) {
  std::string out = "layer,axis,channels,std_max,std_median,max_over_median\n";
  for (const auto& [name, rep] : rows) {
    const struct {
      const char* axis;
      const std::vector<double>& stds;
      double ratio;
    } axes[2] = {{"input", rep.input_channel_std, rep.input_max_over_median},
                 {"output", rep.output_channel_std, rep.output_max_over_median}};
    for (const auto& ax : axes) {
      const double mx = ax.stds.empty() ? 0.0 : *std::max_element(ax.stds.begin(), ax.stds.end());
      const double med = ax.stds.empty() ? 0.0 : quantile(ax.stds, 0.5);
      out += name;
      out += ',';
      out += ax.axis;
      out += ',';
      out += std::to_string(ax.stds.size());
      out += ',';
      out += format_real(mx);
      out += ',';
      out += format_real(med);
      out += ',';
      out += format_real(ax.ratio);
      out += '\n';
    }
  }
  return out;
}

std::string channel_variance_channels_csv(
    const std::vector<std::pair<std::string, ChannelVarianceReport>>& rows) {
  std::string out = "layer,axis,channel,std\n";
  for (const auto& [name, rep] : rows) {
    for (std::size_t i = 0; i < rep.input_channel_std.size(); ++i) {
      out += name;
      out += ",input,";
      out += std::to_string(i);
      out += ',';
      out += format_real(rep.input_channel_std[i]);
      out += '\n';
    }
    for (std::size_t j = 0; j < rep.output_channel_std.size(); ++j) {
      out += name;
      out += ",output,";
      out += std::to_string(j);
      out += ',';
      out += format_real(rep.output_channel_std[j]);
      out += '\n';
    }
  }
  return out;
}

double static_param_overhead(const std::vector<std::pair<int, int>>& layer_dims,
                             const std::vector<int>& group_sizes, int steps, int param_bits) {
  if (layer_dims.empty()) throw validation_error("overhead model needs at least one layer");
  if (layer_dims.size() != group_sizes.size()) {
    throw dim_error("one group size per layer required");
  }
  if (steps < 0) throw validation_error("step count cannot be negative");
  if (param_bits <= 0) throw validation_error("parameter width must be positive");

  double table_bits = 0.0;
  double weight_bits = 0.0;
  for (std::size_t l = 0; l < layer_dims.size(); ++l) {
    const auto [d_in, d_out] = layer_dims[l];
    const GroupLayout layout = GroupLayout::over(d_in, group_sizes[l]);
    table_bits += static_cast<double>(layout.group_count) * d_out * 2.0 * param_bits;
    weight_bits += static_cast<double>(d_in) * d_out * 32.0;
  }
  return static_cast<double>(steps) * table_bits / weight_bits;
}

}  // namespace qdit
