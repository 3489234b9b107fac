#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qdit/tensor.hpp"

namespace qdit {

// Mean/covariance summary of a sample set; the carrier of the distribution
// distance used as the search fitness.
struct GaussianStats {
  Tensor mu;     // [d]
  Tensor sigma;  // [d x d], symmetric PSD
  int n = 0;
};

// samples: [n x d] with n >= d + 1. Unbiased covariance; sigma comes out
// exactly symmetric.
GaussianStats fit_gaussian(const Tensor& samples);

// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 sqrt(sqrt(S1) S2 sqrt(S1))).
// The inner product is computed in the symmetrized form so the matrix square
// root always sees a symmetric PSD argument. Small negative results (above
// -1e-6) clamp to zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Per-axis spread of a 2-D matrix: sample std of every row (input channel)
// and every column (output channel), plus a max/median summary per axis.
// A zero median yields ratio 0 by convention.
struct ChannelVarianceReport {
  std::vector<double> input_channel_std;
  std::vector<double> output_channel_std;
  double input_max_over_median = 0.0;
  double output_max_over_median = 0.0;
};

ChannelVarianceReport channel_variance_report(const Tensor& w);

// Quantile by linear interpolation between closest ranks: the value at
// fractional rank q * (n - 1) of the sorted data.
double quantile(std::vector<double> values, double q);

// Summary of one activation slab: a (layer, sampling step) cell.
struct ActivationSnapshot {
  std::string layer;
  int step = 0;  // sampling step index; 0 is the noisiest step
  double min_v = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max_v = 0.0;
  double stddev = 0.0;
  std::vector<double> raw;  // kept only when requested (tests, debugging)
};

ActivationSnapshot summarize_activation(const std::string& layer, int step, const Tensor& slab,
                                        bool keep_raw = false);

// Shortest exact decimal form of v ('.' separator, round-trips to the same
// double). All CSV output goes through this.
std::string format_real(double v);

// CSV: layer,timestep,min,q1,median,q3,max,std — one row per snapshot.
std::string activation_timeline_csv(const std::vector<ActivationSnapshot>& rows);

// CSV: layer,axis,channels,std_max,std_median,max_over_median — one row per
// (layer, axis), axis in {input, output}.
std::string channel_variance_summary_csv(
    const std::vector<std::pair<std::string, ChannelVarianceReport>>& rows);

// CSV: layer,axis,channel,std — one row per channel of every layer.
std::string channel_variance_channels_csv(
    const std::vector<std::pair<std::string, ChannelVarianceReport>>& rows);

// Memory cost of persisting static per-step activation rescale tables
// instead of computing parameters on the fly: two param_bits-wide constants
// per (input-channel group x output column) per step, relative to the
// 32-bit full-precision weights.
//   ratio = steps * sum_l ceil(d_in/g_l) * d_out * 2 * param_bits
//         / sum_l d_in * d_out * 32
double static_param_overhead(const std::vector<std::pair<int, int>>& layer_dims,
                             const std::vector<int>& group_sizes, int steps,
                             int param_bits = 16);

}  // namespace qdit
