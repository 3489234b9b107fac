#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qdit/config.hpp"
#include "qdit/gptq.hpp"
#include "qdit/metrics.hpp"
#include "qdit/model.hpp"
#include "qdit/search.hpp"

namespace qdit {

// Per-layer statistics gathered by sampling with the full-precision model:
// input second moments for error-compensated weight rounding, and pooled
// per-input-channel ranges for static activation parameters.
struct CalibrationData {
  std::vector<HessianAccumulator> hessians;
  std::vector<std::vector<double>> channel_min;
  std::vector<std::vector<double>> channel_max;
};

CalibrationData calibrate(const ToyDiT& model, const DiffusionSchedule& sched, int n,
                          std::uint64_t seed);

// Compensation factors, one per registry layer. Independent of group size
// and bit width, so callers can prepare once and quantize many ways.
std::vector<GptqFactor> prepare_factors(const CalibrationData& calib);

// Plain-rounding counterparts (no cross-row compensation).
std::vector<GptqFactor> identity_factors(const std::vector<LayerInfo>& registry);

struct QuantizeOptions {
  int bits_w = 4;
  int bits_a = 8;
  GroupConfig groups;                // one size per registry layer
  std::vector<std::string> exclude;  // layer names kept in full precision
  bool static_acts = false;          // calibrated per-group activation params
};

QuantizedModel quantize_model(const ToyDiT& model, const CalibrationData& calib,
                              const std::vector<GptqFactor>& factors,
                              const QuantizeOptions& opt);

// Mean squared weight reconstruction error per layer; NaN where disengaged.
std::vector<double> layer_weight_mse(const ToyDiT& model, const QuantizedModel& qm);

// Gaussian fit of full-precision samples — the comparison target for every
// quantized variant.
GaussianStats reference_stats(const ToyDiT& model, const DiffusionSchedule& sched, int n,
                              std::uint64_t seed);

// Samples with the given plan (full precision when null), fits a Gaussian,
// and returns the distribution distance to the reference. Numeric failure
// inside the pipeline maps to +infinity rather than an exception so a bad
// candidate cannot abort a surrounding search.
double sample_fitness(const ToyDiT& model, const DiffusionSchedule& sched,
                      const QuantizedModel* qm, const GaussianStats& ref, int n,
                      std::uint64_t seed);

// Search fitness: quantize under an assignment (compensated weights, dynamic
// activations), sample, and score against the reference. Factors are
// prepared once at construction.
class FitnessContext {
 public:
  FitnessContext(const ToyDiT& model, const DiffusionSchedule& sched,
                 const CalibrationData& calib, GaussianStats reference, int bits_w, int bits_a,
                 int n_fid, std::uint64_t sampler_seed, std::vector<std::string> exclude);

  double operator()(const GroupConfig& g) const;

 private:
  const ToyDiT& model_;
  const DiffusionSchedule& sched_;
  const CalibrationData& calib_;
  GaussianStats reference_;
  std::vector<GptqFactor> factors_;
  int bits_w_;
  int bits_a_;
  int n_fid_;
  std::uint64_t sampler_seed_;
  std::vector<std::string> exclude_;
};

// "auto" budgets resolve to the cost of the uniform default assignment, so
// the defining configuration is always feasible.
double resolve_budget(const RunConfig& cfg, const std::vector<LayerInfo>& registry);

}  // namespace qdit
