#include "qdit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <utility>

#include "qdit/error.hpp"

namespace qdit {

namespace {

class CalibrationTap : public LayerTap {
 public:
  explicit CalibrationTap(const std::vector<LayerInfo>& registry) {
    for (const LayerInfo& l : registry) {
      hessians_.emplace_back(l.d_in);
      ch_min_.emplace_back(l.d_in, std::numeric_limits<double>::infinity());
      ch_max_.emplace_back(l.d_in, -std::numeric_limits<double>::infinity());
    }
  }

  void on_input(int layer, const Tensor& x) override {
    hessians_[layer].accumulate(x);
    std::vector<double>& mn = ch_min_[layer];
    std::vector<double>& mx = ch_max_[layer];
    const int rows = x.rows();
    const int cols = x.cols();
    for (int i = 0; i < rows; ++i) {
      const double* row = x.data() + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) {
        mn[j] = std::min(mn[j], row[j]);
        mx[j] = std::max(mx[j], row[j]);
      }
    }
  }

  CalibrationData take() {
    return CalibrationData{std::move(hessians_), std::move(ch_min_), std::move(ch_max_)};
  }

 private:
  std::vector<HessianAccumulator> hessians_;
  std::vector<std::vector<double>> ch_min_;
  std::vector<std::vector<double>> ch_max_;
};

bool is_excluded(const std::string& name, const std::vector<std::string>& exclude) {
  return std::find(exclude.begin(), exclude.end(), name) != exclude.end();
}

}  // namespace

CalibrationData calibrate(const ToyDiT& model, const DiffusionSchedule& sched, int n,
                          std::uint64_t seed) {
  CalibrationTap tap(model.registry());
  ddim_sample(model, sched, n, seed, nullptr, &tap);
  return tap.take();
}

std::vector<GptqFactor> prepare_factors(const CalibrationData& calib) {
  std::vector<GptqFactor> out;
  out.reserve(calib.hessians.size());
  for (const HessianAccumulator& acc : calib.hessians) out.push_back(prepare_gptq_factor(acc));
  return out;
}

std::vector<GptqFactor> identity_factors(const std::vector<LayerInfo>& registry) {
  std::vector<GptqFactor> out;
  out.reserve(registry.size());
  for (const LayerInfo& l : registry) {
    out.push_back(prepare_gptq_factor(HessianAccumulator::identity(l.d_in)));
  }
  return out;
}

QuantizedModel quantize_model(const ToyDiT& model, const CalibrationData& calib,
                              const std::vector<GptqFactor>& factors,
                              const QuantizeOptions& opt) {
  const std::vector<LayerInfo>& registry = model.registry();
  if (opt.groups.sizes.size() != registry.size()) {
    throw dim_error("group assignment covers " + std::to_string(opt.groups.sizes.size()) +
                    " layers but the registry has " + std::to_string(registry.size()));
  }
  if (factors.size() != registry.size()) {
    throw dim_error("factor count does not match the registry");
  }
  if (opt.static_acts && calib.channel_min.size() != registry.size()) {
    throw dim_error("calibration data does not match the registry");
  }

  QuantizedModel qm;
  qm.bits_a = opt.bits_a;
  qm.layers.resize(registry.size());
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (is_excluded(registry[i].name, opt.exclude)) continue;
    QuantizedLayer ql;
    ql.weights = gptq_quantize_layer(model.layer_weights(static_cast<int>(i)), factors[i],
                                     opt.groups.sizes[i], opt.bits_w);
    if (opt.static_acts) {
      ql.act_params = group_params_from_channel_ranges(calib.channel_min[i],
                                                       calib.channel_max[i],
                                                       ql.weights.layout, opt.bits_a);
    }
    qm.layers[i] = std::move(ql);
  }
  return qm;
}

std::vector<double> layer_weight_mse(const ToyDiT& model, const QuantizedModel& qm) {
  const std::vector<LayerInfo>& registry = model.registry();
  if (qm.layers.size() != registry.size()) {
    throw dim_error("quantized plan does not match the registry");
  }
  std::vector<double> out(registry.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (!qm.layers[i].has_value()) continue;
    const Tensor& w = model.layer_weights(static_cast<int>(i));
    const Tensor deq = qm.layers[i]->weights.dequantize();
    if (!deq.same_shape(w)) throw dim_error("dequantized shape mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double d = w[k] - deq[k];
      acc += d * d;
    }
    out[i] = acc / static_cast<double>(w.size());
  }
  return out;
}

GaussianStats reference_stats(const ToyDiT& model, const DiffusionSchedule& sched, int n,
                              std::uint64_t seed) {
  return fit_gaussian(ddim_sample(model, sched, n, seed));
}

double sample_fitness(const ToyDiT& model, const DiffusionSchedule& sched,
                      const QuantizedModel* qm, const GaussianStats& ref, int n,
                      std::uint64_t seed) {
  try {
    const Tensor samples = ddim_sample(model, sched, n, seed, qm);
    return frechet_distance(ref, fit_gaussian(samples));
  } catch (const error& e) {
    std::clog << "[fitness] candidate failed (" << e.what() << "); scoring it +inf\n";
    return std::numeric_limits<double>::infinity();
  }
}

FitnessContext::FitnessContext(const ToyDiT& model, const DiffusionSchedule& sched,
                               const CalibrationData& calib, GaussianStats reference,
                               int bits_w, int bits_a, int n_fid, std::uint64_t sampler_seed,
                               std::vector<std::string> exclude)
    : model_(model),
      sched_(sched),
      calib_(calib),
      reference_(std::move(reference)),
      factors_(prepare_factors(calib)),
      bits_w_(bits_w),
      bits_a_(bits_a),
      n_fid_(n_fid),
      sampler_seed_(sampler_seed),
      exclude_(std::move(exclude)) {}

double FitnessContext::operator()(const GroupConfig& g) const {
  QuantizeOptions opt;
  opt.bits_w = bits_w_;
  opt.bits_a = bits_a_;
  opt.groups = g;
  opt.exclude = exclude_;
  opt.static_acts = false;
  try {
    const QuantizedModel qm = quantize_model(model_, calib_, factors_, opt);
    return sample_fitness(model_, sched_, &qm, reference_, n_fid_, sampler_seed_);
  } catch (const error& e) {
    std::clog << "[fitness] quantization failed (" << e.what() << "); scoring it +inf\n";
    return std::numeric_limits<double>::infinity();
  }
}

double resolve_budget(const RunConfig& cfg, const std::vector<LayerInfo>& registry) {
  const BitOpsModel costs = BitOpsModel::from_registry(registry, cfg.bits_w, cfg.bits_a);
  if (cfg.budget_is_auto()) {
    GroupConfig uniform{std::vector<int>(registry.size(), cfg.group_default)};
    return bitops(uniform, costs);
  }
  return cfg.budget_value();
}

}  // namespace qdit
