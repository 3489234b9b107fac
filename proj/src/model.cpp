#include "qdit/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "qdit/error.hpp"
#include "qdit/rng.hpp"

namespace qdit {

namespace {

double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

constexpr double kLnEps = 1e-6;

// Non-affine layer normalization over the last axis, one row at a time.
void layer_norm_inplace(Tensor& x) {
  const int n = x.rows();
  const int d = x.cols();
  for (int i = 0; i < n; ++i) {
    double* row = x.data() + static_cast<std::size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    for (int j = 0; j < d; ++j) row[j] = (row[j] - mean) * inv;
  }
}

double gelu_tanh(double v) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  return 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + 0.044715 * v * v * v)));
}

// rows of x: h = h * (1 + scale) + shift, scale/shift indexed by column
void modulate_inplace(Tensor& x, const double* shift, const double* scale) {
  const int n = x.rows(), d = x.cols();
  for (int i = 0; i < n; ++i) {
    double* row = x.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) row[j] = row[j] * (1.0 + scale[j]) + shift[j];
  }
}

void softmax_row(double* row, int n) {
  double mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  for (int j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace

ToyDiT ToyDiT::init_random(const ToyDiTConfig& cfg) {
  if (cfg.image_size <= 0 || cfg.patch_size <= 0 || cfg.image_size % cfg.patch_size != 0) {
    throw validation_error("patch size must divide the image size");
  }
  if (cfg.hidden_dim <= 0 || cfg.heads <= 0 || cfg.hidden_dim % cfg.heads != 0) {
    throw validation_error("head count must divide the hidden width");
  }
  if (cfg.blocks <= 0) throw validation_error("need at least one block");
  if (cfg.timestep_embed_dim != cfg.hidden_dim) {
    throw validation_error("timestep embedding width must match the hidden width");
  }

  ToyDiT m;
  m.cfg_ = cfg;
  const int hidden = cfg.hidden_dim;
  const int side = cfg.image_size / cfg.patch_size;
  const int tokens = side * side;
  const int pdim = cfg.patch_size * cfg.patch_size;

  m.registry_.push_back({"patch_embed", pdim, hidden, tokens});
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    m.registry_.push_back({p + "adaln_mod", hidden, 6 * hidden, 1});
    m.registry_.push_back({p + "qkv", hidden, 3 * hidden, tokens});
    m.registry_.push_back({p + "attn_out", hidden, hidden, tokens});
    m.registry_.push_back({p + "mlp_up", hidden, 4 * hidden, tokens});
    m.registry_.push_back({p + "mlp_down", 4 * hidden, hidden, tokens});
  }
  m.registry_.push_back({"head", hidden, pdim, tokens});

  Rng master(cfg.seed);
  for (std::size_t l = 0; l < m.registry_.size(); ++l) {
    const LayerInfo& info = m.registry_[l];
    Tensor w({info.d_in, info.d_out});
    const bool zero_init = info.name.find("adaln_mod") != std::string::npos;
    if (!zero_init) {
      Rng lr = master.child(static_cast<std::uint64_t>(l));
      const double sd = 1.0 / std::sqrt(static_cast<double>(info.d_in));
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = as_f32(lr.next_normal() * sd);
    }
    m.weights_.push_back(std::move(w));
  }

  // Fixed sinusoidal position signal over token index; rounded to 32-bit so
  // a serialized copy reloads to the identical value.
  m.pos_embed_ = Tensor({tokens, hidden});
  for (int p = 0; p < tokens; ++p) {
    for (int j = 0; j < hidden / 2; ++j) {
      const double freq = std::exp(-std::log(10000.0) * (2.0 * j) / hidden);
      m.pos_embed_.at(p, 2 * j) = as_f32(std::sin(p * freq));
      m.pos_embed_.at(p, 2 * j + 1) = as_f32(std::cos(p * freq));
    }
  }
  return m;
}

int ToyDiT::layer_index(const std::string& name) const {
  for (std::size_t i = 0; i < registry_.size(); ++i) {
    if (registry_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

int ToyDiT::token_count() const {
  const int side = cfg_.image_size / cfg_.patch_size;
  return side * side;
}

int ToyDiT::patch_dim() const { return cfg_.patch_size * cfg_.patch_size; }

int ToyDiT::pixel_count() const { return cfg_.image_size * cfg_.image_size; }

Tensor ToyDiT::timestep_embedding(int tau) const {
  const int d = cfg_.hidden_dim;
  Tensor e({1, d});
  for (int j = 0; j < d / 2; ++j) {
    const double freq = std::exp(-std::log(10000.0) * (2.0 * j) / d);
    e.at(0, 2 * j) = std::sin(tau * freq);
    e.at(0, 2 * j + 1) = std::cos(tau * freq);
  }
  return e;
}

Tensor ToyDiT::apply_layer(int idx, const Tensor& x, const QuantizedModel* qm,
                           LayerTap* tap) const {
  if (tap) tap->on_input(idx, x);
  if (qm && qm->layers[idx].has_value()) {
    const QuantizedLayer& ql = *qm->layers[idx];
    QuantizedTensor xq =
        ql.act_params.empty()
            ? dynamic_quantize_activation(x, ql.weights.layout.group_size, qm->bits_a)
            : static_quantize_activation(x, ql.weights.layout, ql.act_params);
    return quantized_matmul(xq, ql.weights);
  }
  return matmul(x, weights_[idx]);
}

Tensor ToyDiT::forward(const Tensor& x_t, int tau, const QuantizedModel* qm,
                       LayerTap* tap) const {
  const int pixels = pixel_count();
  if (x_t.rank() != 2 || x_t.cols() != pixels) {
    throw dim_error("expected input of shape [n x " + std::to_string(pixels) + "]");
  }
  if (tau < 0 || tau >= DiffusionSchedule::kTrainSteps) {
    throw validation_error("timestep " + std::to_string(tau) + " outside the training chain");
  }
  if (qm && static_cast<int>(qm->layers.size()) != static_cast<int>(registry_.size())) {
    throw config_error("quantized plan covers " + std::to_string(qm->layers.size()) +
                       " layers but the model has " + std::to_string(registry_.size()));
  }

  const int n = x_t.rows();
  const int hidden = cfg_.hidden_dim;
  const int tokens = token_count();
  const int pdim = patch_dim();
  const int side = cfg_.image_size / cfg_.patch_size;
  const int heads = cfg_.heads;
  const int hd = hidden / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor temb = timestep_embedding(tau);
  Tensor out({n, pixels});

  for (int b = 0; b < n; ++b) {
    // patchify: token (pr, pc), in-patch offset (dr, dc)
    Tensor tok({tokens, pdim});
    for (int pr = 0; pr < side; ++pr)
      for (int pc = 0; pc < side; ++pc)
        for (int dr = 0; dr < cfg_.patch_size; ++dr)
          for (int dc = 0; dc < cfg_.patch_size; ++dc) {
            const int r = pr * cfg_.patch_size + dr;
            const int c = pc * cfg_.patch_size + dc;
            tok.at(pr * side + pc, dr * cfg_.patch_size + dc) =
                x_t.at(b, r * cfg_.image_size + c);
          }

    Tensor x = apply_layer(0, tok, qm, tap);  // [tokens x hidden]
    for (int t = 0; t < tokens; ++t)
      for (int j = 0; j < hidden; ++j) x.at(t, j) += pos_embed_.at(t, j);

    for (int blk = 0; blk < cfg_.blocks; ++blk) {
      const int li = 1 + 5 * blk;
      // modulation vectors from the timestep signal; zero-initialized
      // projections leave them at zero, so a fresh model runs plain
      // pre-norm blocks (gates apply as 1 + g).
      Tensor mod = apply_layer(li + 0, temb, qm, tap);  // [1 x 6*hidden]
      const double* shift_a = mod.data();
      const double* scale_a = mod.data() + hidden;
      const double* gate_a = mod.data() + 2 * hidden;
      const double* shift_m = mod.data() + 3 * hidden;
      const double* scale_m = mod.data() + 4 * hidden;
      const double* gate_m = mod.data() + 5 * hidden;

      Tensor h = x;
      layer_norm_inplace(h);
      modulate_inplace(h, shift_a, scale_a);

      Tensor qkv = apply_layer(li + 1, h, qm, tap);  // [tokens x 3*hidden]
      Tensor attn({tokens, hidden});
      Tensor scores({tokens, tokens});
      for (int hh = 0; hh < heads; ++hh) {
        const int qo = hh * hd, ko = hidden + hh * hd, vo = 2 * hidden + hh * hd;
        for (int i = 0; i < tokens; ++i) {
          for (int j = 0; j < tokens; ++j) {
            double s = 0.0;
            for (int k = 0; k < hd; ++k) s += qkv.at(i, qo + k) * qkv.at(j, ko + k);
            scores.at(i, j) = s * attn_scale;
          }
          softmax_row(&scores.at(i, 0), tokens);
          for (int k = 0; k < hd; ++k) {
            double acc = 0.0;
            for (int j = 0; j < tokens; ++j) acc += scores.at(i, j) * qkv.at(j, vo + k);
            attn.at(i, hh * hd + k) = acc;
          }
        }
      }
      Tensor ao = apply_layer(li + 2, attn, qm, tap);
      for (int t = 0; t < tokens; ++t)
        for (int j = 0; j < hidden; ++j) x.at(t, j) += (1.0 + gate_a[j]) * ao.at(t, j);

      Tensor h2 = x;
      layer_norm_inplace(h2);
      modulate_inplace(h2, shift_m, scale_m);
      Tensor up = apply_layer(li + 3, h2, qm, tap);
      for (std::size_t i = 0; i < up.size(); ++i) up[i] = gelu_tanh(up[i]);
      Tensor down = apply_layer(li + 4, up, qm, tap);
      for (int t = 0; t < tokens; ++t)
        for (int j = 0; j < hidden; ++j) x.at(t, j) += (1.0 + gate_m[j]) * down.at(t, j);
    }

    layer_norm_inplace(x);
    Tensor otok = apply_layer(static_cast<int>(registry_.size()) - 1, x, qm, tap);

    for (int pr = 0; pr < side; ++pr)
      for (int pc = 0; pc < side; ++pc)
        for (int dr = 0; dr < cfg_.patch_size; ++dr)
          for (int dc = 0; dc < cfg_.patch_size; ++dc) {
            const int r = pr * cfg_.patch_size + dr;
            const int c = pc * cfg_.patch_size + dc;
            out.at(b, r * cfg_.image_size + c) =
                otok.at(pr * side + pc, dr * cfg_.patch_size + dc);
          }
  }
  return out;
}

DiffusionSchedule DiffusionSchedule::create(int steps) {
  if (steps < 1 || steps > kTrainSteps) {
    throw validation_error("step count must lie in [1, " + std::to_string(kTrainSteps) + "]");
  }
  // full training chain first
  std::vector<double> abar(kTrainSteps);
  double prod = 1.0;
  for (int i = 0; i < kTrainSteps; ++i) {
    const double beta = 1e-4 + (0.02 - 1e-4) * static_cast<double>(i) / (kTrainSteps - 1);
    prod *= 1.0 - beta;
    abar[i] = prod;
  }
  DiffusionSchedule s;
  s.steps = steps;
  for (int i = 0; i < steps; ++i) {
    const int tau = (i + 1) * kTrainSteps / steps - 1;
    s.taus.push_back(tau);
    s.alpha_bar.push_back(abar[tau]);
  }
  return s;
}

Tensor ddim_sample(const ToyDiT& model, const DiffusionSchedule& sched, int n,
                   std::uint64_t seed, const QuantizedModel* qm, LayerTap* tap) {
  if (n < 1) throw validation_error("sample count must be positive");
  const int pixels = model.pixel_count();

  Tensor x({n, pixels});
  Rng rng(seed);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.next_normal();

  Tensor row({1, pixels});
  for (int i = sched.steps - 1; i >= 0; --i) {
    const int step_index = sched.steps - 1 - i;  // 0 = noisiest
    const int tau = sched.taus[i];
    const double ab = sched.alpha_bar[i];
    const double ab_prev = i > 0 ? sched.alpha_bar[i - 1] : 1.0;
    const double sqrt_ab = std::sqrt(ab);
    const double sqrt_1mab = std::sqrt(1.0 - ab);
    const double sqrt_abp = std::sqrt(ab_prev);
    const double sqrt_1mabp = std::sqrt(1.0 - ab_prev);

    for (int b = 0; b < n; ++b) {
      if (tap) tap->on_step(b, step_index, tau);
      for (int j = 0; j < pixels; ++j) row.at(0, j) = x.at(b, j);
      Tensor eps = model.forward(row, tau, qm, tap);
      for (int j = 0; j < pixels; ++j) {
        const double e = eps.at(0, j);
        const double x0 = (x.at(b, j) - sqrt_1mab * e) / sqrt_ab;
        x.at(b, j) = sqrt_abp * x0 + sqrt_1mabp * e;
      }
    }
  }
  return x;
}

namespace {

class TimelineRecorder : public LayerTap {
 public:
  TimelineRecorder(int layers, bool keep_raw) : layers_(layers), keep_raw_(keep_raw) {}

  void on_step(int, int step, int) override { step_ = step; }

  void on_input(int layer, const Tensor& x) override {
    auto& buf = cells_[{layer, step_}];
    buf.insert(buf.end(), x.data(), x.data() + x.size());
  }

  std::vector<ActivationSnapshot> finalize(const std::vector<LayerInfo>& registry, int steps) {
    std::vector<ActivationSnapshot> out;
    out.reserve(static_cast<std::size_t>(layers_) * steps);
    for (int l = 0; l < layers_; ++l) {
      for (int s = 0; s < steps; ++s) {
        auto it = cells_.find({l, s});
        if (it == cells_.end()) throw validation_error("missing activation cell");
        const int count = static_cast<int>(it->second.size());
        Tensor slab = Tensor::from_data({count}, std::move(it->second));
        out.push_back(summarize_activation(registry[l].name, s, slab, keep_raw_));
      }
    }
    return out;
  }

 private:
  int layers_;
  bool keep_raw_;
  int step_ = 0;
  std::map<std::pair<int, int>, std::vector<double>> cells_;
};

}  // namespace

std::vector<ActivationSnapshot> record_activations(const ToyDiT& model,
                                                   const DiffusionSchedule& sched, int n,
                                                   std::uint64_t seed, bool keep_raw) {
  TimelineRecorder rec(static_cast<int>(model.registry().size()), keep_raw);
  ddim_sample(model, sched, n, seed, nullptr, &rec);
  return rec.finalize(model.registry(), sched.steps);
}

}  // namespace qdit
