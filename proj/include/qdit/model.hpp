#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qdit/metrics.hpp"
#include "qdit/quant.hpp"
#include "qdit/tensor.hpp"

namespace qdit {

// An 8x8-pixel denoiser in the DiT mold: patchify -> transformer blocks with
// timestep-conditioned modulation -> linear head back to pixels. Small enough
// to sample on one core, structured enough that every linear layer can swap
// between full-precision and quantized execution.
struct ToyDiTConfig {
  int image_size = 8;
  int patch_size = 2;
  int hidden_dim = 288;
  int heads = 4;
  int blocks = 4;
  int timestep_embed_dim = 288;
  std::uint64_t seed = 0;
};

// One quantizable linear layer: its stable name, weight shape, and the token
// count its input carries (used by the bit-operations cost model).
struct LayerInfo {
  std::string name;
  int d_in = 0;
  int d_out = 0;
  int tokens = 0;
};

// A registry layer's quantized stand-in. Empty act_params means activations
// are quantized dynamically from each sample's own min/max; otherwise the
// calibrated per-group parameters are applied (out-of-range values clip).
struct QuantizedLayer {
  QuantizedTensor weights;
  std::vector<QuantParams> act_params;
};

// Registry-aligned execution plan for quantized inference. A disengaged
// entry leaves that layer in full precision.
struct QuantizedModel {
  int bits_a = 8;
  std::vector<std::optional<QuantizedLayer>> layers;
};

// Observer of registry-layer inputs during a forward pass; lets calibration
// and diagnostics reuse the exact inference path.
class LayerTap {
 public:
  virtual ~LayerTap() = default;
  virtual void on_step(int sample, int step, int tau) { (void)sample, (void)step, (void)tau; }
  virtual void on_input(int layer, const Tensor& x) = 0;
};

class ToyDiT {
 public:
  static ToyDiT init_random(const ToyDiTConfig& cfg);

  const ToyDiTConfig& config() const { return cfg_; }
  const std::vector<LayerInfo>& registry() const { return registry_; }
  int layer_index(const std::string& name) const;  // -1 when absent

  const Tensor& layer_weights(int idx) const { return weights_.at(idx); }
  Tensor& layer_weights(int idx) { return weights_.at(idx); }
  const Tensor& pos_embed() const { return pos_embed_; }
  Tensor& pos_embed() { return pos_embed_; }

  int token_count() const;             // (image/patch)^2
  int patch_dim() const;               // patch^2 pixels per token
  int pixel_count() const;             // image^2
  Tensor timestep_embedding(int tau) const;  // [1 x hidden]

  // x_t: [n x pixels], tau: training-chain timestep in [0, 1000). Returns the
  // noise prediction, same shape. Quantized mode processes each sample
  // independently; excluded (disengaged) layers run in full precision.
  Tensor forward(const Tensor& x_t, int tau, const QuantizedModel* qm = nullptr,
                 LayerTap* tap = nullptr) const;

 private:
  ToyDiT() = default;
  Tensor apply_layer(int idx, const Tensor& x, const QuantizedModel* qm, LayerTap* tap) const;

  ToyDiTConfig cfg_;
  std::vector<LayerInfo> registry_;
  std::vector<Tensor> weights_;
  Tensor pos_embed_;
};

// Noise schedule: a 1000-step training chain with linearly spaced betas
// (1e-4 to 0.02), subsampled to `steps` sampling positions.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<int> taus;          // training timestep per sampling position, ascending
  std::vector<double> alpha_bar;  // cumulative alpha at each tau

  static DiffusionSchedule create(int steps);
  static constexpr int kTrainSteps = 1000;
};

// Deterministic DDIM sampling (eta = 0): starts from seeded Gaussian noise,
// steps through the schedule from the noisiest position down, returns
// [n x pixels] samples. The initial noise is drawn row-major from Rng(seed),
// so the first samples are identical regardless of n.
Tensor ddim_sample(const ToyDiT& model, const DiffusionSchedule& sched, int n,
                   std::uint64_t seed, const QuantizedModel* qm = nullptr,
                   LayerTap* tap = nullptr);

// Runs full-precision sampling while summarizing every registry layer's
// input at every sampling step, pooled across the n samples. Returns
// registry_size * steps snapshots ordered by (layer, step).
std::vector<ActivationSnapshot> record_activations(const ToyDiT& model,
                                                   const DiffusionSchedule& sched, int n,
                                                   std::uint64_t seed, bool keep_raw = false);

}  // namespace qdit
