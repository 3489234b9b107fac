#pragma once

#include <string>
#include <vector>

#include "qdit/model.hpp"
#include "qdit/tensor.hpp"

namespace qdit {

// One entry of the on-disk container.
struct NamedTensor {
  std::string name;
  Tensor value;
};

// Binary container: magic "QDTB", format version (u32), tensor count (u32);
// per tensor a length-prefixed UTF-8 name (u16), rank (u8), dims (u32 each),
// then the payload as 32-bit little-endian reals, row-major. All multi-byte
// fields little-endian. Values round-trip bit-exactly as long as they are
// 32-bit representable, which every producer in this library guarantees.
void save_bundle(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_bundle(const std::string& path);

// Whole-model persistence: a config tensor, the position signal, and every
// registry layer's weights in registry order.
void save_model(const std::string& path, const ToyDiT& model);
ToyDiT load_model(const std::string& path);

// Quantized-plan persistence: per engaged layer its codes, group metadata,
// scales, and zero points (zero points split into two 16-bit halves so they
// survive the 32-bit real payload exactly). Disengaged layers are recorded
// in the engagement table only.
void save_quantized(const std::string& path, const QuantizedModel& qm,
                    const std::vector<LayerInfo>& registry);
QuantizedModel load_quantized(const std::string& path, const std::vector<LayerInfo>& registry);

}  // namespace qdit
