#include "qdit/bundle.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <utility>

#include "qdit/error.hpp"

namespace qdit {

namespace {

constexpr char kMagic[4] = {'Q', 'D', 'T', 'B'};
constexpr std::uint32_t kVersion = 1;

void append_u8(std::string& buf, std::uint8_t v) { buf.push_back(static_cast<char>(v)); }

void append_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_f32(std::string& buf, float v) { append_u32(buf, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw io_error(std::string("bundle truncated reading ") + what + " at offset " +
                     std::to_string(pos_));
    }
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_bundle(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::set<std::string> names;
  std::string buf;
  buf.append(kMagic, 4);
  append_u32(buf, kVersion);
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw validation_error("too many tensors");
  }
  append_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.empty() || t.name.size() > 65535) {
      throw validation_error("tensor name must have 1..65535 bytes");
    }
    if (!names.insert(t.name).second) {
      throw validation_error("duplicate tensor name '" + t.name + "'");
    }
    if (t.value.rank() < 1 || t.value.rank() > 255) {
      throw validation_error("tensor rank must lie in [1, 255]");
    }
    append_u16(buf, static_cast<std::uint16_t>(t.name.size()));
    buf += t.name;
    append_u8(buf, static_cast<std::uint8_t>(t.value.rank()));
    for (int d = 0; d < t.value.rank(); ++d) {
      append_u32(buf, static_cast<std::uint32_t>(t.value.dim(d)));
    }
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      const double v = t.value[i];
      const float f = static_cast<float>(v);
      if (static_cast<double>(f) != v && !std::isnan(v)) {
        throw validation_error("tensor '" + t.name +
                               "' holds a value that does not survive 32-bit storage");
      }
      append_f32(buf, f);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw io_error("short write to '" + path + "'");
}

std::vector<NamedTensor> load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) throw io_error("read failure on '" + path + "'");

  Reader r(std::move(bytes));
  const std::string magic = r.str(4, "magic");
  if (magic != std::string(kMagic, 4)) {
    throw io_error("bad magic in '" + path + "' at offset 0");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw io_error("unsupported bundle version " + std::to_string(version) + " at offset 4");
  }
  const std::uint32_t count = r.u32("tensor count");

  std::vector<NamedTensor> out;
  std::set<std::string> names;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = r.u16("name length");
    if (name_len == 0) throw io_error("empty tensor name at offset " + std::to_string(r.offset()));
    const std::string name = r.str(name_len, "name");
    if (!names.insert(name).second) {
      throw io_error("duplicate tensor name '" + name + "' at offset " +
                     std::to_string(r.offset()));
    }
    const std::uint8_t rank = r.u8("rank");
    if (rank == 0) throw io_error("rank 0 tensor at offset " + std::to_string(r.offset()));
    std::vector<int> shape;
    std::size_t total = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32("dim");
      if (dim == 0 || dim > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw io_error("bad dimension " + std::to_string(dim) + " at offset " +
                       std::to_string(r.offset()));
      }
      if (total > (std::size_t(1) << 40) / dim) {
        throw io_error("tensor too large at offset " + std::to_string(r.offset()));
      }
      total *= dim;
      shape.push_back(static_cast<int>(dim));
    }
    std::vector<double> data(total);
    r.need(4 * total, "payload");
    for (std::size_t i = 0; i < total; ++i) data[i] = static_cast<double>(r.f32("payload"));
    out.push_back({name, Tensor::from_data(std::move(shape), std::move(data))});
  }
  if (r.remaining() != 0) {
    throw io_error("trailing data at offset " + std::to_string(r.offset()));
  }
  return out;
}

namespace {

Tensor scalar_row(std::initializer_list<double> vals) {
  std::vector<double> v(vals);
  const int count = static_cast<int>(v.size());
  return Tensor::from_data({count}, std::move(v));
}

// zero points can exceed what a 32-bit real stores exactly, so they travel
// as (floor(z / 2^16), z mod 2^16) pairs
void append_zp_pair(std::vector<double>& out, std::int64_t z) {
  const std::int64_t hi = z >> 16;
  const std::int64_t lo = z & 0xFFFF;
  if (hi > (std::int64_t(1) << 24) || hi < -(std::int64_t(1) << 24)) {
    throw validation_error("zero point " + std::to_string(z) + " out of storable range");
  }
  out.push_back(static_cast<double>(hi));
  out.push_back(static_cast<double>(lo));
}

std::int64_t read_zp_pair(double hi, double lo, const std::string& name) {
  if (hi != std::floor(hi) || lo != std::floor(lo) || lo < 0 || lo > 65535) {
    throw io_error("corrupt zero point in '" + name + "'");
  }
  return static_cast<std::int64_t>(hi) * 65536 + static_cast<std::int64_t>(lo);
}

const NamedTensor& expect(const std::vector<NamedTensor>& ts, std::size_t idx,
                          const std::string& name) {
  if (idx >= ts.size()) throw io_error("bundle ends before tensor '" + name + "'");
  if (ts[idx].name != name) {
    throw io_error("expected tensor '" + name + "' but found '" + ts[idx].name + "'");
  }
  return ts[idx];
}

int int_field(const Tensor& t, std::size_t i, const std::string& what) {
  const double v = t[i];
  if (v != std::floor(v) || v < std::numeric_limits<int>::min() ||
      v > std::numeric_limits<int>::max()) {
    throw io_error("non-integer " + what);
  }
  return static_cast<int>(v);
}

}  // namespace

void save_model(const std::string& path, const ToyDiT& model) {
  const ToyDiTConfig& cfg = model.config();
  std::vector<NamedTensor> ts;
  ts.push_back({"config",
                scalar_row({static_cast<double>(cfg.image_size),
                            static_cast<double>(cfg.patch_size),
                            static_cast<double>(cfg.hidden_dim), static_cast<double>(cfg.heads),
                            static_cast<double>(cfg.blocks),
                            static_cast<double>(cfg.timestep_embed_dim),
                            static_cast<double>(cfg.seed & 0xFFFF),
                            static_cast<double>((cfg.seed >> 16) & 0xFFFF),
                            static_cast<double>((cfg.seed >> 32) & 0xFFFF),
                            static_cast<double>((cfg.seed >> 48) & 0xFFFF)})});
  ts.push_back({"pos_embed", model.pos_embed()});
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    ts.push_back({model.registry()[i].name, model.layer_weights(static_cast<int>(i))});
  }
  save_bundle(path, ts);
}

ToyDiT load_model(const std::string& path) {
  const std::vector<NamedTensor> ts = load_bundle(path);
  const NamedTensor& meta = expect(ts, 0, "config");
  if (meta.value.size() != 10) throw io_error("model config tensor must hold 10 values");
  ToyDiTConfig cfg;
  cfg.image_size = int_field(meta.value, 0, "image size");
  cfg.patch_size = int_field(meta.value, 1, "patch size");
  cfg.hidden_dim = int_field(meta.value, 2, "hidden width");
  cfg.heads = int_field(meta.value, 3, "head count");
  cfg.blocks = int_field(meta.value, 4, "block count");
  cfg.timestep_embed_dim = int_field(meta.value, 5, "timestep width");
  cfg.seed = 0;
  for (int k = 0; k < 4; ++k) {
    const int limb = int_field(meta.value, 6 + k, "seed limb");
    if (limb < 0 || limb > 0xFFFF) throw io_error("seed limb out of range");
    cfg.seed |= static_cast<std::uint64_t>(limb) << (16 * k);
  }

  ToyDiT model = ToyDiT::init_random(cfg);
  const NamedTensor& pe = expect(ts, 1, "pos_embed");
  if (!pe.value.same_shape(model.pos_embed())) throw io_error("pos_embed shape mismatch");
  model.pos_embed() = pe.value;
  if (ts.size() != 2 + model.registry().size()) {
    throw io_error("model bundle holds " + std::to_string(ts.size()) + " tensors, expected " +
                   std::to_string(2 + model.registry().size()));
  }
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    const NamedTensor& w = expect(ts, 2 + i, model.registry()[i].name);
    if (!w.value.same_shape(model.layer_weights(static_cast<int>(i)))) {
      throw io_error("weight shape mismatch for '" + w.name + "'");
    }
    model.layer_weights(static_cast<int>(i)) = w.value;
  }
  return model;
}

void save_quantized(const std::string& path, const QuantizedModel& qm,
                    const std::vector<LayerInfo>& registry) {
  if (qm.layers.size() != registry.size()) {
    throw dim_error("quantized plan covers " + std::to_string(qm.layers.size()) +
                    " layers but the registry has " + std::to_string(registry.size()));
  }
  std::vector<NamedTensor> ts;
  ts.push_back({"qconfig", scalar_row({static_cast<double>(qm.bits_a),
                                       static_cast<double>(registry.size())})});
  std::vector<double> engaged(registry.size());
  for (std::size_t i = 0; i < registry.size(); ++i) engaged[i] = qm.layers[i].has_value();
  ts.push_back({"engaged", Tensor::from_data({static_cast<int>(registry.size())},
                                             std::move(engaged))});

  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (!qm.layers[i].has_value()) continue;
    const QuantizedLayer& ql = *qm.layers[i];
    const QuantizedTensor& w = ql.weights;
    const std::string& name = registry[i].name;
    if (w.shape.size() != 2 || w.shape[0] != registry[i].d_in ||
        w.shape[1] != registry[i].d_out) {
      throw dim_error("quantized weights for '" + name + "' do not match the registry shape");
    }

    std::vector<double> codes(w.codes.size());
    for (std::size_t k = 0; k < w.codes.size(); ++k) codes[k] = w.codes[k];
    ts.push_back({name + ".codes", Tensor::from_data({w.shape[0], w.shape[1]},
                                                     std::move(codes))});
    ts.push_back({name + ".wmeta",
                  scalar_row({static_cast<double>(w.bits),
                              static_cast<double>(w.layout.group_size),
                              static_cast<double>(w.per_column ? 1 : 0),
                              static_cast<double>(ql.act_params.size())})});
    std::vector<double> scales(w.params.size());
    std::vector<double> zps;
    zps.reserve(2 * w.params.size());
    for (std::size_t k = 0; k < w.params.size(); ++k) {
      scales[k] = w.params[k].scale;
      append_zp_pair(zps, w.params[k].zero_point);
    }
    ts.push_back({name + ".wscales", Tensor::from_data({static_cast<int>(w.params.size())},
                                                       std::move(scales))});
    ts.push_back({name + ".wzp", Tensor::from_data({static_cast<int>(w.params.size()), 2},
                                                   std::move(zps))});
    if (!ql.act_params.empty()) {
      std::vector<double> ascales(ql.act_params.size());
      std::vector<double> azps;
      azps.reserve(2 * ql.act_params.size());
      for (std::size_t k = 0; k < ql.act_params.size(); ++k) {
        ascales[k] = ql.act_params[k].scale;
        append_zp_pair(azps, ql.act_params[k].zero_point);
      }
      ts.push_back({name + ".ascales",
                    Tensor::from_data({static_cast<int>(ql.act_params.size())},
                                      std::move(ascales))});
      ts.push_back({name + ".azp",
                    Tensor::from_data({static_cast<int>(ql.act_params.size()), 2},
                                      std::move(azps))});
    }
  }
  save_bundle(path, ts);
}

QuantizedModel load_quantized(const std::string& path,
                              const std::vector<LayerInfo>& registry) {
  const std::vector<NamedTensor> ts = load_bundle(path);
  const NamedTensor& qc = expect(ts, 0, "qconfig");
  if (qc.value.size() != 2) throw io_error("qconfig tensor must hold 2 values");
  QuantizedModel qm;
  qm.bits_a = int_field(qc.value, 0, "activation bit width");
  if (qm.bits_a < 2 || qm.bits_a > 8) throw io_error("activation bit width out of range");
  const int n_layers = int_field(qc.value, 1, "layer count");
  if (n_layers != static_cast<int>(registry.size())) {
    throw io_error("bundle covers " + std::to_string(n_layers) + " layers but the registry has " +
                   std::to_string(registry.size()));
  }
  const NamedTensor& engaged = expect(ts, 1, "engaged");
  if (engaged.value.size() != registry.size()) throw io_error("engagement table size mismatch");

  qm.layers.resize(registry.size());
  std::size_t idx = 2;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const int flag = int_field(engaged.value, i, "engagement flag");
    if (flag == 0) continue;
    if (flag != 1) throw io_error("engagement flag must be 0 or 1");
    const std::string& name = registry[i].name;

    const NamedTensor& codes = expect(ts, idx++, name + ".codes");
    if (codes.value.rank() != 2 || codes.value.dim(0) != registry[i].d_in ||
        codes.value.dim(1) != registry[i].d_out) {
      throw io_error("code shape mismatch for '" + name + "'");
    }
    const NamedTensor& wmeta = expect(ts, idx++, name + ".wmeta");
    if (wmeta.value.size() != 4) throw io_error("wmeta tensor must hold 4 values");
    const int bits = int_field(wmeta.value, 0, "weight bit width");
    const int group_size = int_field(wmeta.value, 1, "group size");
    const int per_column = int_field(wmeta.value, 2, "per-column flag");
    const int n_act = int_field(wmeta.value, 3, "activation param count");
    if (bits < 2 || bits > 8) throw io_error("weight bit width out of range");
    if (group_size < 1) throw io_error("group size out of range");
    if (per_column != 0 && per_column != 1) throw io_error("per-column flag must be 0 or 1");

    QuantizedLayer ql;
    QuantizedTensor& w = ql.weights;
    w.shape = {registry[i].d_in, registry[i].d_out};
    w.layout = GroupLayout::over(registry[i].d_in, group_size);
    w.per_column = per_column == 1;
    w.bits = bits;
    w.codes.resize(codes.value.size());
    const int max_code = (1 << bits) - 1;
    for (std::size_t k = 0; k < codes.value.size(); ++k) {
      const double v = codes.value[k];
      if (v != std::floor(v) || v < 0 || v > max_code) {
        throw io_error("code out of range in '" + name + "'");
      }
      w.codes[k] = static_cast<std::int32_t>(v);
    }

    const std::size_t n_wparams =
        static_cast<std::size_t>(w.layout.group_count) * (w.per_column ? registry[i].d_out : 1);
    const NamedTensor& wscales = expect(ts, idx++, name + ".wscales");
    const NamedTensor& wzp = expect(ts, idx++, name + ".wzp");
    if (wscales.value.size() != n_wparams) throw io_error("scale count mismatch in '" + name + "'");
    if (wzp.value.rank() != 2 || wzp.value.dim(0) != static_cast<int>(n_wparams) ||
        wzp.value.dim(1) != 2) {
      throw io_error("zero-point table mismatch in '" + name + "'");
    }
    w.params.resize(n_wparams);
    for (std::size_t k = 0; k < n_wparams; ++k) {
      w.params[k].scale = wscales.value[k];
      w.params[k].zero_point = read_zp_pair(wzp.value[2 * k], wzp.value[2 * k + 1], name);
      w.params[k].bits = bits;
      if (!(w.params[k].scale > 0.0)) throw io_error("non-positive scale in '" + name + "'");
    }

    if (n_act > 0) {
      if (n_act != w.layout.group_count) {
        throw io_error("activation param count mismatch in '" + name + "'");
      }
      const NamedTensor& ascales = expect(ts, idx++, name + ".ascales");
      const NamedTensor& azp = expect(ts, idx++, name + ".azp");
      if (ascales.value.size() != static_cast<std::size_t>(n_act) || azp.value.rank() != 2 ||
          azp.value.dim(0) != n_act || azp.value.dim(1) != 2) {
        throw io_error("activation param table mismatch in '" + name + "'");
      }
      ql.act_params.resize(n_act);
      for (int k = 0; k < n_act; ++k) {
        ql.act_params[k].scale = ascales.value[k];
        ql.act_params[k].zero_point = read_zp_pair(azp.value[2 * k], azp.value[2 * k + 1], name);
        ql.act_params[k].bits = qm.bits_a;
        if (!(ql.act_params[k].scale > 0.0)) throw io_error("non-positive scale in '" + name + "'");
      }
    }
    qm.layers[i] = std::move(ql);
  }
  if (idx != ts.size()) throw io_error("unexpected extra tensors in quantized bundle");
  return qm;
}

}  // namespace qdit
