#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "qdit/bundle.hpp"
#include "qdit/config.hpp"
#include "qdit/error.hpp"
#include "qdit/gptq.hpp"
#include "qdit/quant.hpp"
#include "qdit/rng.hpp"

using namespace qdit;

namespace {

std::string temp_path(const std::string& stem) {
  static int counter = 0;
  return (std::filesystem::temp_directory_path() /
          (stem + "_" + std::to_string(counter++) + ".qdtb"))
      .string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

TEST_SUITE("bundle_config") {

TEST_CASE("container round-trips tensors bit-exactly in order") {
  Rng rng(1);
  std::vector<NamedTensor> ts;
  ts.push_back({"alpha", Tensor::from_data({3}, {f32(0.1), -2.0, f32(3.5e-12)})});
  Tensor m({4, 5});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = f32(rng.next_normal());
  ts.push_back({"beta.weights", m});
  Tensor cube({2, 2, 2});
  for (std::size_t i = 0; i < cube.size(); ++i) cube[i] = static_cast<double>(i);
  ts.push_back({"gamma", cube});

  const std::string path = temp_path("roundtrip");
  save_bundle(path, ts);
  const std::vector<NamedTensor> back = load_bundle(path);
  REQUIRE(back.size() == ts.size());
  for (std::size_t t = 0; t < ts.size(); ++t) {
    CHECK(back[t].name == ts[t].name);
    REQUIRE(back[t].value.same_shape(ts[t].value));
    for (std::size_t i = 0; i < ts[t].value.size(); ++i) {
      CHECK(back[t].value[i] == ts[t].value[i]);
    }
  }
  // save of the loaded list reproduces the file byte for byte
  const std::string path2 = temp_path("roundtrip");
  save_bundle(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("save rejects malformed tensor lists") {
  const std::string path = temp_path("savefail");
  Tensor t = Tensor::from_data({2}, {1.0, 2.0});
  CHECK_THROWS_AS(save_bundle(path, {{"a", t}, {"a", t}}), validation_error);
  CHECK_THROWS_AS(save_bundle(path, {{"", t}}), validation_error);
  // 1/3 has no exact 32-bit form
  CHECK_THROWS_AS(save_bundle(path, {{"a", Tensor::from_data({1}, {1.0 / 3.0})}}),
                  validation_error);
}

TEST_CASE("load reports corruption with offsets") {
  const std::string path = temp_path("corrupt");
  Tensor t = Tensor::from_data({2}, {1.0, 2.0});
  save_bundle(path, {{"aa", t}, {"ab", t}});
  const std::string good = slurp(path);

  CHECK_THROWS_AS(load_bundle(temp_path("missing")), io_error);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("offset 0"), io_error);
  }
  SUBCASE("bad version") {
    std::string bad = good;
    bad[4] = 9;
    spit(path, bad);
    CHECK_THROWS_AS(load_bundle(path), io_error);
  }
  SUBCASE("truncated payload") {
    spit(path, good.substr(0, good.size() - 3));
    try {
      load_bundle(path);
      FAIL("expected an error");
    } catch (const io_error& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    spit(path, good + "zz");
    CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("trailing"), io_error);
  }
  SUBCASE("duplicate names") {
    std::string bad = good;
    const std::size_t second_name = good.find("ab");
    REQUIRE(second_name != std::string::npos);
    bad[second_name + 1] = 'a';
    spit(path, bad);
    CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("duplicate"), io_error);
  }
}

TEST_CASE("model bundles restore an identical model") {
  ToyDiTConfig mc;
  mc.seed = 909;
  ToyDiT model = ToyDiT::init_random(mc);
  model.layer_weights(3).at(7, 7) = f32(0.125);  // drift from the seeded init

  const std::string path = temp_path("model");
  save_model(path, model);
  ToyDiT back = load_model(path);

  CHECK(back.config().seed == mc.seed);
  CHECK(back.config().hidden_dim == model.config().hidden_dim);
  REQUIRE(back.registry().size() == model.registry().size());
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    CHECK(back.registry()[i].name == model.registry()[i].name);
    const Tensor& wa = model.layer_weights(static_cast<int>(i));
    const Tensor& wb = back.layer_weights(static_cast<int>(i));
    REQUIRE(wa.same_shape(wb));
    for (std::size_t k = 0; k < wa.size(); ++k) CHECK(wa[k] == wb[k]);
  }

  Rng rng(5);
  Tensor x({1, 64});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.next_normal();
  Tensor ya = model.forward(x, 123);
  Tensor yb = back.forward(x, 123);
  for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya[i] == yb[i]);
}

TEST_CASE("quantized bundles restore codes and parameters exactly") {
  ToyDiTConfig mc;
  mc.seed = 11;
  ToyDiT model = ToyDiT::init_random(mc);
  const std::vector<LayerInfo>& reg = model.registry();

  QuantizedModel qm;
  qm.bits_a = 6;
  qm.layers.resize(reg.size());
  for (std::size_t i = 0; i < reg.size(); ++i) {
    if (i % 3 == 2) continue;  // leave a few layers in full precision
    QuantizedLayer ql;
    ql.weights = group_quantize_weights(model.layer_weights(static_cast<int>(i)),
                                        i % 2 ? 48 : reg[i].d_in, i % 2 ? 4 : 8);
    if (i % 3 == 0) {
      // static activation params, one per weight group
      std::vector<double> mn(reg[i].d_in, -1.0), mx(reg[i].d_in, 1.0);
      mn[0] = -2.5;
      ql.act_params = group_params_from_channel_ranges(mn, mx, ql.weights.layout, qm.bits_a);
    }
    qm.layers[i] = std::move(ql);
  }

  const std::string path = temp_path("quant");
  save_quantized(path, qm, reg);
  const QuantizedModel back = load_quantized(path, reg);

  CHECK(back.bits_a == qm.bits_a);
  REQUIRE(back.layers.size() == qm.layers.size());
  for (std::size_t i = 0; i < reg.size(); ++i) {
    REQUIRE(back.layers[i].has_value() == qm.layers[i].has_value());
    if (!qm.layers[i].has_value()) continue;
    const QuantizedLayer& a = *qm.layers[i];
    const QuantizedLayer& b = *back.layers[i];
    CHECK(a.weights.shape == b.weights.shape);
    CHECK(a.weights.layout == b.weights.layout);
    CHECK(a.weights.per_column == b.weights.per_column);
    CHECK(a.weights.bits == b.weights.bits);
    CHECK(a.weights.codes == b.weights.codes);
    REQUIRE(a.weights.params.size() == b.weights.params.size());
    for (std::size_t k = 0; k < a.weights.params.size(); ++k) {
      CHECK(a.weights.params[k] == b.weights.params[k]);
    }
    REQUIRE(a.act_params.size() == b.act_params.size());
    for (std::size_t k = 0; k < a.act_params.size(); ++k) {
      CHECK(a.act_params[k] == b.act_params[k]);
    }
  }

  // the loaded plan drives inference identically
  Rng rng(6);
  Tensor x({1, 64});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.next_normal();
  Tensor ya = model.forward(x, 321, &qm);
  Tensor yb = model.forward(x, 321, &back);
  for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya[i] == yb[i]);
}

TEST_CASE("oversized zero points survive storage") {
  std::vector<LayerInfo> reg = {{"x", 1, 1, 1}};
  QuantizedModel qm;
  qm.bits_a = 8;
  qm.layers.resize(1);
  QuantizedLayer ql;
  ql.weights.shape = {1, 1};
  ql.weights.codes = {3};
  ql.weights.layout = GroupLayout::over(1, 1);
  ql.weights.per_column = true;
  ql.weights.bits = 8;
  // an 8-digit odd value: too wide for a 32-bit real's 24-bit significand
  ql.weights.params = {QuantParams{f32(1e-8), -77777779, 8}};
  qm.layers[0] = std::move(ql);

  const std::string path = temp_path("bigzp");
  save_quantized(path, qm, reg);
  const QuantizedModel back = load_quantized(path, reg);
  CHECK(back.layers[0]->weights.params[0].zero_point == -77777779);
  CHECK(back.layers[0]->weights.params[0].scale == f32(1e-8));
}

TEST_CASE("quantized loader rejects inconsistent bundles") {
  std::vector<LayerInfo> reg = {{"x", 4, 2, 1}};
  Rng rng(3);
  Tensor w({4, 2});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = f32(rng.next_normal());

  QuantizedModel qm;
  qm.layers.resize(1);
  QuantizedLayer ql;
  ql.weights = group_quantize_weights(w, 2, 4);
  qm.layers[0] = std::move(ql);
  const std::string path = temp_path("qreject");
  save_quantized(path, qm, reg);

  // wrong registry shape
  std::vector<LayerInfo> other = {{"x", 8, 2, 1}};
  CHECK_THROWS_AS(load_quantized(path, other), io_error);
  std::vector<LayerInfo> renamed = {{"y", 4, 2, 1}};
  CHECK_THROWS_AS(load_quantized(path, renamed), io_error);
  std::vector<LayerInfo> longer = {{"x", 4, 2, 1}, {"y", 4, 2, 1}};
  CHECK_THROWS_AS(load_quantized(path, longer), io_error);

  // plan length must match the registry on save as well
  CHECK_THROWS_AS(save_quantized(path, qm, longer), dim_error);
}

TEST_CASE("config parsing applies defaults and overrides") {
  const RunConfig d = parse_run_config("");
  CHECK(d.model_seed == 0);
  CHECK(d.steps == 50);
  CHECK(d.bits_w == 4);
  CHECK(d.bits_a == 8);
  CHECK(d.group_default == 32);
  CHECK(d.search_space == std::vector<int>{8, 16, 32, 48, 72});
  CHECK(d.exclude_layers.empty());
  CHECK(d.population == 16);
  CHECK(d.iterations == 15);
  CHECK(d.mutation_prob == 0.2);
  CHECK(d.topk == 8);
  CHECK(d.fid_samples == 512);
  CHECK(d.calib_samples == 8);
  CHECK(d.budget_is_auto());
  CHECK(d.eval_modes == std::vector<std::string>{"fp", "rtn", "group", "dynamic"});

  const RunConfig c = parse_run_config(
      "# full override\n"
      "model_seed = 12345\n"
      "sampler_seed = 99\n"
      "steps = 10   # sampling positions\n"
      "bits_w = 8\n"
      "bits_a = 6\n"
      "group_default = 16\n"
      "search_space = 16, 32\n"
      "exclude_layers = head, patch_embed\n"
      "population = 4\n"
      "iterations = 2\n"
      "mutation_prob = 0.5\n"
      "topk = 2\n"
      "fid_samples = 65\n"
      "calib_samples = 3\n"
      "bitops_budget = 1e9\n"
      "group_config_file = /tmp/best.txt\n"
      "model_bundle = /tmp/m.qdtb\n"
      "eval_modes = fp, search\n");
  CHECK(c.model_seed == 12345);
  CHECK(c.sampler_seed == 99);
  CHECK(c.steps == 10);
  CHECK(c.bits_w == 8);
  CHECK(c.bits_a == 6);
  CHECK(c.group_default == 16);
  CHECK(c.search_space == std::vector<int>{16, 32});
  CHECK(c.exclude_layers == std::vector<std::string>{"head", "patch_embed"});
  CHECK(c.population == 4);
  CHECK(c.iterations == 2);
  CHECK(c.mutation_prob == 0.5);
  CHECK(c.topk == 2);
  CHECK(c.fid_samples == 65);
  CHECK(c.calib_samples == 3);
  CHECK(!c.budget_is_auto());
  CHECK(c.budget_value() == 1e9);
  CHECK(c.group_config_file == "/tmp/best.txt");
  CHECK(c.model_bundle == "/tmp/m.qdtb");
  CHECK(c.eval_modes == std::vector<std::string>{"fp", "search"});
}

TEST_CASE("config echo is canonical and reparses to the same values") {
  RunConfig c = parse_run_config("steps = 7\nexclude_layers = head\nbitops_budget = 2.5e8\n");
  const std::string echoed = echo_run_config(c);
  const RunConfig back = parse_run_config(echoed);
  CHECK(echo_run_config(back) == echoed);
  CHECK(back.steps == 7);
  CHECK(back.exclude_layers == std::vector<std::string>{"head"});
  CHECK(back.bitops_budget == "2.5e8");
  // every known key appears in the echo
  for (const char* key :
       {"model_seed", "sampler_seed", "steps", "bits_w", "bits_a", "group_default",
        "search_space", "exclude_layers", "population", "iterations", "mutation_prob", "topk",
        "fid_samples", "calib_samples", "bitops_budget", "group_config_file", "model_bundle",
        "eval_modes"}) {
    CHECK(echoed.find(std::string(key) + " = ") != std::string::npos);
  }
}

TEST_CASE("config rejects malformed input") {
  CHECK_THROWS_AS(parse_run_config("no_such_key = 3\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("steps = 5\nsteps = 6\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("steps\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("= 5\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("steps = five\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("steps = 5x\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("steps = 0\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("steps = 1001\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("bits_w = 1\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("bits_a = 9\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("population = 5\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("population = 4\ntopk = 6\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("mutation_prob = 0\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("mutation_prob = 1\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("fid_samples = 64\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("search_space = \n"), config_error);
  CHECK_THROWS_AS(parse_run_config("search_space = 8,,16\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("eval_modes = fp,nope\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("eval_modes = fp,fp\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("bitops_budget = lots\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("bitops_budget = -1\n"), config_error);
  CHECK_THROWS_AS(parse_run_config("model_seed = -4\n"), config_error);
}

TEST_CASE("missing config files raise io errors") {
  CHECK_THROWS_AS(load_run_config("/nonexistent/qdit.cfg"), io_error);
}

}  // TEST_SUITE
