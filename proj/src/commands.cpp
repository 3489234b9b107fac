#include "qdit/commands.hpp"

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "qdit/bundle.hpp"
#include "qdit/error.hpp"
#include "qdit/pipeline.hpp"

namespace qdit {

namespace {

ToyDiT make_model(const RunConfig& cfg) {
  if (!cfg.model_bundle.empty()) return load_model(cfg.model_bundle);
  ToyDiTConfig mc;
  mc.seed = cfg.model_seed;
  return ToyDiT::init_random(mc);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw io_error("short write to '" + path + "'");
}

std::string prepare_out_dir(const RunConfig& cfg, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory '" + out_dir + "': " + ec.message());
  write_text(out_dir + "/run_config.txt", echo_run_config(cfg));
  return out_dir;
}

// best-assignment file written by the search command: flat key = value
GroupConfig load_group_config_file(const std::string& path, std::size_t n_layers) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open group assignment file '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    if (key != "group_config") continue;
    std::string value = line.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t\r"));
    value.erase(value.find_last_not_of(" \t\r") + 1);
    GroupConfig g = group_config_from_string(value);
    if (g.sizes.size() != n_layers) {
      throw config_error("group assignment in '" + path + "' covers " +
                         std::to_string(g.sizes.size()) + " layers, expected " +
                         std::to_string(n_layers));
    }
    return g;
  }
  throw config_error("no group_config key in '" + path + "'");
}

GroupConfig resolve_groups(const RunConfig& cfg, const std::vector<LayerInfo>& registry) {
  if (!cfg.group_config_file.empty()) {
    return load_group_config_file(cfg.group_config_file, registry.size());
  }
  return GroupConfig{std::vector<int>(registry.size(), cfg.group_default)};
}

GroupConfig uniform_groups(const std::vector<LayerInfo>& registry, int size) {
  return GroupConfig{std::vector<int>(registry.size(), size)};
}

GroupConfig per_layer_full_axis(const std::vector<LayerInfo>& registry) {
  GroupConfig g;
  for (const LayerInfo& l : registry) g.sizes.push_back(l.d_in);
  return g;
}

}  // namespace

void cmd_stats(const RunConfig& cfg, const std::string& out_dir) {
  prepare_out_dir(cfg, out_dir);
  const ToyDiT model = make_model(cfg);
  const DiffusionSchedule sched = DiffusionSchedule::create(cfg.steps);

  std::vector<std::pair<std::string, ChannelVarianceReport>> variance;
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    variance.emplace_back(model.registry()[i].name,
                          channel_variance_report(model.layer_weights(static_cast<int>(i))));
  }
  write_text(out_dir + "/channel_variance.csv", channel_variance_summary_csv(variance));
  write_text(out_dir + "/channel_variance_channels.csv",
             channel_variance_channels_csv(variance));

  const std::vector<ActivationSnapshot> snaps =
      record_activations(model, sched, cfg.calib_samples, cfg.sampler_seed);
  write_text(out_dir + "/activation_timeline.csv", activation_timeline_csv(snaps));
}

void cmd_quantize(const RunConfig& cfg, const std::string& out_dir) {
  prepare_out_dir(cfg, out_dir);
  const ToyDiT model = make_model(cfg);
  const std::vector<LayerInfo>& registry = model.registry();
  const DiffusionSchedule sched = DiffusionSchedule::create(cfg.steps);

  GroupConfig groups = resolve_groups(cfg, registry);
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (groups.sizes[i] > registry[i].d_in) {
      std::clog << "[quantize] group size " << groups.sizes[i] << " exceeds the "
                << registry[i].d_in << " input channels of '" << registry[i].name
                << "'; using one group\n";
    }
  }

  const CalibrationData calib = calibrate(model, sched, cfg.calib_samples, cfg.sampler_seed);
  QuantizeOptions opt;
  opt.bits_w = cfg.bits_w;
  opt.bits_a = cfg.bits_a;
  opt.groups = groups;
  opt.exclude = cfg.exclude_layers;
  opt.static_acts = true;
  const QuantizedModel qm = quantize_model(model, calib, prepare_factors(calib), opt);
  save_quantized(out_dir + "/quantized.qdtb", qm, registry);

  const std::vector<double> mse = layer_weight_mse(model, qm);
  std::string layer_csv = "layer,group_size,bits,weight_mse\n";
  std::vector<std::pair<int, int>> engaged_dims;
  std::vector<int> engaged_groups;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (!qm.layers[i].has_value()) continue;
    layer_csv += registry[i].name;
    layer_csv += ',';
    layer_csv += std::to_string(groups.sizes[i]);
    layer_csv += ',';
    layer_csv += std::to_string(cfg.bits_w);
    layer_csv += ',';
    layer_csv += format_real(mse[i]);
    layer_csv += '\n';
    engaged_dims.push_back({registry[i].d_in, registry[i].d_out});
    engaged_groups.push_back(groups.sizes[i]);
  }
  write_text(out_dir + "/layer_error.csv", layer_csv);

  const BitOpsModel costs = BitOpsModel::from_registry(registry, cfg.bits_w, cfg.bits_a);
  std::string summary;
  summary += "group_config = " + group_config_to_string(groups) + "\n";
  summary += "bitops = " + format_real(bitops(groups, costs)) + "\n";
  summary += "static_param_overhead = " +
             format_real(static_param_overhead(engaged_dims, engaged_groups, cfg.steps)) + "\n";
  write_text(out_dir + "/summary.txt", summary);
}

void cmd_search(const RunConfig& cfg, const std::string& out_dir) {
  prepare_out_dir(cfg, out_dir);
  const ToyDiT model = make_model(cfg);
  const std::vector<LayerInfo>& registry = model.registry();
  const DiffusionSchedule sched = DiffusionSchedule::create(cfg.steps);

  const BitOpsModel costs = BitOpsModel::from_registry(registry, cfg.bits_w, cfg.bits_a);
  const double budget = resolve_budget(cfg, registry);
  // fail on an impossible budget before any sampling happens
  const int max_size = *std::max_element(cfg.search_space.begin(), cfg.search_space.end());
  if (bitops(uniform_groups(registry, max_size), costs) > budget) {
    throw config_error("bit-operations budget admits no assignment from the size space");
  }

  SearchParams params;
  params.space = cfg.search_space;
  params.population = cfg.population;
  params.iterations = cfg.iterations;
  params.mutation_prob = cfg.mutation_prob;
  params.topk = cfg.topk;
  params.budget = budget;
  params.seed = cfg.sampler_seed;

  const CalibrationData calib = calibrate(model, sched, cfg.calib_samples, cfg.sampler_seed);
  GaussianStats reference = reference_stats(model, sched, cfg.fid_samples, cfg.sampler_seed);
  const FitnessContext fitness(model, sched, calib, std::move(reference), cfg.bits_w,
                               cfg.bits_a, cfg.fid_samples, cfg.sampler_seed,
                               cfg.exclude_layers);
  const SearchResult result = evolve(params, costs, std::cref(fitness));

  std::string best;
  best += "group_config = " + group_config_to_string(result.best) + "\n";
  best += "best_fitness = " + format_real(result.best_fitness) + "\n";
  best += "bitops = " + format_real(bitops(result.best, costs)) + "\n";
  best += "budget = " + format_real(budget) + "\n";
  write_text(out_dir + "/best_config.txt", best);
  write_text(out_dir + "/search_history.csv", search_history_csv(result.history));
}

void cmd_eval(const RunConfig& cfg, const std::string& out_dir) {
  prepare_out_dir(cfg, out_dir);
  const ToyDiT model = make_model(cfg);
  const std::vector<LayerInfo>& registry = model.registry();
  const DiffusionSchedule sched = DiffusionSchedule::create(cfg.steps);

  bool needs_calib = false;
  bool needs_search = false;
  for (const std::string& mode : cfg.eval_modes) {
    needs_calib |= mode != "fp";
    needs_search |= mode == "search";
  }
  GroupConfig searched;
  if (needs_search) {
    if (cfg.group_config_file.empty()) {
      throw config_error("eval mode 'search' needs group_config_file to point at a search result");
    }
    searched = load_group_config_file(cfg.group_config_file, registry.size());
  }

  const GaussianStats reference =
      reference_stats(model, sched, cfg.fid_samples, cfg.sampler_seed);
  CalibrationData calib;
  std::vector<GptqFactor> factors;
  if (needs_calib) {
    calib = calibrate(model, sched, cfg.calib_samples, cfg.sampler_seed);
    factors = prepare_factors(calib);
  }

  auto quantize_variant = [&](const GroupConfig& groups, bool identity, bool static_acts) {
    QuantizeOptions opt;
    opt.bits_w = cfg.bits_w;
    opt.bits_a = cfg.bits_a;
    opt.groups = groups;
    opt.exclude = cfg.exclude_layers;
    opt.static_acts = static_acts;
    return quantize_model(model, calib, identity ? identity_factors(registry) : factors, opt);
  };

  std::string csv = "mode,toy_fid\n";
  for (const std::string& mode : cfg.eval_modes) {
    double fid = 0.0;
    if (mode == "fp") {
      fid = sample_fitness(model, sched, nullptr, reference, cfg.fid_samples, cfg.sampler_seed);
    } else {
      QuantizedModel qm;
      if (mode == "rtn") {
        qm = quantize_variant(per_layer_full_axis(registry), true, true);
      } else if (mode == "group") {
        qm = quantize_variant(uniform_groups(registry, cfg.group_default), false, true);
      } else if (mode == "dynamic") {
        qm = quantize_variant(uniform_groups(registry, cfg.group_default), false, false);
      } else {  // search
        qm = quantize_variant(searched, false, false);
      }
      fid = sample_fitness(model, sched, &qm, reference, cfg.fid_samples, cfg.sampler_seed);
    }
    csv += mode;
    csv += ',';
    csv += format_real(fid);
    csv += '\n';
  }
  write_text(out_dir + "/eval_ladder.csv", csv);
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"group-quantization engine for a toy diffusion transformer"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  const char* names[] = {"stats", "quantize", "search", "eval"};
  const char* descs[] = {"weight and activation spread reports",
                         "error-compensated quantization to a bundle",
                         "evolutionary group-size allocation",
                         "quantization ladder comparison"};
  for (int i = 0; i < 4; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], descs[i]);
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = load_run_config(config_path);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "stats") {
      cmd_stats(cfg, out_dir);
    } else if (cmd == "quantize") {
      cmd_quantize(cfg, out_dir);
    } else if (cmd == "search") {
      cmd_search(cfg, out_dir);
    } else {
      cmd_eval(cfg, out_dir);
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace qdit
