#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qdit {

// Flat key = value run configuration ('#' starts a comment). Unknown keys
// are rejected so typos fail loudly; every run echoes its resolved config
// next to its outputs.
struct RunConfig {
  std::uint64_t model_seed = 0;    // weight initialization
  std::uint64_t sampler_seed = 0;  // sampling noise and search randomness
  int steps = 50;                  // sampling positions
  int bits_w = 4;
  int bits_a = 8;
  int group_default = 32;                         // uniform group size
  std::vector<int> search_space = {8, 16, 32, 48, 72};
  std::vector<std::string> exclude_layers;        // names kept in full precision
  int population = 16;
  int iterations = 15;
  double mutation_prob = 0.2;
  int topk = 8;
  int fid_samples = 512;   // samples behind each distribution fit
  int calib_samples = 8;   // samples driving calibration statistics
  std::string bitops_budget = "auto";  // "auto" = cost of the uniform default
  std::string group_config_file;       // optional: searched assignment to load
  std::string model_bundle;            // optional: load weights instead of seeding
  std::vector<std::string> eval_modes = {"fp", "rtn", "group", "dynamic"};

  bool budget_is_auto() const { return bitops_budget == "auto"; }
  double budget_value() const;  // only valid when !budget_is_auto()
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Canonical serialization: fixed key order, byte-stable, reparses to an
// equal config.
std::string echo_run_config(const RunConfig& cfg);

}  // namespace qdit
