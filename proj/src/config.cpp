#include "qdit/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "qdit/error.hpp"
#include "qdit/metrics.hpp"

namespace qdit {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& v, const std::string& key) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) throw config_error("empty element in list '" + key + "'");
    out.push_back(part);
  }
  return out;
}

long long parse_int(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw config_error("key '" + key + "' expects an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw config_error("key '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  if (!v.empty() && v[0] == '-') throw config_error("key '" + key + "' must be non-negative");
  std::size_t pos = 0;
  std::uint64_t x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw config_error("key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
  if (pos != v.size()) {
    throw config_error("key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
  return x;
}

double parse_real(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw config_error("key '" + key + "' expects a number, got '" + v + "'");
  }
  if (pos != v.size()) throw config_error("key '" + key + "' expects a number, got '" + v + "'");
  return x;
}

int parse_bounded(const std::string& v, const std::string& key, int lo, int hi) {
  const long long x = parse_int(v, key);
  if (x < lo || x > hi) {
    throw config_error("key '" + key + "' must lie in [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
  }
  return static_cast<int>(x);
}

const std::set<std::string>& known_modes() {
  static const std::set<std::string> modes = {"fp", "rtn", "group", "dynamic", "search"};
  return modes;
}

}  // namespace

double RunConfig::budget_value() const {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(bitops_budget, &pos);
  } catch (const std::exception&) {
    throw config_error("bitops_budget must be 'auto' or a positive number");
  }
  if (pos != bitops_budget.size() || !(v > 0.0)) {
    throw config_error("bitops_budget must be 'auto' or a positive number");
  }
  return v;
}

RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    line_no += 1;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("line " + std::to_string(line_no) + " is not key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw config_error("line " + std::to_string(line_no) + " has an empty key");
    if (!kv.emplace(key, value).second) throw config_error("duplicate key '" + key + "'");
  }

  RunConfig cfg;
  std::set<std::string> seen;
  auto take = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    seen.insert(key);
    return &it->second;
  };

  if (const std::string* v = take("model_seed")) cfg.model_seed = parse_u64(*v, "model_seed");
  if (const std::string* v = take("sampler_seed")) cfg.sampler_seed = parse_u64(*v, "sampler_seed");
  if (const std::string* v = take("steps")) cfg.steps = parse_bounded(*v, "steps", 1, 1000);
  if (const std::string* v = take("bits_w")) cfg.bits_w = parse_bounded(*v, "bits_w", 2, 8);
  if (const std::string* v = take("bits_a")) cfg.bits_a = parse_bounded(*v, "bits_a", 2, 8);
  if (const std::string* v = take("group_default")) {
    cfg.group_default = parse_bounded(*v, "group_default", 1, 1 << 20);
  }
  if (const std::string* v = take("search_space")) {
    cfg.search_space.clear();
    for (const std::string& part : split_list(*v, "search_space")) {
      cfg.search_space.push_back(parse_bounded(part, "search_space", 1, 1 << 20));
    }
    if (cfg.search_space.empty()) throw config_error("search_space must not be empty");
  }
  if (const std::string* v = take("exclude_layers")) {
    cfg.exclude_layers = split_list(*v, "exclude_layers");
  }
  if (const std::string* v = take("population")) {
    cfg.population = parse_bounded(*v, "population", 2, 4096);
    if (cfg.population % 2 != 0) throw config_error("population must be even");
  }
  if (const std::string* v = take("iterations")) {
    cfg.iterations = parse_bounded(*v, "iterations", 1, 100000);
  }
  if (const std::string* v = take("mutation_prob")) {
    cfg.mutation_prob = parse_real(*v, "mutation_prob");
    if (!(cfg.mutation_prob > 0.0 && cfg.mutation_prob < 1.0)) {
      throw config_error("mutation_prob must lie in (0, 1)");
    }
  }
  if (const std::string* v = take("topk")) cfg.topk = parse_bounded(*v, "topk", 2, 4096);
  if (const std::string* v = take("fid_samples")) {
    cfg.fid_samples = parse_bounded(*v, "fid_samples", 65, 1 << 20);
  }
  if (const std::string* v = take("calib_samples")) {
    cfg.calib_samples = parse_bounded(*v, "calib_samples", 1, 1 << 20);
  }
  if (const std::string* v = take("bitops_budget")) {
    cfg.bitops_budget = *v;
    if (!cfg.budget_is_auto()) cfg.budget_value();  // validates
  }
  if (const std::string* v = take("group_config_file")) cfg.group_config_file = *v;
  if (const std::string* v = take("model_bundle")) cfg.model_bundle = *v;
  if (const std::string* v = take("eval_modes")) {
    cfg.eval_modes = split_list(*v, "eval_modes");
    if (cfg.eval_modes.empty()) throw config_error("eval_modes must not be empty");
    std::set<std::string> dedup;
    for (const std::string& m : cfg.eval_modes) {
      if (!known_modes().count(m)) throw config_error("unknown eval mode '" + m + "'");
      if (!dedup.insert(m).second) throw config_error("repeated eval mode '" + m + "'");
    }
  }

  if (cfg.topk > cfg.population) throw config_error("topk must not exceed population");

  for (const auto& [key, value] : kv) {
    (void)value;
    if (!seen.count(key)) throw config_error("unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

}  // namespace

std::string echo_run_config(const RunConfig& cfg) {
  std::string out;
  out += "model_seed = " + std::to_string(cfg.model_seed) + "\n";
  out += "sampler_seed = " + std::to_string(cfg.sampler_seed) + "\n";
  out += "steps = " + std::to_string(cfg.steps) + "\n";
  out += "bits_w = " + std::to_string(cfg.bits_w) + "\n";
  out += "bits_a = " + std::to_string(cfg.bits_a) + "\n";
  out += "group_default = " + std::to_string(cfg.group_default) + "\n";
  out += "search_space = " + join_ints(cfg.search_space) + "\n";
  out += "exclude_layers = " + join_strings(cfg.exclude_layers) + "\n";
  out += "population = " + std::to_string(cfg.population) + "\n";
  out += "iterations = " + std::to_string(cfg.iterations) + "\n";
  out += "mutation_prob = " + format_real(cfg.mutation_prob) + "\n";
  out += "topk = " + std::to_string(cfg.topk) + "\n";
  out += "fid_samples = " + std::to_string(cfg.fid_samples) + "\n";
  out += "calib_samples = " + std::to_string(cfg.calib_samples) + "\n";
  out += "bitops_budget = " + cfg.bitops_budget + "\n";
  out += "group_config_file = " + cfg.group_config_file + "\n";
  out += "model_bundle = " + cfg.model_bundle + "\n";
  out += "eval_modes = " + join_strings(cfg.eval_modes) + "\n";
  return out;
}

}  // namespace qdit
