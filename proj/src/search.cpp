#include "qdit/search.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <utility>

#include "qdit/error.hpp"
#include "qdit/metrics.hpp"

namespace qdit {

namespace {

constexpr int kResampleCap = 1000;

int uniform_index(Rng& rng, int n) {
  // next_uniform() < 1, so the result stays in [0, n)
  return static_cast<int>(rng.next_uniform() * n);
}

void check_lengths(const GroupConfig& g, const BitOpsModel& m) {
  if (g.sizes.size() != m.layers.size()) {
    throw dim_error("group assignment covers " + std::to_string(g.sizes.size()) +
                    " layers but the cost model has " + std::to_string(m.layers.size()));
  }
}

bool lex_less(const GroupConfig& a, const GroupConfig& b) {
  return std::lexicographical_compare(a.sizes.begin(), a.sizes.end(), b.sizes.begin(),
                                      b.sizes.end());
}

}  // namespace

BitOpsModel BitOpsModel::from_registry(const std::vector<LayerInfo>& registry, int bits_w,
                                       int bits_a) {
  if (bits_w < 2 || bits_w > 8 || bits_a < 2 || bits_a > 8) {
    throw validation_error("bit widths must lie in [2, 8]");
  }
  BitOpsModel m;
  m.bits_w = bits_w;
  m.bits_a = bits_a;
  for (const LayerInfo& l : registry) m.layers.push_back({l.tokens, l.d_in, l.d_out});
  return m;
}

double bitops(const GroupConfig& g, const BitOpsModel& m) {
  check_lengths(g, m);
  double total = 0.0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const BitOpsModel::LayerCost& c = m.layers[l];
    const int gs = g.sizes[l];
    if (gs <= 0) throw validation_error("group sizes must be positive");
    const double groups = static_cast<double>((c.d_in + gs - 1) / gs);
    const double per_out = static_cast<double>(c.d_in) * m.bits_w * m.bits_a +
                           groups * m.rescale_cost;
    total += static_cast<double>(c.tokens) * c.d_out * per_out;
  }
  return total;
}

GroupConfig crossover(const std::vector<GroupConfig>& topk, Rng& rng) {
  if (topk.size() < 2) throw validation_error("crossover needs at least two elite parents");
  const int i = uniform_index(rng, static_cast<int>(topk.size()));
  int j = uniform_index(rng, static_cast<int>(topk.size()) - 1);
  if (j >= i) ++j;
  const GroupConfig& a = topk[i];
  const GroupConfig& b = topk[j];
  if (a.sizes.size() != b.sizes.size()) throw dim_error("elite parents disagree on length");
  GroupConfig child;
  child.sizes.resize(a.sizes.size());
  for (std::size_t l = 0; l < a.sizes.size(); ++l) {
    child.sizes[l] = rng.next_uniform() < 0.5 ? a.sizes[l] : b.sizes[l];
  }
  return child;
}

GroupConfig mutate(const GroupConfig& parent, double p, const std::vector<int>& space,
                   Rng& rng) {
  if (space.empty()) throw validation_error("empty size space");
  if (p < 0.0 || p > 1.0) throw validation_error("mutation probability must lie in [0, 1]");
  GroupConfig child = parent;
  for (std::size_t l = 0; l < child.sizes.size(); ++l) {
    if (rng.next_uniform() < p) {
      child.sizes[l] = space[uniform_index(rng, static_cast<int>(space.size()))];
    }
  }
  return child;
}

namespace {

class FitnessCache {
 public:
  explicit FitnessCache(const FitnessFn& fn) : fn_(fn) {}

  double get(const GroupConfig& g) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = cache_.find(g.sizes);
      if (it != cache_.end()) return it->second;
    }
    double f = fn_(g);
    if (std::isnan(f)) f = std::numeric_limits<double>::infinity();
    std::lock_guard<std::mutex> lk(mu_);
    return cache_.emplace(g.sizes, f).first->second;
  }

 private:
  const FitnessFn& fn_;
  std::mutex mu_;
  std::map<std::vector<int>, double> cache_;
};

struct Scored {
  double fitness;
  GroupConfig config;
};

bool scored_less(const Scored& a, const Scored& b) {
  if (a.fitness != b.fitness) return a.fitness < b.fitness;
  return lex_less(a.config, b.config);
}

}  // namespace

SearchResult evolve(const SearchParams& params, const BitOpsModel& costs,
                    const FitnessFn& fitness) {
  if (params.space.empty()) throw validation_error("empty size space");
  for (int s : params.space) {
    if (s <= 0) throw validation_error("group sizes must be positive");
  }
  if (params.population < 2 || params.population % 2 != 0) {
    throw validation_error("population size must be even and at least 2");
  }
  if (params.topk < 2 || params.topk > params.population) {
    throw validation_error("elite pool size must lie in [2, population]");
  }
  if (!(params.mutation_prob > 0.0 && params.mutation_prob < 1.0)) {
    throw validation_error("mutation probability must lie in (0, 1)");
  }
  if (params.iterations < 1) throw validation_error("need at least one iteration");
  if (costs.layers.empty()) throw validation_error("cost model has no layers");

  const int n_layers = static_cast<int>(costs.layers.size());
  const auto feasible = [&](const GroupConfig& g) { return bitops(g, costs) <= params.budget; };

  // cheapest possible assignment must fit, otherwise nothing does
  const int max_size = *std::max_element(params.space.begin(), params.space.end());
  GroupConfig cheapest{std::vector<int>(n_layers, max_size)};
  if (!feasible(cheapest)) {
    throw config_error("bit-operations budget admits no assignment from the size space");
  }

  Rng rng(params.seed);
  FitnessCache cache(fitness);
  SearchResult result;

  // uniform assignments first, then random feasible fills
  std::vector<GroupConfig> population;
  std::vector<GroupConfig> uniform_seeds;
  for (int s : params.space) {
    GroupConfig g{std::vector<int>(n_layers, s)};
    if (feasible(g)) uniform_seeds.push_back(g);
  }
  for (const GroupConfig& g : uniform_seeds) {
    if (static_cast<int>(population.size()) < params.population) population.push_back(g);
  }
  auto random_config = [&]() {
    GroupConfig g;
    g.sizes.resize(n_layers);
    for (int l = 0; l < n_layers; ++l) {
      g.sizes[l] = params.space[uniform_index(rng, static_cast<int>(params.space.size()))];
    }
    return g;
  };
  while (static_cast<int>(population.size()) < params.population) {
    bool filled = false;
    for (int attempt = 0; attempt < kResampleCap; ++attempt) {
      GroupConfig g = random_config();
      if (feasible(g)) {
        population.push_back(std::move(g));
        filled = true;
        break;
      }
    }
    if (!filled) {
      population.push_back(uniform_seeds[result.fallback_fills % uniform_seeds.size()]);
      result.fallback_fills += 1;
    }
  }

  std::vector<Scored> elite;  // sorted, distinct configs, size <= topk
  const auto merge_into_elite = [&](const Scored& s) {
    for (const Scored& e : elite) {
      if (e.config == s.config) return;
    }
    elite.push_back(s);
    std::sort(elite.begin(), elite.end(), scored_less);
    if (static_cast<int>(elite.size()) > params.topk) elite.resize(params.topk);
  };

  for (int it = 0; it < params.iterations; ++it) {
    double sum = 0.0;
    for (const GroupConfig& g : population) {
      const double f = cache.get(g);
      sum += f;
      merge_into_elite({f, g});
    }
    IterationStat stat;
    stat.iteration = it;
    stat.best_fitness = elite.front().fitness;
    stat.mean_fitness = sum / population.size();
    stat.best_config = elite.front().config;
    result.history.push_back(stat);

    if (it + 1 == params.iterations) break;

    // rebuild: half crossover, half mutation, both constrained to the budget
    std::vector<GroupConfig> elite_configs;
    for (const Scored& e : elite) elite_configs.push_back(e.config);
    std::vector<GroupConfig> next;
    for (int slot = 0; slot < params.population; ++slot) {
      const bool use_crossover = slot < params.population / 2;
      bool filled = false;
      for (int attempt = 0; attempt < kResampleCap; ++attempt) {
        GroupConfig child =
            use_crossover
                ? (elite_configs.size() >= 2 ? crossover(elite_configs, rng) : elite_configs[0])
                : mutate(elite_configs[uniform_index(
                             rng, static_cast<int>(elite_configs.size()))],
                         params.mutation_prob, params.space, rng);
        if (feasible(child)) {
          next.push_back(std::move(child));
          filled = true;
          break;
        }
      }
      if (!filled) {
        next.push_back(elite_configs[result.fallback_fills % elite_configs.size()]);
        result.fallback_fills += 1;
      }
    }
    population = std::move(next);
  }

  if (result.fallback_fills > 0) {
    std::clog << "[search] resampling gave up on " << result.fallback_fills
              << " population slots; filled them with elite copies\n";
  }
  result.best = elite.front().config;
  result.best_fitness = elite.front().fitness;
  return result;
}

std::string group_config_to_string(const GroupConfig& g) {
  std::string out;
  for (std::size_t i = 0; i < g.sizes.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(g.sizes[i]);
  }
  return out;
}

GroupConfig group_config_from_string(const std::string& s) {
  GroupConfig g;
  if (s.empty()) throw validation_error("empty group assignment string");
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '-')) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(part, &pos);
    } catch (const std::exception&) {
      throw validation_error("bad group size '" + part + "'");
    }
    if (pos != part.size() || v <= 0) throw validation_error("bad group size '" + part + "'");
    g.sizes.push_back(v);
  }
  return g;
}

std::string search_history_csv(const std::vector<IterationStat>& history) {
  std::string out = "iteration,best_fitness,mean_fitness,best_config\n";
  for (const IterationStat& h : history) {
    out += std::to_string(h.iteration);
    out += ',';
    out += format_real(h.best_fitness);
    out += ',';
    out += format_real(h.mean_fitness);
    out += ',';
    out += group_config_to_string(h.best_config);
    out += '\n';
  }
  return out;
}

}  // namespace qdit
