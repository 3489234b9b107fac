#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qdit/model.hpp"
#include "qdit/rng.hpp"

namespace qdit {

// Per-layer group-size assignment, one entry per cost-model layer.
struct GroupConfig {
  std::vector<int> sizes;
  bool operator==(const GroupConfig& o) const { return sizes == o.sizes; }
};

// Cost model for quantized inference: every output element pays
// d_in multiply-accumulates at (bits_w x bits_a), plus one rescale
// (16x16 multiply + add) per input group it touches.
struct BitOpsModel {
  struct LayerCost {
    int tokens = 0;
    int d_in = 0;
    int d_out = 0;
  };
  std::vector<LayerCost> layers;
  int bits_w = 4;
  int bits_a = 8;
  double rescale_cost = 512.0;

  static BitOpsModel from_registry(const std::vector<LayerInfo>& registry, int bits_w,
                                   int bits_a);
};

// Total bit-operations for one denoiser evaluation under the assignment.
double bitops(const GroupConfig& g, const BitOpsModel& m);

struct SearchParams {
  std::vector<int> space = {8, 16, 32, 48, 72};  // candidate group sizes
  int population = 16;                           // even; half crossover, half mutation
  int iterations = 15;
  double mutation_prob = 0.2;  // in (0, 1)
  int topk = 8;                // elite pool size, 2..population
  double budget = 0.0;         // max admissible bitops
  std::uint64_t seed = 0;      // drives all search randomness
};

// Child takes each gene from one of two distinct elite parents, picked
// uniformly at random per gene.
GroupConfig crossover(const std::vector<GroupConfig>& topk, Rng& rng);

// Each gene independently resampled uniformly from the space with
// probability p, kept otherwise.
GroupConfig mutate(const GroupConfig& parent, double p, const std::vector<int>& space,
                   Rng& rng);

struct IterationStat {
  int iteration = 0;
  double best_fitness = 0.0;  // best ever seen, after this iteration
  double mean_fitness = 0.0;  // over this iteration's population
  GroupConfig best_config;    // best ever seen
};

struct SearchResult {
  GroupConfig best;
  double best_fitness = 0.0;
  std::vector<IterationStat> history;  // one entry per iteration
  int fallback_fills = 0;  // population slots filled by elite copies after resampling gave up
};

using FitnessFn = std::function<double(const GroupConfig&)>;

// Evolutionary minimization over group-size assignments subject to
// bitops(g) <= budget. The initial population starts with every feasible
// uniform assignment (so the result can never lose to the best uniform
// one) and is topped up with random feasible draws. Fitness values are
// memoized; lower is better; ties break toward the lexicographically
// smaller assignment. Fully deterministic given params and the fitness.
SearchResult evolve(const SearchParams& params, const BitOpsModel& costs,
                    const FitnessFn& fitness);

// "8-16-32" <-> {8, 16, 32}
std::string group_config_to_string(const GroupConfig& g);
GroupConfig group_config_from_string(const std::string& s);

// CSV with header iteration,best_fitness,mean_fitness,best_config
std::string search_history_csv(const std::vector<IterationStat>& history);

}  // namespace qdit
