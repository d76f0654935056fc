#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "ivregime/data.hpp"

namespace ivregime {

struct GAConfig {
  std::size_t population_size = 100;
  std::size_t generations = 60;
  double crossover_rate = 0.8;
  double mutation_rate = 0.2;   // per coordinate
  double mutation_scale = 0.2;  // sd of the Gaussian perturbation
  std::size_t elite_count = 2;
  std::uint64_t seed = 1;
  std::size_t stall_generations = 15;
  std::size_t threads = 1;  // objective evaluations within a generation

  void validate() const;
};

struct OptimizationResult {
  Regime eta_hat;
  double value = 0.0;
  std::vector<double> history;  // best-ever value after each generation
  std::size_t evaluations = 0;
  std::size_t discarded = 0;    // candidates with a non-finite objective
};

using Objective = std::function<double(const Regime&)>;

// Real-coded GA over the unit sphere in R^dim. The objective must be
// deterministic and safe to call concurrently when config.threads > 1.
OptimizationResult optimize(const Objective& objective, std::size_t dim, const GAConfig& config);

// Exhaustive search over the (theta, phi) lattice of S^2 at cell midpoints:
// (180 / res) x (360 / res) evaluations. Only dim = 3 is supported.
OptimizationResult grid_search_sphere(const Objective& objective, std::size_t dim = 3,
                                      double resolution_degrees = 1.0);

}  // namespace ivregime
