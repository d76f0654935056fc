#include "ivregime/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "ivregime/parallel.hpp"

namespace ivregime {

namespace {

constexpr double kImprovementTolerance = 1e-6;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> random_direction(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm < 1e-20);
  return v;
}

struct Population {
  std::vector<Regime> members;
  std::vector<double> fitness;
};

}  // namespace

void GAConfig::validate() const {
  if (population_size < 4) throw InvalidArgument("population_size must be at least 4");
  if (elite_count >= population_size)
    throw InvalidArgument("elite_count must be smaller than population_size");
  if (generations < 1) throw InvalidArgument("generations must be at least 1");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0))
    throw InvalidArgument("crossover_rate must lie in [0, 1]");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
    throw InvalidArgument("mutation_rate must lie in [0, 1]");
  if (!(mutation_scale > 0.0)) throw InvalidArgument("mutation_scale must be positive");
}

OptimizationResult optimize(const Objective& objective, std::size_t dim, const GAConfig& config) {
  config.validate();
  if (dim < 1) throw InvalidArgument("dim must be at least 1");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t pop = config.population_size;

  OptimizationResult result;
  bool have_best = false;

  // Scores members[from..) concurrently; bookkeeping stays sequential.
  auto score = [&](Population& p, std::size_t from) {
    const std::size_t count = p.members.size() - from;
    std::vector<double> values(count);
    parallel_for(
        count, [&](std::size_t k) { values[k] = objective(p.members[from + k]); },
        config.threads);
    std::size_t finite = 0;
    for (std::size_t k = 0; k < count; ++k) {
      ++result.evaluations;
      if (!std::isfinite(values[k])) {
        ++result.discarded;
        values[k] = kNegInf;
      } else {
        ++finite;
      }
      p.fitness[from + k] = values[k];
      if (values[k] > kNegInf && (!have_best || values[k] > result.value)) {
        result.value = values[k];
        result.eta_hat = p.members[from + k];
        have_best = true;
      }
    }
    return finite;
  };

  Population cur;
  cur.members.reserve(pop);
  for (std::size_t k = 0; k < pop; ++k)
    cur.members.push_back(regime_normalize(random_direction(rng, dim)));
  cur.fitness.assign(pop, kNegInf);
  if (score(cur, 0) == 0) throw OptimizationError("objective non-finite on the whole population");
  result.history.push_back(result.value);

  auto tournament = [&]() -> const Regime& {
    std::uniform_int_distribution<std::size_t> pick(0, pop - 1);
    std::size_t best = pick(rng);
    for (int k = 1; k < 3; ++k) {
      const std::size_t c = pick(rng);
      if (cur.fitness[c] > cur.fitness[best] || (cur.fitness[c] == cur.fitness[best] && c < best))
        best = c;
    }
    return cur.members[best];
  };

  std::size_t stall = 0;
  double last_best = result.value;
  for (std::size_t gen = 1; gen < config.generations; ++gen) {
    std::vector<std::size_t> order(pop);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cur.fitness[a] > cur.fitness[b]; });
    Population next;
    next.members.reserve(pop);
    next.fitness.reserve(pop);
    for (std::size_t e = 0; e < config.elite_count; ++e) {
      next.members.push_back(cur.members[order[e]]);
      next.fitness.push_back(cur.fitness[order[e]]);
    }
    while (next.members.size() < pop) {
      const Regime& a = tournament();
      const Regime& b = tournament();
      std::vector<double> child(a.eta());
      if (unif(rng) < config.crossover_rate) {
        for (std::size_t k = 0; k < dim; ++k) {
          const double w = unif(rng);
          child[k] = w * a[k] + (1.0 - w) * b[k];
        }
      }
      for (std::size_t k = 0; k < dim; ++k)
        if (unif(rng) < config.mutation_rate) child[k] += config.mutation_scale * normal(rng);
      double norm = 0.0;
      for (double x : child) norm += x * x;
      if (!(norm > 1e-20)) child = random_direction(rng, dim);
      next.members.push_back(regime_normalize(child));
      next.fitness.push_back(kNegInf);
    }
    cur = std::move(next);
    if (score(cur, config.elite_count) == 0 && config.elite_count == 0)
      throw OptimizationError("objective non-finite on a whole generation");
    result.history.push_back(result.value);
    if (result.value > last_best + kImprovementTolerance) {
      last_best = result.value;
      stall = 0;
    } else if (++stall >= config.stall_generations) {
      break;
    }
  }
  return result;
}

OptimizationResult grid_search_sphere(const Objective& objective, std::size_t dim,
                                      double resolution_degrees) {
  if (dim != 3) throw InvalidArgument("grid_search_sphere supports dim = 3 only");
  if (!(resolution_degrees > 0.0) || resolution_degrees > 90.0)
    throw InvalidArgument("resolution must lie in (0, 90] degrees");
  const auto n_theta = static_cast<std::size_t>(std::llround(180.0 / resolution_degrees));
  const auto n_phi = static_cast<std::size_t>(std::llround(360.0 / resolution_degrees));
  const double step = resolution_degrees * std::numbers::pi / 180.0;
  OptimizationResult result;
  bool have_best = false;
  for (std::size_t i = 0; i < n_theta; ++i) {
    const double theta = (static_cast<double>(i) + 0.5) * step;
    for (std::size_t j = 0; j < n_phi; ++j) {
      const double phi = (static_cast<double>(j) + 0.5) * step;
      const double v[3] = {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                           std::cos(theta)};
      Regime r = regime_normalize(v);
      const double f = objective(r);
      ++result.evaluations;
      if (!std::isfinite(f)) {
        ++result.discarded;
        continue;
      }
      if (!have_best || f > result.value) {
        result.value = f;
        result.eta_hat = std::move(r);
        have_best = true;
      }
    }
  }
  if (!have_best) throw OptimizationError("objective non-finite on the whole lattice");
  result.history.push_back(result.value);
  return result;
}

}  // namespace ivregime
