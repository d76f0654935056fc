#include "ivregime/survival.hpp"

#include <algorithm>
#include <numeric>

namespace ivregime {

double StepSurvival::at(double s) const {
  auto it = std::upper_bound(times.begin(), times.end(), s);
  if (it == times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepSurvival::left_limit(double s) const {
  auto it = std::lower_bound(times.begin(), times.end(), s);
  if (it == times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

EventGrid event_grid(const Dataset& data, double horizon) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  EventGrid grid;
  for (const auto& s : data) {
    if (s.status == 1 && s.time <= horizon) grid.times.push_back(s.time);
  }
  std::sort(grid.times.begin(), grid.times.end());
  grid.times.erase(std::unique(grid.times.begin(), grid.times.end()), grid.times.end());
  return grid;
}

StepSurvival km_survival(std::span<const double> times, std::span<const int> events) {
  if (times.empty()) throw InvalidArgument("km_survival needs at least one observation");
  if (times.size() != events.size())
    throw InvalidArgument("km_survival: times and events differ in length");
  const std::size_t n = times.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  StepSurvival out;
  double surv = 1.0;
  std::size_t at_risk = n;
  for (std::size_t k = 0; k < n;) {
    const double t = times[order[k]];
    std::size_t deaths = 0, leaving = 0;
    while (k < n && times[order[k]] == t) {
      deaths += static_cast<std::size_t>(events[order[k]] == 1);
      ++leaving;
      ++k;
    }
    if (deaths > 0) {
      surv *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      out.times.push_back(t);
      out.values.push_back(surv);
    }
    at_risk -= leaving;
  }
  return out;
}

double product_limit(std::span<const double> grid, std::span<const double> increments_num,
                     std::span<const double> increments_den, double t,
                     ProductLimitDiagnostics* diag, IncrementPolicy policy) {
  if (increments_num.size() != grid.size() || increments_den.size() != grid.size())
    throw InvalidArgument("product_limit: increment arrays must match the grid");
  ProductLimitDiagnostics local;
  double surv = 1.0;
  for (std::size_t j = 0; j < grid.size() && grid[j] <= t; ++j) {
    const double den = increments_den[j];
    if (den == 0.0) {
      ++local.skipped;
      continue;
    }
    double hazard = increments_num[j] / den;
    if (hazard < 0.0 || hazard > 1.0) {
      ++local.clamped;
      if (policy == IncrementPolicy::kClamp) hazard = std::clamp(hazard, 0.0, 1.0);
    }
    surv *= 1.0 - hazard;
    ++local.used;
  }
  if (local.used == 0 && local.skipped > 0)
    throw DegenerateEstimate("every product-limit factor has an empty weighted risk set");
  if (diag) *diag = local;
  return policy == IncrementPolicy::kRaw ? std::clamp(surv, 0.0, 1.0) : surv;
}

double weighted_product_limit(std::span<const double> num_weights,
                              std::span<const double> den_weights, const Dataset& data,
                              const EventGrid& grid, double t,
                              ProductLimitDiagnostics* diag, IncrementPolicy policy) {
  if (!(t > 0.0)) throw InvalidArgument("t must be positive");
  const std::size_t n = data.size(), g = grid.size();
  if (num_weights.size() != n * g || den_weights.size() != n * g)
    throw InvalidArgument("weighted_product_limit: weights must be subjects x grid points");
  std::vector<double> num(g, 0.0), den(g, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& s = data[i];
    for (std::size_t j = 0; j < g; ++j) {
      const double sj = grid.times[j];
      if (s.time < sj) break;
      den[j] += den_weights[i * g + j];
      if (s.status == 1 && s.time == sj) num[j] += num_weights[i * g + j];
    }
  }
  return product_limit(grid.times, num, den, t, diag, policy);
}

}  // namespace ivregime
