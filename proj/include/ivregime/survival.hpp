#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ivregime/data.hpp"

namespace ivregime {

// Right-continuous step survival curve, equal to 1 before times.front().
struct StepSurvival {
  std::vector<double> times;   // strictly increasing
  std::vector<double> values;  // nonincreasing, in [0, 1]

  // S(s): last step at or before s.
  double at(double s) const;
  // S(s-): last step strictly before s.
  double left_limit(double s) const;
};

// Sorted unique event times (status == 1) not exceeding the horizon.
struct EventGrid {
  std::vector<double> times;
  std::size_t size() const noexcept { return times.size(); }
  bool empty() const noexcept { return times.empty(); }
};

EventGrid event_grid(const Dataset& data, double horizon);

// Product-limit estimator on (times, events). With events = 1 - status the
// result estimates the censoring distribution (reverse Kaplan-Meier).
// Events precede censorings at tied times.
StepSurvival km_survival(std::span<const double> times, std::span<const int> events);

// What to do with a hazard increment D(s)/R(s) outside [0, 1], which signed
// weights can produce.
enum class IncrementPolicy {
  kClamp,  // clamp each increment to [0, 1]
  kRaw,    // multiply the factors as they are; clamp only the final product
};

struct ProductLimitDiagnostics {
  std::size_t clamped = 0;  // hazard increments outside [0, 1]
  std::size_t skipped = 0;  // grid points with an empty weighted risk set
  std::size_t used = 0;     // factors that entered the product
};

// prod_{grid s <= t} (1 - D(s)/R(s)), skipping points with R(s) == 0 and
// treating out-of-range increments per `policy`. D and R are indexed like the
// grid. Throws DegenerateEstimate if every factor up to t is skipped.
double product_limit(std::span<const double> grid, std::span<const double> increments_num,
                     std::span<const double> increments_den, double t,
                     ProductLimitDiagnostics* diag = nullptr,
                     IncrementPolicy policy = IncrementPolicy::kClamp);

// Generic weighted product-limit: weights are row-major [subject][grid point].
// D(s) = sum_i num_i(s) dN_i(s), R(s) = sum_i den_i(s) Y_i(s).
double weighted_product_limit(std::span<const double> num_weights,
                              std::span<const double> den_weights, const Dataset& data,
                              const EventGrid& grid, double t,
                              ProductLimitDiagnostics* diag = nullptr,
                              IncrementPolicy policy = IncrementPolicy::kClamp);

}  // namespace ivregime
