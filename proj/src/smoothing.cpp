#include "ivregime/smoothing.hpp"

#include <cmath>

#include "ivregime/errors.hpp"

namespace ivregime {

Bandwidth bandwidth(std::size_t n, double sd_index) {
  if (n < 2) throw InvalidArgument("bandwidth needs n >= 2");
  if (!(sd_index >= 0.0)) throw InvalidArgument("bandwidth needs a nonnegative sd");
  const double sd = sd_index < kIndexSdFloor ? kIndexSdFloor : sd_index;
  return {kBandwidthConstant * std::cbrt(1.0 / static_cast<double>(n)) * sd};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double smooth_indicator(double index, Bandwidth h) {
  if (!(h.h > 0.0)) throw InvalidArgument("bandwidth must be positive");
  return normal_cdf(index / h.h);
}

}  // namespace ivregime
