#pragma once

#include <cstddef>

namespace ivregime {

inline constexpr double kBandwidthConstant = 1.5874010519681994;  // 4^{1/3}
inline constexpr double kIndexSdFloor = 1e-8;

struct Bandwidth {
  double h;
};

// h = 4^{1/3} n^{-1/3} sd, with sd floored at 1e-8 for degenerate index directions.
Bandwidth bandwidth(std::size_t n, double sd_index);

// Standard normal CDF via erfc; absolute error well below 1e-12.
double normal_cdf(double x);

// Phi(index / h), the smoothed counterpart of I{index >= 0}.
double smooth_indicator(double index, Bandwidth h);

}  // namespace ivregime
