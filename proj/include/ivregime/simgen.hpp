#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivregime/data.hpp"

namespace ivregime {

using Rng = std::mt19937_64;

// Settings (a)-(d): U coefficient in h(T) and the error law.
enum class Setting { kA, kB, kC, kD };
enum class ErrorLaw { kExtremeValue, kLogistic };
enum class ConfounderLaw { kBridge, kNormal, kUniform };
enum class InstrumentMechanism { kBernoulliHalf, kCovariateDependent };
enum class CensoringScheme {
  kUniform,         // C ~ U[0, C0], C0 calibrated to the target rate
  kShiftedUniform,  // C = T + U(-10, 10), floored at 0
  kCox,             // h(C) = L1 + 3A + eps', eps' extreme value
};

struct ScenarioSpec {
  static constexpr std::size_t p = 2;

  Setting setting = Setting::kA;
  double iv_coefficient = 5.0;
  ConfounderLaw u_distribution = ConfounderLaw::kBridge;
  InstrumentMechanism z_mechanism = InstrumentMechanism::kBernoulliHalf;
  CensoringScheme censoring = CensoringScheme::kUniform;
  double target_censor_rate = 0.15;
  double horizon = 2.0;
  std::optional<double> c0;                     // set by calibrate_c0 for kUniform
  std::optional<double> confounder_override;    // replaces the U coefficient when set

  double u_coefficient() const;
  ErrorLaw error_law() const;
  // (0, 1/sqrt2, -1/sqrt2): I{L1 - L2 >= 0}.
  static std::vector<double> optimal_eta();
  void validate() const;
};

std::string to_string(Setting s);
std::string to_string(ConfounderLaw u);
std::string to_string(InstrumentMechanism z);
std::string to_string(CensoringScheme c);
Setting parse_setting(std::string_view s);
ConfounderLaw parse_confounder_law(std::string_view s);
InstrumentMechanism parse_instrument_mechanism(std::string_view s);
CensoringScheme parse_censoring_scheme(std::string_view s);

// Uniform(0,1) draw kept 1e-12 away from both ends.
double sample_open_unit(Rng& rng);
// (1/phi) log(sin(phi pi V) / sin(phi pi (1 - V))), phi = 1/2.
double sample_bridge(Rng& rng);
// -log(-log V): P(eps <= x) = exp(-exp(-x)).
double sample_extreme_value(Rng& rng);
// log(V / (1 - V)).
double sample_logistic(Rng& rng);
double sample_confounder(ConfounderLaw law, Rng& rng);
double sample_error(ErrorLaw law, Rng& rng);

// h^{-1}(v) = log(1 + exp(v + 2)), the inverse of h(s) = log(exp(s) - 1) - 2.
double inverse_link(double v);
// T*(a) = h^{-1}(-0.5 L1 + a (L1 - L2) + c_U U + eps).
double potential_time(const ScenarioSpec& spec, int a, std::span<const double> covariates,
                      double u, double eps);

struct Latent {
  double u = 0.0;
  double eps = 0.0;
  double t0 = 0.0;  // T*(0)
  double t1 = 0.0;  // T*(1)
  double c = 0.0;
};

struct LatentCohort {
  Dataset dataset;
  std::vector<Latent> latent;  // aligned with dataset rows
};

LatentCohort sample_cohort(const ScenarioSpec& spec, std::size_t n, Rng& rng);

// Bisection on C0 so that P(C < T*(A)) with C ~ U[0, C0] hits target_rate
// on a fixed pilot sample. Throws CalibrationError when no C0 <= ceiling
// brackets the target.
double calibrate_c0(const ScenarioSpec& spec, double target_rate, Rng& rng,
                    double ceiling = 1e4, std::size_t pilot = 200000);

// Fresh covariates and potential outcomes, for oracle values and MR.
struct OracleSample {
  std::vector<std::vector<double>> covariates;
  std::vector<double> t0, t1;
};

OracleSample draw_oracle_sample(const ScenarioSpec& spec, std::size_t m, Rng& rng);
// Fraction of the sample with T*(d_eta(L)) > t.
double oracle_value(const OracleSample& sample, const Regime& regime, double t);
double oracle_value(const ScenarioSpec& spec, const Regime& regime, double t, std::size_t m,
                    Rng& rng);

// splitmix64 mix of (master, index); streams for replications and sub-tasks.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace ivregime
