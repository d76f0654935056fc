#include "ivregime/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ivregime {

namespace {

constexpr double kOpenEps = 1e-12;
constexpr double kBridgePhi = 0.5;
constexpr double kNormalSd = 3.14;
constexpr double kUniformHalfWidth = 5.44;
constexpr double kShiftHalfWidth = 10.0;

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int bernoulli(double prob, Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob ? 1 : 0;
}

// Draw order per subject: L1, L2, Z, U, A, eps, censoring. Callers that do
// not need Z, A or C skip those draws.
struct Draw {
  std::vector<double> l;
  int z = 0;
  double u = 0.0;
  int a = 0;
  double eps = 0.0;
};

Draw draw_subject(const ScenarioSpec& spec, Rng& rng, bool with_treatment) {
  std::uniform_real_distribution<double> cov(-2.0, 2.0);
  Draw d;
  d.l = {cov(rng), cov(rng)};
  if (with_treatment) {
    const double fz = spec.z_mechanism == InstrumentMechanism::kBernoulliHalf
                          ? 0.5
                          : expit(d.l[0] + d.l[1]);
    d.z = bernoulli(fz, rng);
  }
  d.u = sample_confounder(spec.u_distribution, rng);
  if (with_treatment)
    d.a = bernoulli(expit(-2.5 + d.l[0] + spec.iv_coefficient * d.z - 0.5 * d.u), rng);
  d.eps = sample_error(spec.error_law(), rng);
  return d;
}

}  // namespace

double ScenarioSpec::u_coefficient() const {
  if (confounder_override) return *confounder_override;
  return setting == Setting::kA || setting == Setting::kC ? 0.5 : 1.0;
}

ErrorLaw ScenarioSpec::error_law() const {
  return setting == Setting::kA || setting == Setting::kB ? ErrorLaw::kExtremeValue
                                                          : ErrorLaw::kLogistic;
}

std::vector<double> ScenarioSpec::optimal_eta() {
  return {0.0, std::numbers::sqrt2 / 2.0, -std::numbers::sqrt2 / 2.0};
}

void ScenarioSpec::validate() const {
  if (!(target_censor_rate > 0.0 && target_censor_rate < 1.0))
    throw ConfigurationError("target censoring rate must lie in (0, 1)");
  if (!(horizon > 0.0)) throw ConfigurationError("horizon must be positive");
  if (!std::isfinite(iv_coefficient)) throw ConfigurationError("iv coefficient must be finite");
  if (c0 && !(*c0 > 0.0)) throw ConfigurationError("C0 must be positive");
}

std::string to_string(Setting s) {
  switch (s) {
    case Setting::kA: return "a";
    case Setting::kB: return "b";
    case Setting::kC: return "c";
    case Setting::kD: return "d";
  }
  return "?";
}

std::string to_string(ConfounderLaw u) {
  switch (u) {
    case ConfounderLaw::kBridge: return "bridge";
    case ConfounderLaw::kNormal: return "normal";
    case ConfounderLaw::kUniform: return "uniform";
  }
  return "?";
}

std::string to_string(InstrumentMechanism z) {
  return z == InstrumentMechanism::kBernoulliHalf ? "bernoulli" : "covariate";
}

std::string to_string(CensoringScheme c) {
  switch (c) {
    case CensoringScheme::kUniform: return "uniform";
    case CensoringScheme::kShiftedUniform: return "shifted";
    case CensoringScheme::kCox: return "cox";
  }
  return "?";
}

Setting parse_setting(std::string_view s) {
  for (Setting v : {Setting::kA, Setting::kB, Setting::kC, Setting::kD})
    if (to_string(v) == s) return v;
  throw ConfigurationError("unknown setting '" + std::string(s) + "' (expected a, b, c or d)");
}

ConfounderLaw parse_confounder_law(std::string_view s) {
  for (ConfounderLaw v : {ConfounderLaw::kBridge, ConfounderLaw::kNormal, ConfounderLaw::kUniform})
    if (to_string(v) == s) return v;
  throw ConfigurationError("unknown confounder law '" + std::string(s) + "'");
}

InstrumentMechanism parse_instrument_mechanism(std::string_view s) {
  for (auto v : {InstrumentMechanism::kBernoulliHalf, InstrumentMechanism::kCovariateDependent})
    if (to_string(v) == s) return v;
  throw ConfigurationError("unknown instrument mechanism '" + std::string(s) + "'");
}

CensoringScheme parse_censoring_scheme(std::string_view s) {
  for (auto v : {CensoringScheme::kUniform, CensoringScheme::kShiftedUniform, CensoringScheme::kCox})
    if (to_string(v) == s) return v;
  throw ConfigurationError("unknown censoring scheme '" + std::string(s) + "'");
}

double sample_open_unit(Rng& rng) {
  const double v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return std::clamp(v, kOpenEps, 1.0 - kOpenEps);
}

double sample_bridge(Rng& rng) {
  const double v = sample_open_unit(rng);
  return std::log(std::sin(kBridgePhi * std::numbers::pi * v) /
                  std::sin(kBridgePhi * std::numbers::pi * (1.0 - v))) /
         kBridgePhi;
}

double sample_extreme_value(Rng& rng) { return -std::log(-std::log(sample_open_unit(rng))); }

double sample_logistic(Rng& rng) {
  const double v = sample_open_unit(rng);
  return std::log(v / (1.0 - v));
}

double sample_confounder(ConfounderLaw law, Rng& rng) {
  switch (law) {
    case ConfounderLaw::kBridge: return sample_bridge(rng);
    case ConfounderLaw::kNormal: return std::normal_distribution<double>(0.0, kNormalSd)(rng);
    case ConfounderLaw::kUniform:
      return std::uniform_real_distribution<double>(-kUniformHalfWidth, kUniformHalfWidth)(rng);
  }
  return 0.0;
}

double sample_error(ErrorLaw law, Rng& rng) {
  return law == ErrorLaw::kExtremeValue ? sample_extreme_value(rng) : sample_logistic(rng);
}

double inverse_link(double v) {
  const double x = v + 2.0;
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double potential_time(const ScenarioSpec& spec, int a, std::span<const double> covariates,
                      double u, double eps) {
  const double l1 = covariates[0], l2 = covariates[1];
  return inverse_link(-0.5 * l1 + a * (l1 - l2) + spec.u_coefficient() * u + eps);
}

LatentCohort sample_cohort(const ScenarioSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  if (n == 0) throw InvalidArgument("sample_cohort needs n >= 1");
  if (spec.censoring == CensoringScheme::kUniform && !spec.c0)
    throw ConfigurationError("uniform censoring needs a calibrated C0");
  std::vector<Subject> subjects;
  subjects.reserve(n);
  LatentCohort out;
  out.latent.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Draw d = draw_subject(spec, rng, true);
    Latent lat;
    lat.u = d.u;
    lat.eps = d.eps;
    lat.t0 = potential_time(spec, 0, d.l, d.u, d.eps);
    lat.t1 = potential_time(spec, 1, d.l, d.u, d.eps);
    const double t = d.a == 1 ? lat.t1 : lat.t0;
    switch (spec.censoring) {
      case CensoringScheme::kUniform:
        lat.c = std::uniform_real_distribution<double>(0.0, *spec.c0)(rng);
        break;
      case CensoringScheme::kShiftedUniform:
        lat.c = std::max(
            0.0, t + std::uniform_real_distribution<double>(-kShiftHalfWidth, kShiftHalfWidth)(rng));
        break;
      case CensoringScheme::kCox:
        lat.c = inverse_link(d.l[0] + 3.0 * d.a + sample_extreme_value(rng));
        break;
    }
    Subject s;
    s.time = std::min(t, lat.c);
    s.status = t <= lat.c ? 1 : 0;
    s.treatment = d.a;
    s.instrument = d.z;
    s.covariates = std::move(d.l);
    subjects.push_back(std::move(s));
    out.latent.push_back(lat);
  }
  out.dataset = make_dataset(std::move(subjects));
  return out;
}

double calibrate_c0(const ScenarioSpec& spec, double target_rate, Rng& rng, double ceiling,
                    std::size_t pilot) {
  if (!(target_rate > 0.0 && target_rate < 1.0))
    throw InvalidArgument("target_rate must lie in (0, 1)");
  if (!(ceiling > 0.0)) throw InvalidArgument("ceiling must be positive");
  if (pilot == 0) throw InvalidArgument("pilot size must be positive");
  // Fixed pilot: observed T and a uniform V per subject, C = C0 * V.
  std::vector<double> t(pilot), v(pilot);
  for (std::size_t i = 0; i < pilot; ++i) {
    Draw d = draw_subject(spec, rng, true);
    t[i] = potential_time(spec, d.a, d.l, d.u, d.eps);
    v[i] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  auto rate = [&](double c0) {
    std::size_t censored = 0;
    for (std::size_t i = 0; i < pilot; ++i) censored += static_cast<std::size_t>(c0 * v[i] < t[i]);
    return static_cast<double>(censored) / static_cast<double>(pilot);
  };
  // Rate decreases in C0; expand upward until the target is bracketed.
  double lo = 0.0, hi = std::min(1.0, ceiling);
  while (rate(hi) > target_rate) {
    if (hi >= ceiling)
      throw CalibrationError("no C0 up to the ceiling reaches the target censoring rate");
    lo = hi;
    hi = std::min(2.0 * hi, ceiling);
  }
  double best = hi, best_gap = std::abs(rate(hi) - target_rate);
  for (int iter = 0; iter < 200 && hi - lo > 1e-12 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate(mid);
    if (std::abs(r - target_rate) < best_gap) {
      best = mid;
      best_gap = std::abs(r - target_rate);
    }
    if (r > target_rate) lo = mid;
    else hi = mid;
    if (best_gap < 1e-4) break;
  }
  if (best_gap >= 0.003) throw CalibrationError("bisection did not reach the target censoring rate");
  return best;
}

OracleSample draw_oracle_sample(const ScenarioSpec& spec, std::size_t m, Rng& rng) {
  OracleSample out;
  out.covariates.reserve(m);
  out.t0.reserve(m);
  out.t1.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Draw d = draw_subject(spec, rng, false);
    out.t0.push_back(potential_time(spec, 0, d.l, d.u, d.eps));
    out.t1.push_back(potential_time(spec, 1, d.l, d.u, d.eps));
    out.covariates.push_back(std::move(d.l));
  }
  return out;
}

double oracle_value(const OracleSample& sample, const Regime& regime, double t) {
  if (sample.covariates.empty()) throw InvalidArgument("oracle sample is empty");
  std::size_t alive = 0;
  for (std::size_t i = 0; i < sample.covariates.size(); ++i) {
    const double ti = regime_decide(regime, sample.covariates[i]) == 1 ? sample.t1[i]
                                                                        : sample.t0[i];
    alive += static_cast<std::size_t>(ti > t);
  }
  return static_cast<double>(alive) / static_cast<double>(sample.covariates.size());
}

double oracle_value(const ScenarioSpec& spec, const Regime& regime, double t, std::size_t m,
                    Rng& rng) {
  if (m < 10000) throw InvalidArgument("oracle_value needs m >= 10000");
  return oracle_value(draw_oracle_sample(spec, m, rng), regime, t);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master) ^ (index * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

}  // namespace ivregime
