#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "ivregime/data.hpp"
#include "ivregime/estimators.hpp"
#include "ivregime/nuisance.hpp"
#include "ivregime/simgen.hpp"

namespace testing {

using namespace ivregime;

inline Subject subject(double time, int status, int a, int z, std::vector<double> l) {
  return Subject{time, status, a, z, std::move(l)};
}

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Scenario with C0 calibrated once per process for each (setting, rate).
inline ScenarioSpec calibrated(Setting setting, double rate = 0.15) {
  static std::map<std::pair<int, double>, double> cache;
  ScenarioSpec spec;
  spec.setting = setting;
  spec.target_censor_rate = rate;
  const auto key = std::make_pair(static_cast<int>(setting), rate);
  auto it = cache.find(key);
  if (it == cache.end()) {
    Rng rng(12345);
    it = cache.emplace(key, calibrate_c0(spec, rate, rng)).first;
  }
  spec.c0 = it->second;
  return spec;
}

inline Dataset cohort(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_cohort(spec, n, rng).dataset;
}

inline Regime unit(std::vector<double> raw) { return regime_normalize(raw); }

// Straight transcription of the product-limit value estimators: every
// subject, grid point and candidate treatment a is visited explicitly, and
// d_eta(L) enters as the mixture (1 - w1, w1) over a = 0, 1.
inline double direct_value(const Dataset& data, const NuisanceSet& nu, Method method,
                           const Regime& regime, double t, std::optional<double> h,
                           bool augment = true, bool clamp_each = false) {
  std::set<double> events;
  for (const auto& s : data)
    if (s.status == 1 && s.time <= t) events.insert(s.time);

  const bool iv = method == Method::kIwkmeIv || method == Method::kDrkmeIv;
  const bool aug = augment && (method == Method::kDrkmeIv || method == Method::kAiwkme);

  std::vector<double> w1(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double idx = regime.index(data[i].covariates);
    w1[i] = h ? phi_cdf(idx / *h) : (idx >= 0.0 ? 1.0 : 0.0);
  }

  auto lambda_at = [](const CoxModel& m, double s, bool strict) {
    double v = 0.0;
    for (std::size_t k = 0; k < m.event_times.size(); ++k)
      if (strict ? m.event_times[k] < s : m.event_times[k] <= s) v = m.cumhaz[k];
    return v;
  };

  double surv = 1.0;
  for (double s : events) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Subject& sub = data[i];
      const auto& l = sub.covariates;
      const double dn = (sub.status == 1 && sub.time == s) ? 1.0 : 0.0;
      const double y = sub.time >= s ? 1.0 : 0.0;
      const double sc = censor_survival(nu, s, sub.instrument, l, sub.treatment);
      for (int a = 0; a < 2; ++a) {
        const double wa = a == 1 ? w1[i] : 1.0 - w1[i];
        if (wa == 0.0) continue;
        const double match = sub.treatment == a ? 1.0 : 0.0;
        double psi_dn = 0.0, psi_y = 0.0;
        if (iv) {
          const double f1 = predict_logistic(nu.instrument, nu.instrument.row(1, l));
          const double fz = sub.instrument == 1 ? f1 : 1.0 - f1;
          const double delta = delta_L(nu, l);
          const double c = (2.0 * sub.instrument - 1.0) / (delta * fz);
          const double direct_dn = (2.0 * sub.treatment - 1.0) * dn * match / sc;
          const double direct_y = (2.0 * sub.treatment - 1.0) * y * match / sc;
          if (!aug) {
            psi_dn = c * direct_dn;
            psi_y = c * direct_y;
          } else {
            const CoxModel& cox = *nu.outcome;
            const double sgn = 2.0 * a - 1.0;
            const double lb = lambda_at(cox, s, true);
            const double jump = lambda_at(cox, s, false) - lb;
            double g1 = 0.0, g2 = 0.0, g1p = 0.0, g2p = 0.0;
            for (int z = 0; z < 2; ++z) {
              const double p1 = predict_logistic(nu.treatment, nu.treatment.row(z, l));
              const double pa = a == 1 ? p1 : 1.0 - p1;
              const double r = std::exp([&] {
                const auto x = cox.terms.row(z, l, a);
                double lin = 0.0;
                for (std::size_t k = 0; k < x.size(); ++k) lin += x[k] * cox.beta[k];
                return lin;
              }());
              const double st = std::exp(-lb * r);
              const double dl = jump * r;
              g1 += (2.0 * z - 1.0) * sgn * pa / delta * st * dl;
              g2 += (2.0 * z - 1.0) * sgn * pa / delta * st;
              if (z == 0) {
                g1p = sgn * pa * st * dl;
                g2p = sgn * pa * st;
              }
            }
            const double pi10 = predict_logistic(nu.treatment, nu.treatment.row(0, l));
            psi_dn = c * (direct_dn - g1p - (sub.treatment - pi10) * g1) + g1;
            psi_y = c * (direct_y - g2p - (sub.treatment - pi10) * g2) + g2;
          }
        } else {
          const double e1 = predict_logistic(*nu.propensity, nu.propensity->row(0, l));
          const double pa = a == 1 ? e1 : 1.0 - e1;
          psi_dn = match * dn / (pa * sc);
          psi_y = match * y / (pa * sc);
          if (aug) {
            const CoxModel& cox = *nu.outcome_naive;
            const auto x = cox.terms.row(0, l, a);
            double lin = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) lin += x[k] * cox.beta[k];
            const double r = std::exp(lin);
            const double lb = lambda_at(cox, s, true);
            const double st = std::exp(-lb * r);
            const double dl = (lambda_at(cox, s, false) - lb) * r;
            psi_dn -= (match - pa) / pa * st * dl;
            psi_y -= (match - pa) / pa * st;
          }
        }
        num += wa * psi_dn;
        den += wa * psi_y;
      }
    }
    if (den == 0.0) continue;
    double hazard = num / den;
    if (clamp_each) hazard = std::clamp(hazard, 0.0, 1.0);
    surv *= 1.0 - hazard;
  }
  return std::clamp(surv, 0.0, 1.0);
}

// Plug-in bandwidth recomputed from scratch: 4^{1/3} n^{-1/3} sd(index).
inline double plug_in_bandwidth(const Dataset& data, const Regime& regime) {
  const double n = static_cast<double>(data.size());
  double mean = 0.0;
  for (const auto& s : data) mean += regime.index(s.covariates) / n;
  double ss = 0.0;
  for (const auto& s : data) ss += std::pow(regime.index(s.covariates) - mean, 2);
  const double sd = std::max(std::sqrt(ss / (n - 1.0)), 1e-8);
  return std::cbrt(4.0 / n) * sd;
}

}  // namespace testing
