#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"

using namespace ivregime;
using testing::expit;

namespace {

constexpr double kPi = std::numbers::pi;

double bridge_density(double u) { return 1.0 / (2.0 * kPi * std::cosh(u / 2.0)); }

// Trapezoid rule over the bridge density; the integrand is analytic in a
// strip, so a 0.05 step on [-80, 80] is accurate far beyond 1e-10.
template <class F>
double bridge_expectation(F f) {
  const double step = 0.05;
  double s = 0.0;
  for (double u = -80.0; u <= 80.0 + 1e-9; u += step) s += f(u) * bridge_density(u);
  return s * step;
}

// S*(2; eta_opt) by quadrature: midpoint rule over L in [-2, 2]^2 and the
// trapezoid rule over U, with the error law's closed-form survival.
double quadrature_truth(Setting setting) {
  const double cu = setting == Setting::kA || setting == Setting::kC ? 0.5 : 1.0;
  const bool ev = setting == Setting::kA || setting == Setting::kB;
  const double h2 = std::log(std::exp(2.0) - 1.0) - 2.0;
  auto surv_eps = [&](double x) {  // P(eps > x)
    return ev ? -std::expm1(-std::exp(-x)) : 1.0 - expit(x);
  };
  const int k = 300;
  const double du = 0.1;
  std::vector<double> us, ws;
  for (double u = -80.0; u <= 80.0 + 1e-9; u += du) {
    us.push_back(u);
    ws.push_back(bridge_density(u) * du);
  }
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    const double l1 = -2.0 + 4.0 * (i + 0.5) / k;
    for (int j = 0; j < k; ++j) {
      const double l2 = -2.0 + 4.0 * (j + 0.5) / k;
      const double mu = -0.5 * l1 + std::max(l1 - l2, 0.0);
      double s = 0.0;
      for (std::size_t q = 0; q < us.size(); ++q) s += ws[q] * surv_eps(h2 - mu - cu * us[q]);
      total += s;
    }
  }
  return total / (k * k);
}

}  // namespace

TEST_CASE("inverse link and potential times") {
  ScenarioSpec spec;
  spec.confounder_override = 0.0;
  const std::vector<double> l{1.0, 0.0};
  CHECK(potential_time(spec, 1, l, 3.0, 0.0) == doctest::Approx(std::log1p(std::exp(2.5))).epsilon(1e-15));
  CHECK(potential_time(spec, 1, l, 3.0, 0.0) == doctest::Approx(2.5790).epsilon(1e-4));
  CHECK(potential_time(spec, 0, l, 0.0, 0.0) == doctest::Approx(std::log1p(std::exp(1.5))));
  // h(h^{-1}(v)) = v, including the tails.
  for (double v : {-30.0, -5.0, -0.3, 0.0, 2.0, 40.0}) {
    const double s = inverse_link(v);
    CHECK(s > 0.0);
    CHECK(std::log(std::expm1(s)) - 2.0 == doctest::Approx(v).epsilon(1e-9));
  }
  CHECK(inverse_link(800.0) == doctest::Approx(802.0));
  CHECK(inverse_link(-1.0) < inverse_link(-0.999));
}

TEST_CASE("bridge sampler: symmetry, spread and logistic marginalization") {
  Rng rng(2718);
  const std::size_t m = 1000000;
  std::vector<double> u(m);
  double mean = 0.0;
  for (double& x : u) {
    x = sample_bridge(rng);
    mean += x / m;
  }
  double var = 0.0;
  for (double x : u) var += (x - mean) * (x - mean) / (m - 1);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(std::sqrt(var) - 3.14) < 0.02);
  // Closed form: sd = pi sqrt((1/phi^2 - 1) / 3) with phi = 1/2.
  CHECK(std::abs(std::sqrt(var) - kPi) < 0.02);

  for (double b0 : {-1.0, 0.5, 2.0}) {
    const double integral = bridge_expectation([&](double x) { return expit(b0 + x); });
    CHECK(integral == doctest::Approx(expit(b0 / 2.0)).epsilon(1e-8));
    double mc = 0.0;
    for (double x : u) mc += expit(b0 + x) / m;
    CHECK(std::abs(mc - integral) < 0.003);
  }
}

TEST_CASE("logistic and extreme-value samplers") {
  Rng rng(99);
  const std::size_t m = 1000000;
  std::vector<double> x(m);
  for (double& v : x) v = sample_logistic(rng);
  std::nth_element(x.begin(), x.begin() + m / 2, x.end());
  CHECK(std::abs(x[m / 2]) < 0.01);
  double mean = 0.0, sq = 0.0;
  for (double v : x) {
    mean += v / m;
    sq += v * v / m;
  }
  CHECK(std::abs(std::sqrt(sq - mean * mean) - kPi / std::sqrt(3.0)) < 0.01);

  // eps = -log(-log V): P(eps <= x) = exp(-e^{-x}), so P(eps <= 0) = 1/e.
  std::size_t below = 0;
  double ev_mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double e = sample_extreme_value(rng);
    below += e <= 0.0;
    ev_mean += e / m;
  }
  CHECK(std::abs(static_cast<double>(below) / m - std::exp(-1.0)) < 0.002);
  CHECK(std::abs(ev_mean - 0.5772156649) < 0.005);  // Euler-Mascheroni

  for (int i = 0; i < 1000; ++i) {
    const double v = sample_open_unit(rng);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("alternative confounder laws share the bridge spread") {
  for (ConfounderLaw law : {ConfounderLaw::kNormal, ConfounderLaw::kUniform}) {
    Rng rng(3);
    double s = 0.0, ss = 0.0;
    const int m = 400000;
    for (int i = 0; i < m; ++i) {
      const double u = sample_confounder(law, rng);
      s += u;
      ss += u * u;
    }
    CHECK(std::abs(s / m) < 0.02);
    CHECK(std::abs(std::sqrt(ss / m - (s / m) * (s / m)) - 3.14) < 0.02);
  }
}

TEST_CASE("cohorts satisfy the observation model") {
  for (CensoringScheme scheme :
       {CensoringScheme::kUniform, CensoringScheme::kShiftedUniform, CensoringScheme::kCox}) {
    ScenarioSpec spec = testing::calibrated(Setting::kD);
    spec.censoring = scheme;
    Rng rng(12);
    const LatentCohort c = sample_cohort(spec, 3000, rng);
    REQUIRE(c.latent.size() == c.dataset.size());
    for (std::size_t i = 0; i < c.dataset.size(); ++i) {
      const Subject& s = c.dataset[i];
      const Latent& z = c.latent[i];
      const double t = s.treatment == 1 ? z.t1 : z.t0;
      CHECK(s.time == std::min(t, z.c));
      CHECK(s.status == (t <= z.c ? 1 : 0));
      CHECK(z.t0 > 0.0);
      CHECK(z.t1 > 0.0);
      CHECK(z.t0 == potential_time(spec, 0, s.covariates, z.u, z.eps));
      CHECK(z.t1 == potential_time(spec, 1, s.covariates, z.u, z.eps));
      for (double l : s.covariates) CHECK(std::abs(l) <= 2.0);
      if (scheme == CensoringScheme::kShiftedUniform)
        CHECK((z.c == 0.0 || std::abs(z.c - t) <= 10.0));
      if (scheme == CensoringScheme::kCox)
        CHECK(z.c > 0.0);
    }
  }
  ScenarioSpec missing;
  Rng rng(1);
  CHECK_THROWS_AS(sample_cohort(missing, 10, rng), ConfigurationError);
}

TEST_CASE("cohorts are reproducible and respect the exclusion restriction") {
  ScenarioSpec spec = testing::calibrated(Setting::kA);
  Rng r1(55), r2(55);
  const LatentCohort a = sample_cohort(spec, 500, r1);
  const LatentCohort b = sample_cohort(spec, 500, r2);
  for (std::size_t i = 0; i < 500; ++i) {
    CHECK(a.dataset[i].time == b.dataset[i].time);
    CHECK(a.dataset[i].covariates == b.dataset[i].covariates);
    CHECK(a.latent[i].c == b.latent[i].c);
  }

  // A weaker instrument changes who is treated, never the potential outcomes.
  ScenarioSpec weak = spec;
  weak.iv_coefficient = 3.0;
  Rng r3(55);
  const LatentCohort w = sample_cohort(weak, 500, r3);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    CHECK(w.latent[i].t0 == a.latent[i].t0);
    CHECK(w.latent[i].t1 == a.latent[i].t1);
    CHECK(w.dataset[i].instrument == a.dataset[i].instrument);
    changed += w.dataset[i].treatment != a.dataset[i].treatment;
  }
  CHECK(changed > 0);
}

TEST_CASE("instrument mechanisms") {
  ScenarioSpec spec = testing::calibrated(Setting::kA);
  spec.z_mechanism = InstrumentMechanism::kCovariateDependent;
  const Dataset d = testing::cohort(spec, 40000, 8);
  double zbar = 0.0, hi = 0.0, nhi = 0.0;
  for (const auto& s : d) {
    zbar += s.instrument / 40000.0;
    if (s.covariates[0] + s.covariates[1] > 2.0) {
      hi += s.instrument;
      ++nhi;
    }
  }
  CHECK(std::abs(zbar - 0.5) < 0.01);
  // E[expit(L1 + L2) | L1 + L2 > 2] is about 0.92.
  CHECK(hi / nhi > 0.85);
}

TEST_CASE("censoring calibration") {
  for (double target : {0.15, 0.30}) {
    ScenarioSpec spec;
    Rng cal(404);
    spec.c0 = calibrate_c0(spec, target, cal);
    const Dataset d = testing::cohort(spec, 100000, 505);
    const double rate = 1.0 - static_cast<double>(d.event_count()) / d.size();
    CHECK(std::abs(rate - target) < 0.005);
  }
  ScenarioSpec spec;
  Rng cal(1);
  CHECK_THROWS_AS(calibrate_c0(spec, 0.999, cal, 1e-3, 20000), CalibrationError);
  CHECK_THROWS_AS(calibrate_c0(spec, 0.05, cal, 0.5, 20000), CalibrationError);
}

TEST_CASE("oracle values") {
  ScenarioSpec spec;
  const Regime opt = regime_normalize(ScenarioSpec::optimal_eta());
  Rng rng(6);
  CHECK(oracle_value(spec, opt, 0.0, 10000, rng) == 1.0);
  CHECK_THROWS_AS(oracle_value(spec, opt, 2.0, 100, rng), InvalidArgument);

  const OracleSample sample = draw_oracle_sample(spec, 200000, rng);
  const Regime flipped = regime_normalize(std::vector<double>{0.0, -1.0, 1.0});
  CHECK(oracle_value(sample, flipped, 2.0) < oracle_value(sample, opt, 2.0) - 0.05);
  CHECK(oracle_value(sample, regime_normalize(std::vector<double>{1.0, 0.2, 0.1}), 2.0) <
        oracle_value(sample, opt, 2.0));
}

TEST_CASE("oracle values match quadrature of the generating model") {
  // At m = 1e6 the Monte Carlo sd is below 5e-4.
  const Regime opt = regime_normalize(ScenarioSpec::optimal_eta());
  for (Setting s : {Setting::kA, Setting::kB, Setting::kC, Setting::kD}) {
    ScenarioSpec spec;
    spec.setting = s;
    Rng rng(derive_seed(31, static_cast<std::uint64_t>(s)));
    const double mc = oracle_value(spec, opt, 2.0, 1000000, rng);
    const double truth = quadrature_truth(s);
    CAPTURE(to_string(s));
    CAPTURE(truth);
    CHECK(std::abs(mc - truth) < 0.002);
  }
}

TEST_CASE("seed derivation and scenario names") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
  for (Setting s : {Setting::kA, Setting::kB, Setting::kC, Setting::kD})
    CHECK(parse_setting(to_string(s)) == s);
  for (auto c : {CensoringScheme::kUniform, CensoringScheme::kShiftedUniform, CensoringScheme::kCox})
    CHECK(parse_censoring_scheme(to_string(c)) == c);
  for (auto u : {ConfounderLaw::kBridge, ConfounderLaw::kNormal, ConfounderLaw::kUniform})
    CHECK(parse_confounder_law(to_string(u)) == u);
  for (auto z : {InstrumentMechanism::kBernoulliHalf, InstrumentMechanism::kCovariateDependent})
    CHECK(parse_instrument_mechanism(to_string(z)) == z);
  CHECK_THROWS_AS(parse_setting("e"), ConfigurationError);

  ScenarioSpec bad;
  bad.target_censor_rate = 1.5;
  CHECK_THROWS(bad.validate());
  CHECK(ScenarioSpec{}.u_coefficient() == 0.5);
  ScenarioSpec d;
  d.setting = Setting::kD;
  CHECK(d.u_coefficient() == 1.0);
  CHECK(d.error_law() == ErrorLaw::kLogistic);
}
