#include "ivregime/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "ivregime/parallel.hpp"

namespace ivregime {

namespace {

double mean_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sd_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Linear interpolation between order statistics (R's type 7).
double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::size_t method_rank(const BenchmarkConfig& config, const EstimatorKind& k) {
  auto it = std::find(config.methods.begin(), config.methods.end(), k);
  return static_cast<std::size_t>(it - config.methods.begin());
}

Smoothing smoothing_for(const EstimatorKind& k) {
  return k.smoothed ? Smoothing::plug_in() : Smoothing::off();
}

Regime constant_regime(std::size_t p, double sign) {
  std::vector<double> raw(p + 1, 0.0);
  raw[0] = sign;
  return regime_normalize(raw);
}

}  // namespace

double misclassification_rate(const Regime& eta_hat, const Regime& eta_true,
                              std::span<const std::vector<double>> covariates) {
  if (covariates.empty()) throw InvalidArgument("misclassification_rate needs a test set");
  std::size_t differ = 0;
  for (const auto& l : covariates)
    differ += static_cast<std::size_t>(regime_decide(eta_hat, l) != regime_decide(eta_true, l));
  return static_cast<double>(differ) / static_cast<double>(covariates.size());
}

BiasStats bias_stats(std::span<const Regime> estimates, const Regime& eta_true) {
  const std::size_t d = eta_true.size();
  BiasStats out;
  out.bias.assign(d, 0.0);
  out.sd.assign(d, 0.0);
  if (estimates.empty()) return out;
  for (const auto& e : estimates)
    if (e.size() != d) throw InvalidArgument("bias_stats: regimes differ in dimension");
  std::vector<double> comp(estimates.size());
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t r = 0; r < estimates.size(); ++r) comp[r] = estimates[r][k];
    out.bias[k] = mean_of(comp) - eta_true[k];
    out.sd[k] = sd_of(comp);
  }
  return out;
}

NuisanceOptions nuisance_for(std::span<const EstimatorKind> methods, NuisanceOptions base) {
  base.fit_outcome_iv = false;
  base.fit_naive = false;
  base.fit_outcome_naive = false;
  for (const auto& m : methods) {
    if (m.method == Method::kDrkmeIv) base.fit_outcome_iv = true;
    if (!m.uses_instrument()) base.fit_naive = true;
    if (m.method == Method::kAiwkme) base.fit_outcome_naive = true;
  }
  return base;
}

Objective value_objective(const ValueFunction& vf, const Smoothing& smoothing) {
  return [&vf, smoothing](const Regime& r) {
    try {
      return vf.evaluate(r, smoothing).value;
    } catch (const DegenerateEstimate&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
}

ScenarioSpec prepare_scenario(const BenchmarkConfig& config) {
  ScenarioSpec spec = config.scenario;
  spec.validate();
  if (spec.censoring == CensoringScheme::kUniform && !spec.c0) {
    Rng rng(derive_seed(config.master_seed, std::numeric_limits<std::uint64_t>::max()));
    spec.c0 = calibrate_c0(spec, spec.target_censor_rate, rng);
  }
  return spec;
}

ReplicationOutcome run_replication(const BenchmarkConfig& config, const ScenarioSpec& scenario,
                                   std::size_t index) {
  ReplicationOutcome out;
  const std::uint64_t seed = derive_seed(config.master_seed, index);
  Rng cohort_rng(derive_seed(seed, 0));
  Rng test_rng(derive_seed(seed, 1));
  const double t = scenario.horizon;
  const Regime truth = regime_normalize(ScenarioSpec::optimal_eta());

  OracleSample test;
  std::optional<NuisanceSet> nuisance;
  std::optional<LatentCohort> cohort;
  try {
    cohort = sample_cohort(scenario, config.n, cohort_rng);
    test = draw_oracle_sample(scenario, config.test_size, test_rng);
    nuisance = fit_nuisance(cohort->dataset, nuisance_for(config.methods, config.nuisance));
  } catch (const std::exception& e) {
    out.failures.push_back({index, "", e.what()});
    return out;
  }

  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    const EstimatorKind kind = config.methods[m];
    const auto start = std::chrono::steady_clock::now();
    try {
      ValueFunction vf(cohort->dataset, *nuisance, kind.method, t);
      GAConfig ga = config.ga;
      ga.seed = derive_seed(seed, 2 + m);
      ga.threads = 1;
      const OptimizationResult opt = optimize(value_objective(vf, smoothing_for(kind)),
                                              cohort->dataset.dim() + 1, ga);
      ReplicationRecord rec;
      rec.method = kind;
      rec.replication = index;
      rec.eta_hat = opt.eta_hat;
      rec.estimate = opt.value;
      rec.value_oracle = oracle_value(test, opt.eta_hat, t);
      rec.mr = misclassification_rate(opt.eta_hat, truth, test.covariates);
      rec.evaluations = opt.evaluations;
      rec.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      out.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      out.failures.push_back({index, kind.name(), e.what()});
    }
  }
  return out;
}

BenchmarkReport aggregate(const BenchmarkConfig& config, std::vector<ReplicationRecord> records,
                          std::vector<ReplicationFailure> failures) {
  BenchmarkReport report;
  report.config = config;
  std::sort(records.begin(), records.end(), [&](const auto& a, const auto& b) {
    const auto ra = method_rank(config, a.method), rb = method_rank(config, b.method);
    return ra != rb ? ra < rb : a.replication < b.replication;
  });
  std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) {
    return a.replication != b.replication ? a.replication < b.replication : a.method < b.method;
  });
  const Regime truth = regime_normalize(ScenarioSpec::optimal_eta());
  for (const auto& kind : config.methods) {
    std::vector<Regime> etas;
    std::vector<double> values, mrs, estimates;
    for (const auto& r : records) {
      if (!(r.method == kind)) continue;
      etas.push_back(r.eta_hat);
      values.push_back(r.value_oracle);
      mrs.push_back(r.mr);
      estimates.push_back(r.estimate);
    }
    MethodSummary s;
    s.method = kind;
    s.count = etas.size();
    s.eta = bias_stats(etas, truth);
    s.value_mean = mean_of(values);
    s.value_sd = sd_of(values);
    s.mr_mean = mean_of(mrs);
    s.mr_sd = sd_of(mrs);
    s.estimate_mean = mean_of(estimates);
    report.methods.push_back(std::move(s));
  }
  report.records = std::move(records);
  report.failures = std::move(failures);
  return report;
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
  if (config.replications < 1) throw InvalidArgument("replications must be at least 1");
  if (config.methods.empty()) throw InvalidArgument("benchmark needs at least one method");
  config.ga.validate();
  BenchmarkConfig prepared = config;
  prepared.scenario = prepare_scenario(config);
  std::vector<ReplicationOutcome> outcomes(config.replications);
  const std::size_t threads = config.threads == 0 ? default_thread_count() : config.threads;
  parallel_for(
      config.replications,
      [&](std::size_t r) { outcomes[r] = run_replication(prepared, prepared.scenario, r); },
      threads);
  std::vector<ReplicationRecord> records;
  std::vector<ReplicationFailure> failures;
  for (auto& o : outcomes) {
    for (auto& r : o.records) records.push_back(std::move(r));
    for (auto& f : o.failures) failures.push_back(std::move(f));
  }
  return aggregate(prepared, std::move(records), std::move(failures));
}

RegimeSearch ga_search(const GAConfig& config) {
  return [config](const ValueFunction& vf, const Smoothing& smoothing, std::uint64_t seed) {
    GAConfig ga = config;
    ga.seed = seed;
    return optimize(value_objective(vf, smoothing), vf.dim() + 1, ga).eta_hat;
  };
}

BootstrapResult bootstrap_ci(const Dataset& data, EstimatorKind kind,
                             const NuisanceOptions& nuisance, const RegimeSearch& search, double t,
                             std::size_t b, double level, std::uint64_t seed) {
  if (b < 50) throw InvalidArgument("bootstrap needs B >= 50");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("level must lie in (0, 1)");
  const Smoothing smoothing = smoothing_for(kind);
  const Regime all1 = constant_regime(data.dim(), 1.0);
  const Regime all0 = constant_regime(data.dim(), -1.0);
  const EstimatorKind kinds[] = {kind};
  const NuisanceOptions opts = nuisance_for(kinds, nuisance);

  struct Diffs {
    Regime eta;
    double value, d1, d0;
  };
  auto estimate = [&](const Dataset& d, std::uint64_t s) {
    const NuisanceSet fit = fit_nuisance(d, opts);
    const ValueFunction vf(d, fit, kind.method, t);
    Regime eta = search(vf, smoothing, s);
    const double v = vf.evaluate(eta, smoothing).value;
    return Diffs{eta, v, v - vf.evaluate(all1, smoothing).value,
                 v - vf.evaluate(all0, smoothing).value};
  };

  BootstrapResult out;
  const Diffs point = estimate(data, derive_seed(seed, 0));
  out.eta_hat = point.eta;
  out.value = point.value;
  out.diff_all1 = point.d1;
  out.diff_all0 = point.d0;

  const std::size_t retry_cap = 10 * b;
  std::vector<double> d1, d0;
  Rng rng(derive_seed(seed, 1));
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<std::size_t> rows(data.size());
  for (std::size_t attempt = 0; d1.size() < b && attempt < retry_cap; ++attempt) {
    for (auto& r : rows) r = pick(rng);
    try {
      const Diffs bd = estimate(data.subset(rows), derive_seed(seed, 2 + attempt));
      d1.push_back(bd.d1);
      d0.push_back(bd.d0);
    } catch (const std::exception&) {
      ++out.failures;
    }
  }
  out.resamples = d1.size();
  if (d1.empty()) throw DegenerateEstimate("every bootstrap resample failed");
  out.sd_all1 = sd_of(d1);
  out.sd_all0 = sd_of(d0);
  std::sort(d1.begin(), d1.end());
  std::sort(d0.begin(), d0.end());
  const double lo = (1.0 - level) / 2.0, hi = 1.0 - lo;
  out.ci_all1 = {quantile_sorted(d1, lo), quantile_sorted(d1, hi)};
  out.ci_all0 = {quantile_sorted(d0, lo), quantile_sorted(d0, hi)};
  return out;
}

}  // namespace ivregime
