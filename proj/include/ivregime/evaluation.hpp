#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ivregime/data.hpp"
#include "ivregime/estimators.hpp"
#include "ivregime/nuisance.hpp"
#include "ivregime/optimizer.hpp"
#include "ivregime/simgen.hpp"

namespace ivregime {

// Fraction of covariate rows on which the two regimes disagree.
double misclassification_rate(const Regime& eta_hat, const Regime& eta_true,
                              std::span<const std::vector<double>> covariates);

struct BiasStats {
  std::vector<double> bias;  // mean(eta_hat - eta_true) per component
  std::vector<double> sd;    // sample sd of eta_hat per component
};

BiasStats bias_stats(std::span<const Regime> estimates, const Regime& eta_true);

struct BenchmarkConfig {
  ScenarioSpec scenario;  // c0 is calibrated on demand for uniform censoring
  std::vector<EstimatorKind> methods;
  std::size_t n = 500;
  std::size_t replications = 100;
  std::uint64_t master_seed = 0;
  GAConfig ga;
  NuisanceOptions nuisance;  // instrument/censoring model choices
  std::size_t test_size = 10000;
  std::size_t threads = 0;  // 0: default_thread_count()
};

struct ReplicationRecord {
  EstimatorKind method;
  std::size_t replication = 0;
  Regime eta_hat;
  double estimate = 0.0;      // estimated value at eta_hat on the training cohort
  double value_oracle = 0.0;  // S*(t; eta_hat) on the test draw
  double mr = 0.0;
  std::size_t evaluations = 0;
  double runtime = 0.0;       // seconds, not part of the serialized report
};

struct ReplicationFailure {
  std::size_t replication = 0;
  std::string method;  // empty when the whole replication failed
  std::string message;
};

struct ReplicationOutcome {
  std::vector<ReplicationRecord> records;
  std::vector<ReplicationFailure> failures;
};

struct MethodSummary {
  EstimatorKind method;
  std::size_t count = 0;
  BiasStats eta;
  double value_mean = 0.0, value_sd = 0.0;
  double mr_mean = 0.0, mr_sd = 0.0;
  double estimate_mean = 0.0;
};

struct BenchmarkReport {
  BenchmarkConfig config;  // with the calibrated c0 filled in
  std::vector<MethodSummary> methods;
  std::vector<ReplicationRecord> records;  // sorted by (method, replication)
  std::vector<ReplicationFailure> failures;
};

// C0 calibrated with a stream derived from the master seed when needed.
ScenarioSpec prepare_scenario(const BenchmarkConfig& config);

// One replication, reproducible in isolation from (master_seed, index).
// `scenario` must already be prepared.
ReplicationOutcome run_replication(const BenchmarkConfig& config, const ScenarioSpec& scenario,
                                   std::size_t index);

// Deterministic fold over records; input order does not matter.
BenchmarkReport aggregate(const BenchmarkConfig& config, std::vector<ReplicationRecord> records,
                          std::vector<ReplicationFailure> failures);

BenchmarkReport run_benchmark(const BenchmarkConfig& config);

// Search procedure used inside the bootstrap: returns eta_hat for a fitted
// value function, using `seed` for any randomness.
using RegimeSearch = std::function<Regime(const ValueFunction&, const Smoothing&, std::uint64_t)>;
RegimeSearch ga_search(const GAConfig& config);

struct Interval {
  double lower = 0.0, upper = 0.0;
};

struct BootstrapResult {
  Regime eta_hat;
  double value = 0.0;
  double diff_all1 = 0.0, diff_all0 = 0.0;  // S(eta_hat) - S(all-1), S(eta_hat) - S(all-0)
  Interval ci_all1, ci_all0;
  double sd_all1 = 0.0, sd_all0 = 0.0;
  std::size_t resamples = 0;
  std::size_t failures = 0;
};

BootstrapResult bootstrap_ci(const Dataset& data, EstimatorKind kind,
                             const NuisanceOptions& nuisance, const RegimeSearch& search, double t,
                             std::size_t b, double level, std::uint64_t seed);

// Nuisance options covering every model the given methods need.
NuisanceOptions nuisance_for(std::span<const EstimatorKind> methods, NuisanceOptions base = {});

// The GA objective for one method: estimated value, NaN when degenerate.
Objective value_objective(const ValueFunction& vf, const Smoothing& smoothing);

}  // namespace ivregime
