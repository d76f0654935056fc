#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "ivregime/evaluation.hpp"

using namespace ivregime;
using testing::unit;

namespace {

GAConfig quick_ga() {
  GAConfig ga;
  ga.population_size = 20;
  ga.generations = 10;
  return ga;
}

BenchmarkConfig quick_benchmark() {
  BenchmarkConfig c;
  c.methods = {EstimatorKind{Method::kIwkmeIv, true}, EstimatorKind{Method::kIwkme, true}};
  c.n = 300;
  c.replications = 3;
  c.master_seed = 42;
  c.ga = quick_ga();
  c.test_size = 10000;
  c.threads = 1;
  return c;
}

bool same_record(const ReplicationRecord& a, const ReplicationRecord& b) {
  return a.method == b.method && a.replication == b.replication &&
         a.eta_hat.eta() == b.eta_hat.eta() && a.estimate == b.estimate &&
         a.value_oracle == b.value_oracle && a.mr == b.mr && a.evaluations == b.evaluations;
}

}  // namespace

TEST_CASE("misclassification rate") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<std::vector<double>> l(20000);
  for (auto& row : l) row = {u(rng), u(rng)};
  const Regime truth = regime_normalize(ScenarioSpec::optimal_eta());
  CHECK(misclassification_rate(truth, truth, l) == 0.0);
  CHECK(misclassification_rate(unit({0, -1, 1}), truth, l) == 1.0);

  const double a = 0.1;
  const Regime rotated = unit({0.05, std::cos(a + std::numbers::pi / 4), -std::sin(a + std::numbers::pi / 4)});
  std::size_t differ = 0;
  for (const auto& row : l) {
    const bool d1 = rotated[0] + rotated[1] * row[0] + rotated[2] * row[1] >= 0.0;
    const bool d2 = row[0] - row[1] >= 0.0;
    differ += d1 != d2;
  }
  CHECK(misclassification_rate(rotated, truth, l) == static_cast<double>(differ) / l.size());
  CHECK(differ > 0);
}

TEST_CASE("bias statistics") {
  const Regime truth = regime_normalize(ScenarioSpec::optimal_eta());
  const std::vector<Regime> same(5, truth);
  const BiasStats s = bias_stats(same, truth);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(s.bias[k] == 0.0);
    CHECK(s.sd[k] == 0.0);
  }
  const Regime a = unit({0.1, 1, -1}), b = unit({-0.1, 1, -1});
  const std::vector<Regime> pair{a, b};
  const BiasStats t = bias_stats(pair, truth);
  CHECK(std::abs(t.bias[0]) < 1e-15);
  CHECK(t.sd[0] == doctest::Approx(a[0] * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(t.sd[1] == 0.0);
  CHECK(t.bias[1] == doctest::Approx(a[1] - truth[1]).epsilon(1e-12));
}

TEST_CASE("aggregation does not depend on record order") {
  BenchmarkConfig c = quick_benchmark();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g;
  std::vector<ReplicationRecord> records;
  for (std::size_t r = 0; r < 40; ++r) {
    for (const auto& m : c.methods) {
      ReplicationRecord rec;
      rec.method = m;
      rec.replication = r;
      rec.eta_hat = unit({g(rng), g(rng), g(rng)});
      rec.value_oracle = u(rng);
      rec.mr = u(rng);
      rec.estimate = u(rng);
      records.push_back(rec);
    }
  }
  const BenchmarkReport base = aggregate(c, records, {});
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(records.begin(), records.end(), rng);
    const BenchmarkReport other = aggregate(c, records, {});
    REQUIRE(other.methods.size() == base.methods.size());
    for (std::size_t k = 0; k < base.methods.size(); ++k) {
      const auto &x = base.methods[k], &y = other.methods[k];
      CHECK(x.value_mean == y.value_mean);
      CHECK(x.value_sd == y.value_sd);
      CHECK(x.mr_mean == y.mr_mean);
      CHECK(x.mr_sd == y.mr_sd);
      CHECK(x.eta.bias == y.eta.bias);
      CHECK(x.eta.sd == y.eta.sd);
      CHECK(x.count == 40);
    }
    for (std::size_t i = 0; i < records.size(); ++i)
      CHECK(same_record(base.records[i], other.records[i]));
  }
}

TEST_CASE("benchmarks are deterministic and replications reproducible in isolation") {
  BenchmarkConfig c = quick_benchmark();
  const BenchmarkReport a = run_benchmark(c);
  c.threads = 3;
  const BenchmarkReport b = run_benchmark(c);
  REQUIRE(a.records.size() == 6);
  REQUIRE(b.records.size() == 6);
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(same_record(a.records[i], b.records[i]));
  CHECK(a.config.scenario.c0 == b.config.scenario.c0);

  const ScenarioSpec prepared = prepare_scenario(c);
  CHECK(prepared.c0 == a.config.scenario.c0);
  const ReplicationOutcome one = run_replication(c, prepared, 2);
  REQUIRE(one.records.size() == 2);
  for (const auto& rec : one.records) {
    const auto it = std::find_if(a.records.begin(), a.records.end(), [&](const auto& r) {
      return r.replication == 2 && r.method == rec.method;
    });
    REQUIRE(it != a.records.end());
    CHECK(same_record(*it, rec));
  }
  for (const auto& rec : a.records) {
    CHECK(rec.mr >= 0.0);
    CHECK(rec.mr <= 1.0);
    CHECK(rec.value_oracle >= 0.0);
    CHECK(rec.value_oracle <= 1.0);
  }
}

TEST_CASE("failing replications are recorded, not thrown") {
  BenchmarkConfig c = quick_benchmark();
  c.n = 6;
  c.replications = 4;
  const BenchmarkReport r = run_benchmark(c);
  CHECK(!r.failures.empty());
  std::size_t counted = 0;
  for (const auto& m : r.methods) counted += m.count;
  CHECK(counted == r.records.size());
  for (const auto& f : r.failures) CHECK(!f.message.empty());
}

TEST_CASE("nuisance options follow the requested methods") {
  const std::vector<EstimatorKind> iv{{Method::kIwkmeIv, true}};
  const NuisanceOptions a = nuisance_for(iv);
  CHECK_FALSE(a.fit_outcome_iv);
  CHECK_FALSE(a.fit_naive);
  CHECK_FALSE(a.fit_outcome_naive);
  const std::vector<EstimatorKind> all{{Method::kDrkmeIv, true}, {Method::kAiwkme, true}};
  const NuisanceOptions b = nuisance_for(all);
  CHECK(b.fit_outcome_iv);
  CHECK(b.fit_naive);
  CHECK(b.fit_outcome_naive);
}

TEST_CASE("bootstrap intervals for value differences") {
  const Dataset data = testing::cohort(testing::calibrated(Setting::kA), 300, 77);
  const EstimatorKind kind{Method::kIwkmeIv, true};
  const BootstrapResult r = bootstrap_ci(data, kind, {}, ga_search(quick_ga()), 2.0, 50, 0.9, 5);
  CHECK(r.resamples == 50);
  CHECK(r.ci_all1.lower <= r.diff_all1);
  CHECK(r.diff_all1 <= r.ci_all1.upper);
  CHECK(r.ci_all0.lower <= r.diff_all0);
  CHECK(r.diff_all0 <= r.ci_all0.upper);
  CHECK(r.sd_all1 > 0.0);

  const BootstrapResult again = bootstrap_ci(data, kind, {}, ga_search(quick_ga()), 2.0, 50, 0.9, 5);
  CHECK(again.ci_all0.lower == r.ci_all0.lower);
  CHECK(again.eta_hat.eta() == r.eta_hat.eta());

  // A search pinned to "treat everyone" has no advantage over it.
  const RegimeSearch pinned = [](const ValueFunction& vf, const Smoothing&, std::uint64_t) {
    std::vector<double> e(vf.dim() + 1, 0.0);
    e[0] = 1.0;
    return regime_normalize(e);
  };
  const BootstrapResult p = bootstrap_ci(data, kind, {}, pinned, 2.0, 50, 0.9, 5);
  CHECK(p.diff_all1 == 0.0);
  CHECK(p.ci_all1.lower <= 0.0);
  CHECK(p.ci_all1.upper >= 0.0);
  CHECK(p.sd_all1 == 0.0);

  CHECK_THROWS_AS(bootstrap_ci(data, kind, {}, pinned, 2.0, 49, 0.9, 5), InvalidArgument);
  CHECK_THROWS_AS(bootstrap_ci(data, kind, {}, pinned, 2.0, 50, 1.0, 5), InvalidArgument);
}

TEST_CASE("value objective maps degenerate estimates to NaN") {
  const Dataset data = testing::cohort(testing::calibrated(Setting::kA), 200, 9);
  const NuisanceSet ns = fit_nuisance(data);
  const ValueFunction vf(data, ns, Method::kIwkmeIv, 2.0);
  const Objective obj = value_objective(vf, Smoothing::plug_in());
  const Regime r = unit({0, 1, -1});
  CHECK(obj(r) == vf.evaluate(r, Smoothing::plug_in()).value);

  // Both subjects are treated; a never-treat regime leaves every weighted
  // risk set empty.
  const Dataset tiny = make_dataset({testing::subject(1, 1, 1, 1, {0.0}),
                                     testing::subject(2, 0, 1, 1, {0.0})});
  NuisanceSet hand;
  hand.p = 1;
  hand.instrument = {{0.0}, LogisticDesign::kIntercept, 0};
  hand.treatment = {{0.0, 1.0, 0.0}, LogisticDesign::kInstrumentCovariates, 0};
  const ValueFunction degenerate(tiny, hand, Method::kIwkmeIv, 2.0);
  CHECK(std::isfinite(value_objective(degenerate, Smoothing::off())(unit({1, 0}))));
  CHECK(std::isnan(value_objective(degenerate, Smoothing::off())(unit({-1, 0}))));
}
