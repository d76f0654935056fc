#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ivregime/estimators.hpp"
#include "ivregime/evaluation.hpp"
#include "ivregime/io.hpp"
#include "ivregime/nuisance.hpp"
#include "ivregime/optimizer.hpp"
#include "ivregime/simgen.hpp"

using namespace ivregime;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kCalibrationStream = std::numeric_limits<std::uint64_t>::max();

// Flags that need conversion after parsing; numeric flags bind straight into
// RunConfig so that values from --config survive unless overridden.
struct Flags {
  std::string config_path;
  std::string setting, confounder, instrument_mechanism, censoring;
  std::string censoring_model, fz_model;
  std::vector<std::string> methods;
  double c0 = 0.0, t = 0.0;
  std::uint64_t seed = 0;
  CLI::Option *c0_opt = nullptr, *t_opt = nullptr, *seed_opt = nullptr;
  CLI::Option *setting_opt = nullptr, *confounder_opt = nullptr, *mechanism_opt = nullptr,
              *censoring_opt = nullptr, *censoring_model_opt = nullptr, *fz_opt = nullptr,
              *methods_opt = nullptr;
};

void add_options(CLI::App* app, RunConfig& c, Flags& f) {
  app->add_option("--config", f.config_path, "JSON config or results document to start from");
  f.setting_opt = app->add_option("--setting", f.setting, "Scenario setting: a, b, c or d");
  app->add_option("--iv-coefficient", c.scenario.iv_coefficient, "Coefficient of Z in the treatment model");
  f.confounder_opt = app->add_option("--confounder", f.confounder, "U law: bridge, normal or uniform");
  f.mechanism_opt = app->add_option("--instrument-mechanism", f.instrument_mechanism,
                                    "Z law: bernoulli or covariate");
  f.censoring_opt = app->add_option("--censoring", f.censoring, "Censoring: uniform, shifted or cox");
  app->add_option("--censor-rate", c.scenario.target_censor_rate, "Target rate for uniform censoring");
  app->add_option("--horizon", c.scenario.horizon, "Scenario horizon used when --t is absent");
  f.c0_opt = app->add_option("--c0", f.c0, "Uniform censoring bound; calibrated when absent");
  app->add_option("--n", c.n, "Sample size");
  app->add_option("--replications", c.replications, "Benchmark replications");
  f.t_opt = app->add_option("--t", f.t, "Horizon t of S*(t; eta)");
  f.methods_opt = app->add_option("--methods", f.methods, "Estimators, e.g. SIWKME-IV,SDRKME-IV")
                      ->delimiter(',');
  app->add_option("--population", c.ga.population_size, "GA population size");
  app->add_option("--generations", c.ga.generations, "GA generations");
  app->add_option("--crossover-rate", c.ga.crossover_rate, "GA crossover probability");
  app->add_option("--mutation-rate", c.ga.mutation_rate, "GA per-coordinate mutation probability");
  app->add_option("--mutation-scale", c.ga.mutation_scale, "GA mutation sd");
  app->add_option("--elite", c.ga.elite_count, "GA elite count");
  app->add_option("--stall", c.ga.stall_generations, "GA stall generations");
  f.seed_opt = app->add_option("--seed", f.seed, "Master seed");
  app->add_option("--bootstrap", c.bootstrap, "Bootstrap resamples B (0 disables)");
  app->add_option("--level", c.level, "Bootstrap interval level");
  app->add_option("--input", c.input, "Input CSV");
  app->add_option("--output", c.output, "Output path");
  app->add_option("--latent-output", c.latent_output, "Latent-truth CSV (simulate)");
  f.censoring_model_opt =
      app->add_option("--censoring-model", f.censoring_model, "S_C model: km or cox");
  f.fz_opt = app->add_option("--fz-model", f.fz_model, "f(Z|L) model: full or intercept");
  app->add_option("--normalize", c.normalize, "Covariate columns to min-max scale")->delimiter(',');
  app->add_option("--test-size", c.test_size, "Benchmark test-set size");
}

void apply_flags(RunConfig& c, const Flags& f) {
  if (f.setting_opt->count()) c.scenario.setting = parse_setting(f.setting);
  if (f.confounder_opt->count()) c.scenario.u_distribution = parse_confounder_law(f.confounder);
  if (f.mechanism_opt->count())
    c.scenario.z_mechanism = parse_instrument_mechanism(f.instrument_mechanism);
  if (f.censoring_opt->count()) c.scenario.censoring = parse_censoring_scheme(f.censoring);
  if (f.c0_opt->count()) c.scenario.c0 = f.c0;
  if (f.t_opt->count()) c.t = f.t;
  if (f.seed_opt->count()) c.seed = f.seed;
  if (f.methods_opt->count()) {
    c.methods.clear();
    for (const auto& m : f.methods) c.methods.push_back(EstimatorKind::parse(m));
  }
  if (f.censoring_model_opt->count())
    c = run_config_from_json(nlohmann::json{{"censoring-model", f.censoring_model}}, c);
  if (f.fz_opt->count()) c = run_config_from_json(nlohmann::json{{"fz-model", f.fz_model}}, c);
}

std::optional<std::string> find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

void emit(const Json& doc, const std::string& path) {
  const std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << text;
}

Json error_block(const std::string& type, const std::string& message,
                 const std::vector<RowIssue>& issues = {}) {
  Json err{{"type", type}, {"message", message}};
  if (!issues.empty()) {
    Json list = Json::array();
    for (const auto& i : issues) {
      Json item;
      item["row"] = i.row == static_cast<std::size_t>(-1) ? Json() : Json(i.row);
      item["field"] = i.field;
      item["reason"] = i.reason;
      list.push_back(std::move(item));
    }
    err["issues"] = std::move(list);
  }
  return Json{{"error", std::move(err)}};
}

int run_simulate(RunConfig c) {
  const std::uint64_t seed = c.seed.value_or(0);
  c.seed = seed;
  if (c.t) c.scenario.horizon = *c.t;
  if (c.scenario.censoring == CensoringScheme::kUniform && !c.scenario.c0) {
    Rng cal(derive_seed(seed, kCalibrationStream));
    c.scenario.c0 = calibrate_c0(c.scenario, c.scenario.target_censor_rate, cal);
  }
  Rng rng(derive_seed(seed, 0));
  const LatentCohort cohort = sample_cohort(c.scenario, c.n, rng);
  {
    std::ofstream out(c.output);
    if (!out) throw InvalidArgument("cannot write '" + c.output + "'");
    write_cohort_csv(out, cohort.dataset);
  }
  if (!c.latent_output.empty()) {
    std::ofstream out(c.latent_output);
    if (!out) throw InvalidArgument("cannot write '" + c.latent_output + "'");
    write_latent_csv(out, cohort);
  }
  Json meta;
  meta["version"] = kToolkitVersion;
  meta["config"] = to_json(c);
  meta["subjects"] = cohort.dataset.size();
  meta["events"] = cohort.dataset.event_count();
  meta["censored_fraction"] = 1.0 - static_cast<double>(cohort.dataset.event_count()) /
                                        static_cast<double>(cohort.dataset.size());
  std::cout << meta.dump(2) << "\n";
  return 0;
}

int run_estimate(RunConfig c) {
  const std::uint64_t seed = c.seed.value_or(0);
  c.seed = seed;
  const CsvDataset csv = load_csv(c.input, c.normalize);
  const Dataset& data = csv.data;
  const double t = *c.t;
  const NuisanceOptions opts = nuisance_for(c.methods, c.nuisance_options());
  const NuisanceSet nuisance = fit_nuisance(data, opts);

  Json doc;
  doc["version"] = kToolkitVersion;
  doc["config"] = to_json(c);
  Json info;
  info["subjects"] = data.size();
  info["covariates"] = data.dim();
  info["events"] = data.event_count();
  Json norm = Json::array();
  for (const auto& r : csv.normalized)
    norm.push_back({{"column", r.column}, {"min", r.min}, {"max", r.max}});
  info["normalized"] = std::move(norm);
  doc["data"] = std::move(info);

  Json results = Json::array();
  for (std::size_t k = 0; k < c.methods.size(); ++k) {
    const EstimatorKind kind = c.methods[k];
    const Smoothing smoothing = kind.smoothed ? Smoothing::plug_in() : Smoothing::off();
    const ValueFunction vf(data, nuisance, kind.method, t);
    GAConfig ga = c.ga;
    ga.seed = derive_seed(seed, 2 + k);
    const OptimizationResult opt = optimize(value_objective(vf, smoothing), data.dim() + 1, ga);
    const ValueEstimate est = vf.evaluate(opt.eta_hat, smoothing);
    const StepSurvival curve = vf.curve(opt.eta_hat, smoothing);
    std::vector<double> times;
    for (const auto& s : data) times.push_back(s.time);

    Json r;
    r["method"] = kind.name();
    r["eta_hat"] = opt.eta_hat.eta();
    r["value"] = est.value;
    r["restricted_mean"] =
        restricted_mean([&](double s) { return s <= 0.0 ? 1.0 : curve.at(s); }, times, t);
    const auto median = quantile_value(curve, 0.5);
    r["median"] = median ? Json(*median) : Json();
    r["diagnostics"] = {{"clamped", est.diagnostics.clamped},
                        {"skipped", est.diagnostics.skipped},
                        {"grid_size", est.diagnostics.grid_size},
                        {"effective_sample_size", est.diagnostics.effective_sample_size},
                        {"bandwidth", est.diagnostics.bandwidth}};
    r["ga"] = {{"generations", opt.history.size()},
               {"evaluations", opt.evaluations},
               {"discarded", opt.discarded},
               {"first_best", opt.history.front()},
               {"final_best", opt.history.back()}};
    if (c.bootstrap > 0) {
      const BootstrapResult b = bootstrap_ci(data, kind, c.nuisance_options(), ga_search(c.ga), t,
                                             c.bootstrap, c.level, derive_seed(seed, 1000 + k));
      r["bootstrap"] = {{"resamples", b.resamples},
                        {"failures", b.failures},
                        {"level", c.level},
                        {"diff_vs_all_treated", b.diff_all1},
                        {"ci_vs_all_treated", {b.ci_all1.lower, b.ci_all1.upper}},
                        {"sd_vs_all_treated", b.sd_all1},
                        {"diff_vs_none_treated", b.diff_all0},
                        {"ci_vs_none_treated", {b.ci_all0.lower, b.ci_all0.upper}},
                        {"sd_vs_none_treated", b.sd_all0}};
    }
    results.push_back(std::move(r));
  }
  doc["results"] = std::move(results);
  emit(doc, c.output);
  return 0;
}

int run_benchmark_command(const RunConfig& c) {
  const BenchmarkReport report = run_benchmark(c.benchmark_config());
  emit(to_json(report, c), c.output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  Flags flags[3];
  CLI::App app{"Optimal treatment regimes for survival outcomes with a binary instrument"};
  app.require_subcommand(1, 1);
  CLI::App* sim = app.add_subcommand("simulate", "Write a simulated cohort as CSV");
  CLI::App* est = app.add_subcommand("estimate", "Estimate regimes on a CSV cohort");
  CLI::App* bench = app.add_subcommand("benchmark", "Monte Carlo replication study");

  try {
    if (auto path = find_config_path(argc, argv)) {
      std::ifstream in(*path);
      if (!in) throw ConfigurationError("cannot open config '" + *path + "'");
      config = run_config_from_json(nlohmann::json::parse(in), config);
    }
  } catch (const std::exception& e) {
    std::cerr << error_block("ConfigurationError", e.what()).dump(2) << "\n";
    return 2;
  }
  CLI::App* subs[3] = {sim, est, bench};
  for (int k = 0; k < 3; ++k) add_options(subs[k], config, flags[k]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    config.command = sim->parsed() ? Command::kSimulate
                     : est->parsed() ? Command::kEstimate
                                     : Command::kBenchmark;
    apply_flags(config, flags[static_cast<int>(config.command)]);
    config.validate();
    switch (config.command) {
      case Command::kSimulate: return run_simulate(config);
      case Command::kEstimate: return run_estimate(config);
      case Command::kBenchmark: return run_benchmark_command(config);
    }
  } catch (const ValidationError& e) {
    std::cerr << error_block("ValidationError", e.what(), e.issues()).dump(2) << "\n";
    return 3;
  } catch (const ConfigurationError& e) {
    std::cerr << error_block("ConfigurationError", e.what()).dump(2) << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << error_block("InvalidArgument", e.what()).dump(2) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << error_block("EstimationError", e.what()).dump(2) << "\n";
    return 4;
  }
  return 0;
}
