#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivregime/data.hpp"
#include "ivregime/estimators.hpp"
#include "ivregime/evaluation.hpp"
#include "ivregime/simgen.hpp"

namespace ivregime {

inline constexpr const char* kToolkitVersion = "1.0.0";

struct NormalizationRange {
  std::string column;
  double min = 0.0, max = 0.0;
};

struct CsvDataset {
  Dataset data;
  std::vector<NormalizationRange> normalized;
};

// Columns time,status,treatment,instrument,L1..Lp in any order; p is the
// number of L columns. Listed covariate columns are min-max scaled to [0, 1].
// Schema and cell problems throw ValidationError with every issue found.
CsvDataset read_csv(std::istream& in, std::span<const std::string> normalize = {});
CsvDataset load_csv(const std::string& path, std::span<const std::string> normalize = {});

// 17 significant digits, so that reading back reproduces every double.
std::string format_double(double x);
void write_cohort_csv(std::ostream& out, const Dataset& data);
// Observed columns followed by u,eps,t0,t1,c.
void write_latent_csv(std::ostream& out, const LatentCohort& cohort);

enum class Command { kSimulate, kEstimate, kBenchmark };

std::string to_string(Command c);
Command parse_command(std::string_view s);

struct RunConfig {
  Command command = Command::kBenchmark;
  ScenarioSpec scenario;
  std::size_t n = 500;
  std::size_t replications = 100;
  std::optional<double> t;  // defaults to the scenario horizon for simulated data
  std::vector<EstimatorKind> methods = default_methods();
  GAConfig ga;
  std::optional<std::uint64_t> seed;
  std::size_t bootstrap = 0;  // B; 0 disables
  double level = 0.9;
  std::string input, output, latent_output;
  CensoringKind censoring_model = CensoringKind::kMarginal;
  InstrumentModel fz_model = InstrumentModel::kFull;
  std::vector<std::string> normalize;
  std::size_t test_size = 10000;

  static std::vector<EstimatorKind> default_methods();
  // Required fields per command and numeric ranges.
  void validate() const;
  NuisanceOptions nuisance_options() const;
  BenchmarkConfig benchmark_config() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
// Keys absent from `doc` keep the value in `base`; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig base = {});

nlohmann::ordered_json to_json(const BenchmarkReport& report, const RunConfig& echo);
nlohmann::ordered_json regime_json(const Regime& r);

}  // namespace ivregime
