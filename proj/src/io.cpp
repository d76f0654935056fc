#include "ivregime/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace ivregime {

namespace {

constexpr std::size_t kDatasetLevel = static_cast<std::size_t>(-1);
const char* const kRequired[] = {"time", "status", "treatment", "instrument"};

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

// Index of "L<k>" for k >= 1, or nullopt.
std::optional<std::size_t> covariate_index(const std::string& name) {
  if (name.size() < 2 || name[0] != 'L') return std::nullopt;
  std::size_t k = 0;
  auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
  if (ec != std::errc() || ptr != name.data() + name.size() || k == 0 || name[1] == '0')
    return std::nullopt;
  return k - 1;
}

template <class J>
nlohmann::ordered_json methods_json(const std::vector<EstimatorKind>& methods) {
  J out = J::array();
  for (const auto& m : methods) out.push_back(m.name());
  return out;
}

}  // namespace

CsvDataset read_csv(std::istream& in, std::span<const std::string> normalize) {
  std::string line;
  std::vector<RowIssue> issues;
  if (!std::getline(in, line)) throw ValidationError({{kDatasetLevel, "", "missing header row"}});
  const auto header = split(line);
  std::map<std::string, std::size_t> column;
  std::vector<std::optional<std::size_t>> cov_slot(header.size());
  std::size_t p = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (column.count(header[c])) issues.push_back({kDatasetLevel, header[c], "duplicate column"});
    column[header[c]] = c;
    if (auto k = covariate_index(header[c])) {
      cov_slot[c] = *k;
      p = std::max(p, *k + 1);
    } else if (std::find(std::begin(kRequired), std::end(kRequired), header[c]) ==
               std::end(kRequired)) {
      issues.push_back({kDatasetLevel, header[c], "unexpected column"});
    }
  }
  for (const char* req : kRequired)
    if (!column.count(req)) issues.push_back({kDatasetLevel, req, "missing column"});
  if (p == 0) issues.push_back({kDatasetLevel, "L1", "missing column"});
  for (std::size_t k = 0; k < p; ++k)
    if (!column.count("L" + std::to_string(k + 1)))
      issues.push_back({kDatasetLevel, "L" + std::to_string(k + 1), "missing column"});
  for (const auto& name : normalize)
    if (!covariate_index(name) || !column.count(name))
      issues.push_back({kDatasetLevel, name, "cannot normalize: not a covariate column"});
  if (!issues.empty()) throw ValidationError(issues);

  std::vector<RawRow> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      issues.push_back({row++, "", "expected " + std::to_string(header.size()) + " cells, found " +
                                       std::to_string(cells.size())});
      continue;
    }
    RawRow r;
    r.covariates.assign(p, 0.0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        issues.push_back({row, header[c], "not a number: '" + cells[c] + "'"});
        continue;
      }
      if (cov_slot[c]) r.covariates[*cov_slot[c]] = *v;
      else if (header[c] == "time") r.time = *v;
      else if (header[c] == "status") r.status = *v;
      else if (header[c] == "treatment") r.treatment = *v;
      else r.instrument = *v;
    }
    rows.push_back(std::move(r));
    ++row;
  }
  if (!issues.empty()) throw ValidationError(issues);

  CsvDataset out;
  for (const auto& name : normalize) {
    const std::size_t k = *covariate_index(name);
    NormalizationRange range{name, INFINITY, -INFINITY};
    for (const auto& r : rows) {
      range.min = std::min(range.min, r.covariates[k]);
      range.max = std::max(range.max, r.covariates[k]);
    }
    if (!(range.max > range.min))
      throw ValidationError({{kDatasetLevel, name, "cannot normalize a constant column"}});
    for (auto& r : rows) r.covariates[k] = (r.covariates[k] - range.min) / (range.max - range.min);
    out.normalized.push_back(range);
  }
  out.data = validate_dataset(rows);
  return out;
}

CsvDataset load_csv(const std::string& path, std::span<const std::string> normalize) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  return read_csv(in, normalize);
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

void write_header(std::ostream& out, std::size_t p) {
  out << "time,status,treatment,instrument";
  for (std::size_t k = 0; k < p; ++k) out << ",L" << k + 1;
}

void write_subject(std::ostream& out, const Subject& s) {
  out << format_double(s.time) << ',' << s.status << ',' << s.treatment << ',' << s.instrument;
  for (double l : s.covariates) out << ',' << format_double(l);
}

}  // namespace

void write_cohort_csv(std::ostream& out, const Dataset& data) {
  write_header(out, data.dim());
  out << '\n';
  for (const auto& s : data) {
    write_subject(out, s);
    out << '\n';
  }
}

void write_latent_csv(std::ostream& out, const LatentCohort& cohort) {
  write_header(out, cohort.dataset.dim());
  out << ",u,eps,t0,t1,c\n";
  for (std::size_t i = 0; i < cohort.dataset.size(); ++i) {
    write_subject(out, cohort.dataset[i]);
    const Latent& l = cohort.latent[i];
    for (double v : {l.u, l.eps, l.t0, l.t1, l.c}) out << ',' << format_double(v);
    out << '\n';
  }
}

std::string to_string(Command c) {
  switch (c) {
    case Command::kSimulate: return "simulate";
    case Command::kEstimate: return "estimate";
    case Command::kBenchmark: return "benchmark";
  }
  return "?";
}

Command parse_command(std::string_view s) {
  for (Command c : {Command::kSimulate, Command::kEstimate, Command::kBenchmark})
    if (to_string(c) == s) return c;
  throw ConfigurationError("unknown command '" + std::string(s) + "'");
}

std::vector<EstimatorKind> RunConfig::default_methods() {
  return {{Method::kIwkmeIv, true}, {Method::kDrkmeIv, true}, {Method::kIwkme, true},
          {Method::kAiwkme, true}};
}

void RunConfig::validate() const {
  scenario.validate();
  ga.validate();
  if (methods.empty()) throw ConfigurationError("at least one method is required");
  if (t && !(*t > 0.0)) throw ConfigurationError("t must be positive");
  if (!(level > 0.0 && level < 1.0)) throw ConfigurationError("level must lie in (0, 1)");
  if (bootstrap != 0 && bootstrap < 50) throw ConfigurationError("bootstrap B must be 0 or >= 50");
  switch (command) {
    case Command::kSimulate:
      if (n < 1) throw ConfigurationError("n must be at least 1");
      if (output.empty()) throw ConfigurationError("simulate needs --output");
      break;
    case Command::kEstimate:
      if (input.empty()) throw ConfigurationError("estimate needs --input");
      if (!t) throw ConfigurationError("estimate needs an explicit --t for external data");
      break;
    case Command::kBenchmark:
      if (!seed) throw ConfigurationError("benchmark needs --seed");
      if (n < 10) throw ConfigurationError("n must be at least 10");
      if (replications < 1) throw ConfigurationError("replications must be at least 1");
      if (test_size < 1) throw ConfigurationError("test-size must be at least 1");
      break;
  }
}

NuisanceOptions RunConfig::nuisance_options() const {
  NuisanceOptions o;
  o.censoring = censoring_model;
  o.instrument_model = fz_model;
  return o;
}

BenchmarkConfig RunConfig::benchmark_config() const {
  BenchmarkConfig b;
  b.scenario = scenario;
  if (t) b.scenario.horizon = *t;
  b.methods = methods;
  b.n = n;
  b.replications = replications;
  b.master_seed = seed.value_or(0);
  b.ga = ga;
  b.nuisance = nuisance_options();
  b.test_size = test_size;
  return b;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = to_string(c.command);
  j["setting"] = to_string(c.scenario.setting);
  j["iv-coefficient"] = c.scenario.iv_coefficient;
  j["confounder"] = to_string(c.scenario.u_distribution);
  j["instrument-mechanism"] = to_string(c.scenario.z_mechanism);
  j["censoring"] = to_string(c.scenario.censoring);
  j["censor-rate"] = c.scenario.target_censor_rate;
  j["horizon"] = c.scenario.horizon;
  j["c0"] = c.scenario.c0 ? nlohmann::ordered_json(*c.scenario.c0) : nlohmann::ordered_json();
  j["n"] = c.n;
  j["replications"] = c.replications;
  j["t"] = c.t ? nlohmann::ordered_json(*c.t) : nlohmann::ordered_json();
  j["methods"] = methods_json<nlohmann::ordered_json>(c.methods);
  j["population"] = c.ga.population_size;
  j["generations"] = c.ga.generations;
  j["crossover-rate"] = c.ga.crossover_rate;
  j["mutation-rate"] = c.ga.mutation_rate;
  j["mutation-scale"] = c.ga.mutation_scale;
  j["elite"] = c.ga.elite_count;
  j["stall"] = c.ga.stall_generations;
  j["seed"] = c.seed ? nlohmann::ordered_json(*c.seed) : nlohmann::ordered_json();
  j["bootstrap"] = c.bootstrap;
  j["level"] = c.level;
  j["input"] = c.input;
  j["output"] = c.output;
  j["latent-output"] = c.latent_output;
  j["censoring-model"] = c.censoring_model == CensoringKind::kMarginal ? "km" : "cox";
  j["fz-model"] = c.fz_model == InstrumentModel::kFull ? "full" : "intercept";
  j["normalize"] = c.normalize;
  j["test-size"] = c.test_size;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig c) {
  if (!doc.is_object()) throw ConfigurationError("config document must be an object");
  // A results document carries its configuration under "config".
  const nlohmann::json& j = doc.contains("config") && doc["config"].is_object() ? doc["config"] : doc;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const auto& v = it.value();
      if (key == "command") c.command = parse_command(v.get<std::string>());
      else if (key == "setting") c.scenario.setting = parse_setting(v.get<std::string>());
      else if (key == "iv-coefficient") c.scenario.iv_coefficient = v.get<double>();
      else if (key == "confounder")
        c.scenario.u_distribution = parse_confounder_law(v.get<std::string>());
      else if (key == "instrument-mechanism")
        c.scenario.z_mechanism = parse_instrument_mechanism(v.get<std::string>());
      else if (key == "censoring")
        c.scenario.censoring = parse_censoring_scheme(v.get<std::string>());
      else if (key == "censor-rate") c.scenario.target_censor_rate = v.get<double>();
      else if (key == "horizon") c.scenario.horizon = v.get<double>();
      else if (key == "c0") {
        if (v.is_null()) c.scenario.c0.reset();
        else c.scenario.c0 = v.get<double>();
      } else if (key == "n") c.n = v.get<std::size_t>();
      else if (key == "replications") c.replications = v.get<std::size_t>();
      else if (key == "t") {
        if (v.is_null()) c.t.reset();
        else c.t = v.get<double>();
      } else if (key == "methods") {
        c.methods.clear();
        for (const auto& m : v) c.methods.push_back(EstimatorKind::parse(m.get<std::string>()));
      } else if (key == "population") c.ga.population_size = v.get<std::size_t>();
      else if (key == "generations") c.ga.generations = v.get<std::size_t>();
      else if (key == "crossover-rate") c.ga.crossover_rate = v.get<double>();
      else if (key == "mutation-rate") c.ga.mutation_rate = v.get<double>();
      else if (key == "mutation-scale") c.ga.mutation_scale = v.get<double>();
      else if (key == "elite") c.ga.elite_count = v.get<std::size_t>();
      else if (key == "stall") c.ga.stall_generations = v.get<std::size_t>();
      else if (key == "seed") {
        if (v.is_null()) c.seed.reset();
        else c.seed = v.get<std::uint64_t>();
      } else if (key == "bootstrap") c.bootstrap = v.get<std::size_t>();
      else if (key == "level") c.level = v.get<double>();
      else if (key == "input") c.input = v.get<std::string>();
      else if (key == "output") c.output = v.get<std::string>();
      else if (key == "latent-output") c.latent_output = v.get<std::string>();
      else if (key == "censoring-model") {
        const auto s = v.get<std::string>();
        if (s == "km") c.censoring_model = CensoringKind::kMarginal;
        else if (s == "cox") c.censoring_model = CensoringKind::kCox;
        else throw ConfigurationError("censoring-model must be km or cox");
      } else if (key == "fz-model") {
        const auto s = v.get<std::string>();
        if (s == "full") c.fz_model = InstrumentModel::kFull;
        else if (s == "intercept") c.fz_model = InstrumentModel::kInterceptOnly;
        else throw ConfigurationError("fz-model must be full or intercept");
      } else if (key == "normalize") c.normalize = v.get<std::vector<std::string>>();
      else if (key == "test-size") c.test_size = v.get<std::size_t>();
      else throw ConfigurationError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("malformed config value: ") + e.what());
  }
  return c;
}

nlohmann::ordered_json regime_json(const Regime& r) { return r.eta(); }

nlohmann::ordered_json to_json(const BenchmarkReport& report, const RunConfig& echo) {
  nlohmann::ordered_json j;
  j["version"] = kToolkitVersion;
  RunConfig cfg = echo;
  cfg.scenario.c0 = report.config.scenario.c0;
  j["config"] = to_json(cfg);
  j["eta_true"] = ScenarioSpec::optimal_eta();
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const auto& m : report.methods) {
    nlohmann::ordered_json s;
    s["method"] = m.method.name();
    s["replications"] = m.count;
    s["bias"] = m.eta.bias;
    s["eta_sd"] = m.eta.sd;
    s["value_mean"] = m.value_mean;
    s["value_sd"] = m.value_sd;
    s["mr_mean"] = m.mr_mean;
    s["mr_sd"] = m.mr_sd;
    s["estimate_mean"] = m.estimate_mean;
    methods.push_back(std::move(s));
  }
  j["methods"] = std::move(methods);
  nlohmann::ordered_json recs = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json o;
    o["method"] = r.method.name();
    o["replication"] = r.replication;
    o["eta_hat"] = r.eta_hat.eta();
    o["estimate"] = r.estimate;
    o["value_oracle"] = r.value_oracle;
    o["mr"] = r.mr;
    o["evaluations"] = r.evaluations;
    recs.push_back(std::move(o));
  }
  j["records"] = std::move(recs);
  nlohmann::ordered_json fails = nlohmann::ordered_json::array();
  for (const auto& f : report.failures)
    fails.push_back({{"replication", f.replication}, {"method", f.method}, {"message", f.message}});
  j["failures"] = std::move(fails);
  return j;
}

}  // namespace ivregime
