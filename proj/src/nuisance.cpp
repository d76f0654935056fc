#include "ivregime/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ivregime {

namespace {

constexpr int kMaxIterations = 100;
constexpr double kScoreTolerance = 1e-8;
constexpr double kStepTolerance = 1e-10;
constexpr double kDivergenceNorm = 1e3;
// Information shrinking by this factor from its value at beta = 0 means the
// likelihood is still rising along some direction: a monotone likelihood.
constexpr double kCollapsedInformation = 1e-8;

bool information_collapsed(const Eigen::MatrixXd& info, const Eigen::VectorXd& initial) {
  for (Eigen::Index k = 0; k < info.rows(); ++k)
    if (!(info(k, k) >= kCollapsedInformation * initial[k])) return true;
  return false;
}

double expit(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& beta) {
  const Eigen::VectorXd lin = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lin.size(); ++i) {
    // y*lin - log(1 + e^lin), computed without overflow
    const double v = lin[i];
    const double log1pe = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    ll += y[i] * v - log1pe;
  }
  return ll;
}

struct CoxPass {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
};

// One sweep over subjects in decreasing time. Tied times share a risk set.
CoxPass cox_pass(const Eigen::MatrixXd& x, std::span<const double> times,
                 std::span<const int> status, const std::vector<std::size_t>& desc,
                 const Eigen::VectorXd& beta, bool want_info) {
  const Eigen::Index p = x.cols();
  const std::size_t n = desc.size();
  const Eigen::VectorXd lin = x * beta;
  const double shift = n > 0 ? lin.maxCoeff() : 0.0;

  CoxPass out;
  out.score = Eigen::VectorXd::Zero(p);
  if (want_info) out.info = Eigen::MatrixXd::Zero(p, p);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  for (std::size_t k = 0; k < n;) {
    const double t = times[desc[k]];
    std::size_t end = k;
    while (end < n && times[desc[end]] == t) {
      const auto i = static_cast<Eigen::Index>(desc[end]);
      const double r = std::exp(lin[i] - shift);
      s0 += r;
      s1.noalias() += r * x.row(i).transpose();
      if (want_info) s2.noalias() += r * x.row(i).transpose() * x.row(i);
      ++end;
    }
    const Eigen::VectorXd mean = s1 / s0;
    for (std::size_t m = k; m < end; ++m) {
      if (status[desc[m]] != 1) continue;
      const auto i = static_cast<Eigen::Index>(desc[m]);
      out.loglik += lin[i] - shift - std::log(s0);
      out.score.noalias() += x.row(i).transpose() - mean;
      if (want_info) out.info.noalias() += s2 / s0 - mean * mean.transpose();
    }
    k = end;
  }
  return out;
}

std::vector<std::size_t> descending_order(std::span<const double> times) {
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });
  return idx;
}

}  // namespace

std::vector<double> LogisticModel::row(int z, std::span<const double> covariates) const {
  std::vector<double> r{1.0};
  switch (design) {
    case LogisticDesign::kIntercept:
      break;
    case LogisticDesign::kCovariates:
      r.insert(r.end(), covariates.begin(), covariates.end());
      break;
    case LogisticDesign::kInstrumentCovariates:
      r.push_back(static_cast<double>(z));
      r.insert(r.end(), covariates.begin(), covariates.end());
      break;
    case LogisticDesign::kCustom:
      throw ConfigurationError("custom logistic design has no row builder");
  }
  return r;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y,
                           LogisticDesign design) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (static_cast<std::size_t>(n) != y.size())
    throw InvalidArgument("fit_logistic: design rows and response length differ");
  if (n < p) throw InvalidArgument("fit_logistic: fewer rows than columns");
  std::size_t ones = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw InvalidArgument("fit_logistic: response must be binary");
    ones += static_cast<std::size_t>(v);
  }
  if (ones == 0 || ones == y.size())
    throw InvalidArgument("fit_logistic: response contains a single class");

  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = logistic_loglik(x, yv, beta);

  LogisticModel model;
  model.design = design;
  for (int iter = 1; iter <= kMaxIterations; ++iter) {
    const Eigen::VectorXd lin = x * beta;
    Eigen::VectorXd prob(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = expit(lin[i]);
      w[i] = prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd score = x.transpose() * (yv - prob);
    const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    Eigen::VectorXd step = info.ldlt().solve(score);
    if (!step.allFinite()) throw SeparationError("fit_logistic: singular information matrix");
    // A small score alone is not enough: under separation the score vanishes
    // while the Newton step stays of order one.
    if (score.cwiseAbs().maxCoeff() < kScoreTolerance &&
        step.cwiseAbs().maxCoeff() < kStepTolerance) {
      model.iterations = iter - 1;
      break;
    }

    double scale = 1.0;
    Eigen::VectorXd next = beta + step;
    double ll_next = logistic_loglik(x, yv, next);
    for (int h = 0; h < 30 && !(ll_next >= ll - 1e-12); ++h) {
      scale *= 0.5;
      next = beta + scale * step;
      ll_next = logistic_loglik(x, yv, next);
    }
    beta = next;
    ll = ll_next;
    model.iterations = iter;
    if (beta.norm() > kDivergenceNorm)
      throw SeparationError("fit_logistic: coefficients diverge (perfect separation)");
    if ((scale * step).cwiseAbs().maxCoeff() < kStepTolerance) break;
    if (iter == kMaxIterations && beta.cwiseAbs().maxCoeff() > 25.0)
      throw SeparationError("fit_logistic: coefficients diverge (separation suspected)");
    if (iter == kMaxIterations)
      throw ConvergenceError("fit_logistic: no convergence in 100 iterations", {ll});
  }
  {
    const Eigen::VectorXd lin = x * beta;
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = expit(lin[i]) * (1.0 - expit(lin[i]));
    const Eigen::VectorXd initial = 0.25 * x.cwiseAbs2().colwise().sum().transpose();
    if (information_collapsed(x.transpose() * w.asDiagonal() * x, initial))
      throw SeparationError("fit_logistic: fitted probabilities collapse to 0 or 1 (separation)");
  }
  model.coefficients.assign(beta.data(), beta.data() + p);
  return model;
}

double predict_logistic(const LogisticModel& model, std::span<const double> row) {
  if (row.size() != model.coefficients.size())
    throw InvalidArgument("predict_logistic: row has " + std::to_string(row.size()) +
                          " entries, model has " +
                          std::to_string(model.coefficients.size()) + " coefficients");
  double lin = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) lin += row[k] * model.coefficients[k];
  return std::clamp(expit(lin), kProbabilityClamp, 1.0 - kProbabilityClamp);
}

CoxTerms CoxTerms::outcome_iv(std::size_t p) {
  CoxTerms t;
  t.covariates.resize(p);
  std::iota(t.covariates.begin(), t.covariates.end(), std::size_t{0});
  return t;
}

CoxTerms CoxTerms::outcome_naive(std::size_t p) {
  CoxTerms t = outcome_iv(p);
  t.instrument = false;
  return t;
}

CoxTerms CoxTerms::censoring(std::size_t p) {
  CoxTerms t = outcome_iv(p);
  t.interactions = false;
  return t;
}

std::size_t CoxTerms::width() const noexcept {
  return static_cast<std::size_t>(instrument) + covariates.size() +
         static_cast<std::size_t>(treatment) + (interactions ? covariates.size() : 0);
}

std::vector<double> CoxTerms::row(int z, std::span<const double> l, int a) const {
  std::vector<double> r;
  r.reserve(width());
  if (instrument) r.push_back(z);
  for (std::size_t k : covariates) r.push_back(l[k]);
  if (treatment) r.push_back(a);
  if (interactions)
    for (std::size_t k : covariates) r.push_back(a * l[k]);
  return r;
}

double CoxModel::baseline(double s) const {
  auto it = std::upper_bound(event_times.begin(), event_times.end(), s);
  if (it == event_times.begin()) return 0.0;
  return cumhaz[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

double CoxModel::baseline_before(double s) const {
  auto it = std::lower_bound(event_times.begin(), event_times.end(), s);
  if (it == event_times.begin()) return 0.0;
  return cumhaz[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

double CoxModel::risk_score(int z, std::span<const double> covariates, int a) const {
  const auto r = terms.row(z, covariates, a);
  double lin = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) lin += r[k] * beta[k];
  return std::exp(lin);
}

Eigen::VectorXd cox_score(const Eigen::MatrixXd& x, std::span<const double> times,
                          std::span<const int> status, const Eigen::VectorXd& beta) {
  return cox_pass(x, times, status, descending_order(times), beta, false).score;
}

CoxModel fit_cox(const Eigen::MatrixXd& x, std::span<const double> times,
                 std::span<const int> status, CoxTerms terms) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (static_cast<std::size_t>(n) != times.size() || times.size() != status.size())
    throw InvalidArgument("fit_cox: design, times and status differ in length");
  std::size_t events = 0;
  for (int s : status) events += static_cast<std::size_t>(s == 1);
  if (events == 0) throw InvalidArgument("fit_cox: no events");
  if (static_cast<std::size_t>(p) >= events)
    throw InvalidArgument("fit_cox: need more events than design columns");

  const auto desc = descending_order(times);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxPass cur = cox_pass(x, times, status, desc, beta, true);
  const Eigen::VectorXd initial_info = cur.info.diagonal();
  std::vector<double> trace{cur.loglik};
  CoxModel model;
  model.terms = std::move(terms);
  bool converged = p == 0;
  for (int iter = 1; iter <= kMaxIterations && !converged; ++iter) {
    Eigen::VectorXd step = cur.info.ldlt().solve(cur.score);
    if (!step.allFinite()) throw SeparationError("fit_cox: singular information matrix");
    if (cur.score.cwiseAbs().maxCoeff() < kScoreTolerance &&
        step.cwiseAbs().maxCoeff() < kStepTolerance) {
      converged = true;
      break;
    }
    double scale = 1.0;
    Eigen::VectorXd next = beta + step;
    CoxPass cand = cox_pass(x, times, status, desc, next, true);
    for (int h = 0; h < 30 && !(cand.loglik >= cur.loglik - 1e-12); ++h) {
      scale *= 0.5;
      next = beta + scale * step;
      cand = cox_pass(x, times, status, desc, next, true);
    }
    beta = next;
    cur = std::move(cand);
    trace.push_back(cur.loglik);
    model.iterations = iter;
    if (beta.norm() > kDivergenceNorm)
      throw SeparationError("fit_cox: monotone partial likelihood (coefficients diverge)");
    if ((scale * step).cwiseAbs().maxCoeff() < kStepTolerance) converged = true;
  }
  if (!converged) {
    if (beta.cwiseAbs().maxCoeff() > 25.0)
      throw SeparationError("fit_cox: monotone partial likelihood suspected");
    throw ConvergenceError("fit_cox: no convergence in 100 iterations", trace);
  }
  if (p > 0 && information_collapsed(cur.info, initial_info))
    throw SeparationError("fit_cox: monotone partial likelihood");

  // Breslow baseline at beta-hat.
  const Eigen::VectorXd lin = x * beta;
  double s0 = 0.0;
  std::vector<std::pair<double, double>> jumps;  // (time, d / S0), built backwards
  for (std::size_t k = 0; k < desc.size();) {
    const double t = times[desc[k]];
    std::size_t deaths = 0;
    while (k < desc.size() && times[desc[k]] == t) {
      s0 += std::exp(lin[static_cast<Eigen::Index>(desc[k])]);
      deaths += static_cast<std::size_t>(status[desc[k]] == 1);
      ++k;
    }
    if (deaths > 0) jumps.emplace_back(t, static_cast<double>(deaths) / s0);
  }
  std::reverse(jumps.begin(), jumps.end());
  double cum = 0.0;
  for (const auto& [t, dl] : jumps) {
    cum += dl;
    model.event_times.push_back(t);
    model.cumhaz.push_back(cum);
  }
  model.beta.assign(beta.data(), beta.data() + p);
  return model;
}

Eigen::MatrixXd cox_design(const Dataset& data, const CoxTerms& terms) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()),
                    static_cast<Eigen::Index>(terms.width()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = terms.row(data[i].instrument, data[i].covariates, data[i].treatment);
    for (std::size_t k = 0; k < r.size(); ++k)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r[k];
  }
  return x;
}

double cox_survival(const CoxModel& model, double s, int z, std::span<const double> covariates,
                    int a) {
  if (s < 0.0) throw InvalidArgument("cox_survival: s must be >= 0");
  return std::exp(-model.baseline(s) * model.risk_score(z, covariates, a));
}

double CensoringModel::raw(double s, int z, std::span<const double> covariates, int a) const {
  if (kind == CensoringKind::kMarginal) return km.left_limit(s);
  return std::exp(-cox->baseline_before(s) * cox->risk_score(z, covariates, a));
}

double NuisanceSet::instrument_prob(std::span<const double> covariates) const {
  return predict_logistic(instrument, instrument.row(1, covariates));
}

double NuisanceSet::treatment_prob(int z, std::span<const double> covariates) const {
  return predict_logistic(treatment, treatment.row(z, covariates));
}

double NuisanceSet::propensity_prob(std::span<const double> covariates) const {
  if (!propensity) throw ConfigurationError("no instrument-free propensity model was fitted");
  return predict_logistic(*propensity, propensity->row(0, covariates));
}

NuisanceSet fit_nuisance(const Dataset& data, const NuisanceOptions& options) {
  if (!(options.delta_floor > 0.0)) throw InvalidArgument("delta_floor must be positive");
  const std::size_t n = data.size(), p = data.dim();
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(p);
  std::vector<int> z(n), a(n), status(n), censored(n);
  std::vector<double> times(n);
  Eigen::MatrixXd l(rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& s = data[i];
    z[i] = s.instrument;
    a[i] = s.treatment;
    status[i] = s.status;
    censored[i] = 1 - s.status;
    times[i] = s.time;
    for (std::size_t k = 0; k < p; ++k)
      l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = s.covariates[k];
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(rows);

  NuisanceSet ns;
  ns.p = p;
  ns.delta_floor = options.delta_floor;

  if (options.instrument_model == InstrumentModel::kFull) {
    Eigen::MatrixXd xz(rows, cols + 1);
    xz << ones, l;
    ns.instrument = fit_logistic(xz, z, LogisticDesign::kCovariates);
  } else {
    ns.instrument = fit_logistic(Eigen::MatrixXd(ones), z, LogisticDesign::kIntercept);
  }

  Eigen::MatrixXd xa(rows, cols + 2);
  Eigen::VectorXd zv(rows);
  for (Eigen::Index i = 0; i < rows; ++i) zv[i] = z[static_cast<std::size_t>(i)];
  xa << ones, zv, l;
  ns.treatment = fit_logistic(xa, a, LogisticDesign::kInstrumentCovariates);

  if (options.fit_naive) {
    Eigen::MatrixXd xp(rows, cols + 1);
    xp << ones, l;
    ns.propensity = fit_logistic(xp, a, LogisticDesign::kCovariates);
  }
  if (options.fit_outcome_iv) {
    auto terms = CoxTerms::outcome_iv(p);
    ns.outcome = fit_cox(cox_design(data, terms), times, status, terms);
  }
  if (options.fit_outcome_naive) {
    auto terms = CoxTerms::outcome_naive(p);
    ns.outcome_naive = fit_cox(cox_design(data, terms), times, status, terms);
  }

  ns.censor.kind = options.censoring;
  if (options.censoring == CensoringKind::kMarginal) {
    ns.censor.km = km_survival(times, censored);
  } else {
    auto terms = options.censoring_terms.value_or(CoxTerms::censoring(p));
    ns.censor.cox = fit_cox(cox_design(data, terms), times, censored, terms);
  }
  return ns;
}

double delta_L(const NuisanceSet& nuisance, std::span<const double> covariates) {
  const double d = nuisance.treatment_prob(1, covariates) - nuisance.treatment_prob(0, covariates);
  if (std::abs(d) < nuisance.delta_floor) return d < 0.0 ? -nuisance.delta_floor : nuisance.delta_floor;
  return d;
}

double censor_survival(const NuisanceSet& nuisance, double s, int z,
                       std::span<const double> covariates, int a) {
  return std::max(nuisance.censor.raw(s, z, covariates, a), kCensorSurvivalFloor);
}

}  // namespace ivregime
