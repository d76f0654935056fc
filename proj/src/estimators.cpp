#include "ivregime/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ivregime {

namespace {

double sample_sd(const Eigen::VectorXd& x) {
  const auto n = x.size();
  if (n < 2) return 0.0;
  const double mean = x.mean();
  return std::sqrt((x.array() - mean).square().sum() / static_cast<double>(n - 1));
}

// pi(a | ...) from pi(1 | ...).
double prob_of(int a, double p1) { return a == 1 ? p1 : 1.0 - p1; }

}  // namespace

std::string EstimatorKind::name() const {
  std::string base;
  switch (method) {
    case Method::kIwkmeIv: base = "IWKME-IV"; break;
    case Method::kDrkmeIv: base = "DRKME-IV"; break;
    case Method::kIwkme: base = "IWKME"; break;
    case Method::kAiwkme: base = "AIWKME"; break;
  }
  return smoothed ? "S" + base : base;
}

EstimatorKind EstimatorKind::parse(std::string_view name) {
  for (Method m : {Method::kIwkmeIv, Method::kDrkmeIv, Method::kIwkme, Method::kAiwkme}) {
    for (bool s : {true, false}) {
      EstimatorKind k{m, s};
      if (k.name() == name) return k;
    }
  }
  throw InvalidArgument("unknown estimator '" + std::string(name) + "'");
}

ValueFunction::ValueFunction(const Dataset& data, const NuisanceSet& nuisance, Method method,
                             double t, EstimatorOptions options)
    : n_(data.size()), p_(data.dim()), t_(t), method_(method), policy_(options.increments) {
  if (!(t > 0.0)) throw InvalidArgument("t must be positive");
  if (nuisance.p != p_) throw InvalidArgument("nuisance models were fitted on a different p");
  const bool iv = method == Method::kIwkmeIv || method == Method::kDrkmeIv;
  const bool wants_aug = method == Method::kDrkmeIv || method == Method::kAiwkme;
  augmented_ = wants_aug && options.augment;
  if (augmented_ && method == Method::kDrkmeIv && !nuisance.outcome)
    throw ConfigurationError("DRKME-IV needs the Cox outcome model on (Z, L, A, AL)");
  if (augmented_ && method == Method::kAiwkme && !nuisance.outcome_naive)
    throw ConfigurationError("AIWKME needs the Cox outcome model on (L, A, AL)");
  if (!iv && !nuisance.propensity)
    throw ConfigurationError("propensity-weighted estimators need pi(A|L)");

  grid_ = event_grid(data, t);
  const std::size_t g = grid_.size();
  const auto gi = static_cast<Eigen::Index>(g);
  const auto ni = static_cast<Eigen::Index>(n_);

  design_.resize(ni, static_cast<Eigen::Index>(p_ + 1));
  treatment_.resize(n_);
  base_weight_.resize(n_);
  at_risk_.resize(n_);
  event_.assign(n_, -1);

  // Instrument-based pieces per subject, reused by the augmentation below.
  std::vector<double> scale(n_), delta(n_), pi1(n_ * 2);
  for (std::size_t i = 0; i < n_; ++i) {
    const Subject& s = data[i];
    const auto row = static_cast<Eigen::Index>(i);
    design_(row, 0) = 1.0;
    for (std::size_t k = 0; k < p_; ++k)
      design_(row, static_cast<Eigen::Index>(k + 1)) = s.covariates[k];
    treatment_[i] = s.treatment;
    at_risk_[i] = static_cast<std::size_t>(
        std::upper_bound(grid_.times.begin(), grid_.times.end(), s.time) - grid_.times.begin());
    if (s.status == 1 && s.time <= t) event_[i] = static_cast<std::ptrdiff_t>(at_risk_[i]) - 1;

    if (iv) {
      delta[i] = delta_L(nuisance, s.covariates);
      const double f1 = nuisance.instrument_prob(s.covariates);
      const double fz = prob_of(s.instrument, f1);
      scale[i] = (2.0 * s.instrument - 1.0) / (delta[i] * fz);
      base_weight_[i] = scale[i] * (2.0 * s.treatment - 1.0);
      pi1[2 * i] = nuisance.treatment_prob(0, s.covariates);
      pi1[2 * i + 1] = nuisance.treatment_prob(1, s.covariates);
    } else {
      const double e1 = nuisance.propensity_prob(s.covariates);
      base_weight_[i] = 1.0 / prob_of(s.treatment, e1);
      pi1[2 * i] = pi1[2 * i + 1] = e1;
    }
  }

  // Censoring weights 1 / S_C(s | Z, L, A). Under marginal censoring they are
  // common to all subjects and cancel unless augmentation terms are present.
  if (nuisance.censor.kind == CensoringKind::kMarginal) {
    if (augmented_) {
      inv_censor_shared_.resize(g);
      for (std::size_t j = 0; j < g; ++j)
        inv_censor_shared_[j] = 1.0 / censor_survival(nuisance, grid_.times[j], 0, {}, 0);
    }
  } else {
    inv_censor_.resize(gi, ni);
    for (std::size_t i = 0; i < n_; ++i) {
      const Subject& s = data[i];
      for (std::size_t j = 0; j < g; ++j)
        inv_censor_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
            1.0 / censor_survival(nuisance, grid_.times[j], s.instrument, s.covariates,
                                  s.treatment);
    }
  }

  if (!augmented_) return;

  const CoxModel& cox = method == Method::kDrkmeIv ? *nuisance.outcome : *nuisance.outcome_naive;
  std::vector<double> lam_before(g), lam_jump(g);
  for (std::size_t j = 0; j < g; ++j) {
    lam_before[j] = cox.baseline_before(grid_.times[j]);
    lam_jump[j] = cox.baseline(grid_.times[j]) - lam_before[j];
  }
  aug_num_base_ = Eigen::VectorXd::Zero(gi);
  aug_den_base_ = Eigen::VectorXd::Zero(gi);
  aug_num_.resize(gi, ni);
  aug_den_.resize(gi, ni);

  for (std::size_t i = 0; i < n_; ++i) {
    const Subject& s = data[i];
    const auto col = static_cast<Eigen::Index>(i);
    // K1/K2 per candidate treatment a: the outcome-model terms that enter
    // psi_dN and psi_Y when d_eta(L_i) = a.
    std::vector<double> k_num[2], k_den[2];
    for (int a = 0; a < 2; ++a) {
      k_num[a].assign(g, 0.0);
      k_den[a].assign(g, 0.0);
      const double sgn = 2.0 * a - 1.0;
      if (method == Method::kDrkmeIv) {
        const double r0 = cox.risk_score(0, s.covariates, a);
        const double r1 = cox.risk_score(1, s.covariates, a);
        const double pa0 = prob_of(a, pi1[2 * i]);
        const double pa1 = prob_of(a, pi1[2 * i + 1]);
        const double resid = 1.0 - scale[i] * (s.treatment - pi1[2 * i]);
        for (std::size_t j = 0; j < g; ++j) {
          const double st0 = std::exp(-lam_before[j] * r0);
          const double st1 = std::exp(-lam_before[j] * r1);
          const double dl0 = lam_jump[j] * r0;
          const double dl1 = lam_jump[j] * r1;
          // gamma_2, gamma_2' (at-risk) and gamma_1, gamma_1' (hazard increment)
          const double g2 = sgn * (pa1 * st1 - pa0 * st0) / delta[i];
          const double g2p = sgn * pa0 * st0;
          const double g1 = sgn * (pa1 * st1 * dl1 - pa0 * st0 * dl0) / delta[i];
          const double g1p = sgn * pa0 * st0 * dl0;
          k_num[a][j] = g1 * resid - scale[i] * g1p;
          k_den[a][j] = g2 * resid - scale[i] * g2p;
        }
      } else {
        const double r = cox.risk_score(0, s.covariates, a);
        const double pa = prob_of(a, pi1[2 * i]);
        const double resid = -((s.treatment == a ? 1.0 : 0.0) - pa) / pa;
        for (std::size_t j = 0; j < g; ++j) {
          const double st = std::exp(-lam_before[j] * r);
          k_num[a][j] = resid * st * lam_jump[j] * r;
          k_den[a][j] = resid * st;
        }
      }
    }
    for (std::size_t j = 0; j < g; ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      aug_num_base_[row] += k_num[0][j];
      aug_den_base_[row] += k_den[0][j];
      aug_num_(row, col) = k_num[1][j] - k_num[0][j];
      aug_den_(row, col) = k_den[1][j] - k_den[0][j];
    }
  }
}

Eigen::VectorXd ValueFunction::treat_weights(const Regime& regime, const Smoothing& smoothing,
                                             double* h_used) const {
  if (regime.size() != p_ + 1)
    throw InvalidArgument("regime dimension does not match the covariates");
  const Eigen::Map<const Eigen::VectorXd> eta(regime.eta().data(),
                                              static_cast<Eigen::Index>(p_ + 1));
  Eigen::VectorXd index = design_ * eta;
  Eigen::VectorXd w(index.size());
  if (!smoothing.enabled) {
    for (Eigen::Index i = 0; i < index.size(); ++i) w[i] = index[i] >= 0.0 ? 1.0 : 0.0;
    if (h_used) *h_used = 0.0;
    return w;
  }
  const Bandwidth h = smoothing.bandwidth ? Bandwidth{*smoothing.bandwidth}
                                          : bandwidth(n_, sample_sd(index));
  for (Eigen::Index i = 0; i < index.size(); ++i) w[i] = smooth_indicator(index[i], h);
  if (h_used) *h_used = h.h;
  return w;
}

void ValueFunction::accumulate(const Regime& regime, const Smoothing& smoothing,
                               std::vector<double>& num, std::vector<double>& den,
                               ValueDiagnostics& diag) const {
  const std::size_t g = grid_.size();
  const Eigen::VectorXd treat = treat_weights(regime, smoothing, &diag.bandwidth);
  num.assign(g, 0.0);
  den.assign(g, 0.0);

  // Weighting term: omega_i = base_i * P(d_eta(L_i) = A_i).
  double abs_sum = 0.0, sq_sum = 0.0;
  if (inv_censor_.size() == 0) {
    std::vector<double> bucket(g + 1, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const double wi = treatment_[i] == 1 ? treat[static_cast<Eigen::Index>(i)]
                                           : 1.0 - treat[static_cast<Eigen::Index>(i)];
      const double omega = base_weight_[i] * wi;
      abs_sum += std::abs(omega);
      sq_sum += omega * omega;
      if (event_[i] >= 0) num[static_cast<std::size_t>(event_[i])] += omega;
      bucket[at_risk_[i]] += omega;
    }
    // Subjects with at_risk_ = k are in the risk set of grid points 0..k-1.
    double running = 0.0;
    for (std::size_t j = g; j-- > 0;) {
      running += bucket[j + 1];
      den[j] = running;
    }
    if (!inv_censor_shared_.empty()) {
      for (std::size_t j = 0; j < g; ++j) {
        num[j] *= inv_censor_shared_[j];
        den[j] *= inv_censor_shared_[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < n_; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      const double wi = treatment_[i] == 1 ? treat[col] : 1.0 - treat[col];
      const double omega = base_weight_[i] * wi;
      abs_sum += std::abs(omega);
      sq_sum += omega * omega;
      if (omega == 0.0) continue;
      for (std::size_t j = 0; j < at_risk_[i]; ++j)
        den[j] += omega * inv_censor_(static_cast<Eigen::Index>(j), col);
      if (event_[i] >= 0) {
        const auto j = static_cast<Eigen::Index>(event_[i]);
        num[static_cast<std::size_t>(j)] += omega * inv_censor_(j, col);
      }
    }
  }
  diag.effective_sample_size = sq_sum > 0.0 ? abs_sum * abs_sum / sq_sum : 0.0;
  diag.grid_size = g;

  if (augmented_ && g > 0) {
    const Eigen::VectorXd an = aug_num_base_ + aug_num_ * treat;
    const Eigen::VectorXd ad = aug_den_base_ + aug_den_ * treat;
    for (std::size_t j = 0; j < g; ++j) {
      num[j] += an[static_cast<Eigen::Index>(j)];
      den[j] += ad[static_cast<Eigen::Index>(j)];
    }
  }
}

ValueEstimate ValueFunction::evaluate(const Regime& regime, const Smoothing& smoothing) const {
  ValueEstimate out;
  std::vector<double> num, den;
  accumulate(regime, smoothing, num, den, out.diagnostics);
  ProductLimitDiagnostics pl;
  out.value = product_limit(grid_.times, num, den, t_, &pl, policy_);
  out.diagnostics.clamped = pl.clamped;
  out.diagnostics.skipped = pl.skipped;
  return out;
}

StepSurvival ValueFunction::curve(const Regime& regime, const Smoothing& smoothing) const {
  ValueDiagnostics diag;
  std::vector<double> num, den;
  accumulate(regime, smoothing, num, den, diag);
  StepSurvival out;
  double surv = 1.0;
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    if (den[j] == 0.0) continue;
    double hazard = num[j] / den[j];
    if (policy_ == IncrementPolicy::kClamp) hazard = std::clamp(hazard, 0.0, 1.0);
    surv *= 1.0 - hazard;
    out.times.push_back(grid_.times[j]);
    out.values.push_back(std::clamp(surv, 0.0, 1.0));
  }
  return out;
}

ValueEstimate iwkme_iv(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                       double t, const Smoothing& smoothing) {
  return ValueFunction(data, nuisance, Method::kIwkmeIv, t).evaluate(regime, smoothing);
}

ValueEstimate drkme_iv(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                       double t, const Smoothing& smoothing, EstimatorOptions options) {
  return ValueFunction(data, nuisance, Method::kDrkmeIv, t, options).evaluate(regime, smoothing);
}

ValueEstimate siwkme(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                     double t, const Smoothing& smoothing) {
  return ValueFunction(data, nuisance, Method::kIwkme, t).evaluate(regime, smoothing);
}

ValueEstimate saiwkme(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                      double t, const Smoothing& smoothing, EstimatorOptions options) {
  return ValueFunction(data, nuisance, Method::kAiwkme, t, options).evaluate(regime, smoothing);
}

ValueEstimate estimate_value(const Dataset& data, const NuisanceSet& nuisance,
                             EstimatorKind kind, const Regime& regime, double t) {
  return ValueFunction(data, nuisance, kind.method, t)
      .evaluate(regime, kind.smoothed ? Smoothing::plug_in() : Smoothing::off());
}

double restricted_mean(const std::function<double(double)>& survival,
                       std::span<const double> observed_times, double t) {
  if (!(t > 0.0)) throw InvalidArgument("restricted_mean needs t > 0");
  std::vector<double> order(observed_times.begin(), observed_times.end());
  std::sort(order.begin(), order.end());
  order.insert(order.begin(), 0.0);
  double area = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] > t) break;
    const double next = i + 1 < order.size() ? std::min(order[i + 1], t) : t;
    area += survival(order[i]) * (next - order[i]);
  }
  return area;
}

std::optional<double> quantile_value(const StepSurvival& curve, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
  for (std::size_t j = 0; j < curve.times.size(); ++j)
    if (curve.values[j] <= 1.0 - tau) return curve.times[j];
  return std::nullopt;
}

double multi_objective(double value, const Regime& regime,
                       std::span<const std::vector<double>> covariates, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (covariates.empty()) throw InvalidArgument("multi_objective needs a covariate sample");
  std::size_t treated = 0;
  for (const auto& l : covariates) treated += static_cast<std::size_t>(regime_decide(regime, l));
  return value - lambda * static_cast<double>(treated) / static_cast<double>(covariates.size());
}

}  // namespace ivregime
