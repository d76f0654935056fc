#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivregime/data.hpp"
#include "ivregime/nuisance.hpp"
#include "ivregime/smoothing.hpp"
#include "ivregime/survival.hpp"

namespace ivregime {

enum class Method {
  kIwkmeIv,  // instrument-weighted Kaplan-Meier
  kDrkmeIv,  // doubly robust, instrument-weighted
  kIwkme,    // propensity-weighted, ignores the instrument
  kAiwkme,   // augmented propensity-weighted, ignores the instrument
};

struct EstimatorKind {
  Method method = Method::kIwkmeIv;
  bool smoothed = true;

  // "SIWKME-IV", "DRKME-IV", "SIWKME", "SAIWKME", ...
  std::string name() const;
  static EstimatorKind parse(std::string_view name);
  bool uses_instrument() const noexcept {
    return method == Method::kIwkmeIv || method == Method::kDrkmeIv;
  }
  bool needs_outcome_model() const noexcept {
    return method == Method::kDrkmeIv || method == Method::kAiwkme;
  }
  friend bool operator==(const EstimatorKind&, const EstimatorKind&) = default;
};

// How d_eta(L) enters the estimator: the indicator, or Phi(index / h) with h
// from the plug-in rule (recomputed per eta) or fixed by the caller.
struct Smoothing {
  bool enabled = false;
  std::optional<double> bandwidth;

  static Smoothing off() { return {}; }
  static Smoothing plug_in() { return {true, std::nullopt}; }
  static Smoothing fixed(double h) { return {true, h}; }
};

struct ValueDiagnostics {
  std::size_t clamped = 0;
  std::size_t skipped = 0;
  std::size_t grid_size = 0;
  double effective_sample_size = 0.0;  // (sum |w|)^2 / sum w^2 over subject weights
  double bandwidth = 0.0;              // 0 when unsmoothed
};

struct ValueEstimate {
  double value = 1.0;
  ValueDiagnostics diagnostics;
};

struct EstimatorOptions {
  // Outcome-model augmentation for the doubly robust / augmented estimators.
  // Off, they reduce to their weighting-only counterparts.
  bool augment = true;
  // Signed IV weights make single increments leave [0, 1]. Clamping each one
  // biases the estimate downward by a non-vanishing amount, so the default
  // multiplies the factors as they are and clamps only the result.
  IncrementPolicy increments = IncrementPolicy::kRaw;
};

// Precomputed evaluation state for one (dataset, nuisance fits, method, t).
// Nuisance predictions, censoring weights and outcome-model terms are built
// once; evaluate() is then O(n + grid) for the weighting estimators and one
// matrix-vector product per term for the augmented ones. Thread-safe.
class ValueFunction {
 public:
  ValueFunction(const Dataset& data, const NuisanceSet& nuisance, Method method, double t,
                EstimatorOptions options = {});

  ValueEstimate evaluate(const Regime& regime, const Smoothing& smoothing) const;
  // Estimated S*(s; eta) at every grid point s <= t, each point equal to
  // evaluate() at horizon s. Under the raw policy it need not be monotone.
  StepSurvival curve(const Regime& regime, const Smoothing& smoothing) const;

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return p_; }
  double horizon() const noexcept { return t_; }
  const EventGrid& grid() const noexcept { return grid_; }
  Method method() const noexcept { return method_; }

  // Treatment-1 weight per subject: indicator or Phi(index / h).
  Eigen::VectorXd treat_weights(const Regime& regime, const Smoothing& smoothing,
                                double* h_used = nullptr) const;

 private:
  void accumulate(const Regime& regime, const Smoothing& smoothing, std::vector<double>& num,
                  std::vector<double>& den, ValueDiagnostics& diag) const;

  std::size_t n_ = 0, p_ = 0;
  double t_ = 0.0;
  Method method_;
  EventGrid grid_;
  Eigen::MatrixXd design_;              // n x (p+1), rows (1, L')
  std::vector<int> treatment_;
  std::vector<double> base_weight_;     // weight before the regime factor
  std::vector<std::size_t> at_risk_;    // number of grid points <= T~_i
  std::vector<std::ptrdiff_t> event_;   // grid index of subject's event, or -1
  // Censoring: empty when it cancels, G entries when shared, else G x n.
  std::vector<double> inv_censor_shared_;
  Eigen::MatrixXd inv_censor_;
  bool augmented_ = false;
  IncrementPolicy policy_ = IncrementPolicy::kRaw;
  Eigen::VectorXd aug_num_base_, aug_den_base_;  // sum_i K_{i,0}(s)
  Eigen::MatrixXd aug_num_, aug_den_;            // K_{i,1}(s) - K_{i,0}(s), G x n
};

ValueEstimate iwkme_iv(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                       double t, const Smoothing& smoothing = Smoothing::off());

ValueEstimate drkme_iv(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                       double t, const Smoothing& smoothing = Smoothing::off(),
                       EstimatorOptions options = {});

ValueEstimate siwkme(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                     double t, const Smoothing& smoothing = Smoothing::plug_in());

ValueEstimate saiwkme(const Dataset& data, const NuisanceSet& nuisance, const Regime& regime,
                      double t, const Smoothing& smoothing = Smoothing::plug_in(),
                      EstimatorOptions options = {});

ValueEstimate estimate_value(const Dataset& data, const NuisanceSet& nuisance,
                             EstimatorKind kind, const Regime& regime, double t);

// sum_{i=0}^{n} I(T_(i) <= t) S(T_(i)) [min(T_(i+1), t) - T_(i)], T_(0) = 0.
double restricted_mean(const std::function<double(double)>& survival,
                       std::span<const double> observed_times, double t);

// inf{s : S(s) <= 1 - tau} over the curve's jump points; nullopt if never reached.
std::optional<double> quantile_value(const StepSurvival& curve, double tau);

// value - lambda * (fraction of the sample the regime treats).
double multi_objective(double value, const Regime& regime,
                       std::span<const std::vector<double>> covariates, double lambda);

}  // namespace ivregime
