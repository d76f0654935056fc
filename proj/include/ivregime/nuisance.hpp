#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "ivregime/data.hpp"
#include "ivregime/survival.hpp"

namespace ivregime {

inline constexpr double kProbabilityClamp = 1e-10;
inline constexpr double kCensorSurvivalFloor = 1e-3;
inline constexpr double kDefaultDeltaFloor = 0.05;

// Which columns a logistic model's design row carries.
enum class LogisticDesign {
  kCustom,                // caller-built rows
  kIntercept,             // (1)
  kCovariates,            // (1, L')
  kInstrumentCovariates,  // (1, Z, L')
};

struct LogisticModel {
  std::vector<double> coefficients;  // intercept first
  LogisticDesign design = LogisticDesign::kCustom;
  int iterations = 0;

  // Builds the design row for (z, L); unused arguments are ignored.
  std::vector<double> row(int z, std::span<const double> covariates) const;
};

LogisticModel fit_logistic(const Eigen::MatrixXd& x, std::span<const int> y,
                           LogisticDesign design = LogisticDesign::kCustom);

// expit(x'beta) clamped to [1e-10, 1 - 1e-10].
double predict_logistic(const LogisticModel& model, std::span<const double> row);

// Column selection for a Cox design built from (Z, L, A).
struct CoxTerms {
  bool instrument = true;
  std::vector<std::size_t> covariates;  // indices into L
  bool treatment = true;
  bool interactions = true;             // A * L[k] for each selected k

  static CoxTerms outcome_iv(std::size_t p);     // (Z, L', A, AL')
  static CoxTerms outcome_naive(std::size_t p);  // (L', A, AL')
  static CoxTerms censoring(std::size_t p);      // (Z, L', A)

  std::size_t width() const noexcept;
  std::vector<double> row(int z, std::span<const double> covariates, int a) const;
};

struct CoxModel {
  std::vector<double> beta;
  CoxTerms terms;
  std::vector<double> event_times;  // Breslow baseline jump points
  std::vector<double> cumhaz;       // Lambda0 at each jump point (inclusive)
  int iterations = 0;

  double baseline(double s) const;         // Lambda0(s)
  double baseline_before(double s) const;  // Lambda0(s-)
  double risk_score(int z, std::span<const double> covariates, int a) const;  // exp(x'beta)
};

// Breslow partial likelihood, Newton-Raphson with step halving.
CoxModel fit_cox(const Eigen::MatrixXd& x, std::span<const double> times,
                 std::span<const int> status, CoxTerms terms = {});

// Partial-likelihood score at beta, for optimality checks.
Eigen::VectorXd cox_score(const Eigen::MatrixXd& x, std::span<const double> times,
                          std::span<const int> status, const Eigen::VectorXd& beta);

Eigen::MatrixXd cox_design(const Dataset& data, const CoxTerms& terms);

// exp(-Lambda0(s) exp(x'beta)).
double cox_survival(const CoxModel& model, double s, int z, std::span<const double> covariates,
                    int a);

enum class CensoringKind { kMarginal, kCox };

// Estimate of S_C(s | Z, L, A) = P(C >= s | Z, L, A).
struct CensoringModel {
  CensoringKind kind = CensoringKind::kMarginal;
  StepSurvival km;            // reverse Kaplan-Meier (marginal)
  std::optional<CoxModel> cox;  // conditional

  // Unclamped P(C >= s | z, L, a).
  double raw(double s, int z, std::span<const double> covariates, int a) const;
};

enum class InstrumentModel { kFull, kInterceptOnly };

struct NuisanceOptions {
  InstrumentModel instrument_model = InstrumentModel::kFull;
  CensoringKind censoring = CensoringKind::kMarginal;
  std::optional<CoxTerms> censoring_terms;  // default CoxTerms::censoring(p)
  bool fit_outcome_iv = true;     // Cox on (Z, L', A, AL') for the doubly robust estimator
  bool fit_naive = true;          // propensity on (1, L') for the no-instrument baselines
  bool fit_outcome_naive = true;  // Cox on (L', A, AL') for the augmented baseline
  double delta_floor = kDefaultDeltaFloor;
};

struct NuisanceSet {
  std::size_t p = 0;
  LogisticModel instrument;   // f(Z = 1 | L)
  LogisticModel treatment;    // pi(A = 1 | Z, L)
  std::optional<LogisticModel> propensity;  // pi(A = 1 | L), no instrument
  std::optional<CoxModel> outcome;          // Lambda_T(t | Z, L, A)
  std::optional<CoxModel> outcome_naive;    // Lambda_T(t | L, A)
  CensoringModel censor;
  double delta_floor = kDefaultDeltaFloor;

  double instrument_prob(std::span<const double> covariates) const;           // f(Z=1|L)
  double treatment_prob(int z, std::span<const double> covariates) const;     // pi(A=1|z,L)
  double propensity_prob(std::span<const double> covariates) const;           // pi(A=1|L)
};

NuisanceSet fit_nuisance(const Dataset& data, const NuisanceOptions& options = {});

// pi(A=1|Z=1,L) - pi(A=1|Z=0,L), pushed out to +-delta_floor when smaller in
// magnitude (sign of 0 taken as +1).
double delta_L(const NuisanceSet& nuisance, std::span<const double> covariates);

// S_C(s|z,L,a), floored at 1e-3.
double censor_survival(const NuisanceSet& nuisance, double s, int z,
                       std::span<const double> covariates, int a);

}  // namespace ivregime
