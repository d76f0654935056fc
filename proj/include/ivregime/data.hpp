#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ivregime/errors.hpp"

namespace ivregime {

// One observed record (T~, delta, A, Z, L).
struct Subject {
  double time = 0.0;  // min(T, C)
  int status = 0;     // 1 = event observed
  int treatment = 0;
  int instrument = 0;
  std::vector<double> covariates;
};

// A raw row prior to validation; integer fields are kept as doubles so that
// out-of-domain values (2, 0.5, NaN) can be reported instead of truncated.
struct RawRow {
  double time = 0.0;
  double status = 0.0;
  double treatment = 0.0;
  double instrument = 0.0;
  std::vector<double> covariates;
};

// Validated, immutable cohort. Construct through validate_dataset().
class Dataset {
 public:
  Dataset() = default;

  std::size_t size() const noexcept { return subjects_.size(); }
  std::size_t dim() const noexcept { return p_; }
  const Subject& operator[](std::size_t i) const { return subjects_[i]; }
  const std::vector<Subject>& subjects() const noexcept { return subjects_; }
  auto begin() const noexcept { return subjects_.begin(); }
  auto end() const noexcept { return subjects_.end(); }

  std::size_t event_count() const noexcept;

  // Rows drawn by index (bootstrap resampling); the result is re-validated.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  friend Dataset validate_dataset(const std::vector<RawRow>& rows);
  friend Dataset make_dataset(std::vector<Subject> subjects);
  std::vector<Subject> subjects_;
  std::size_t p_ = 0;
};

// Returns the dataset or throws ValidationError carrying every violation.
Dataset validate_dataset(const std::vector<RawRow>& rows);

// Convenience for generated data; same checks as validate_dataset.
Dataset make_dataset(std::vector<Subject> subjects);

// Linear decision rule I{(1, L')eta >= 0}, with ||eta||_2 = 1.
class Regime {
 public:
  const std::vector<double>& eta() const noexcept { return eta_; }
  std::size_t size() const noexcept { return eta_.size(); }
  double operator[](std::size_t k) const { return eta_[k]; }

  // (1, L') eta
  double index(std::span<const double> covariates) const;

 private:
  friend Regime regime_normalize(std::span<const double> raw);
  std::vector<double> eta_;
};

Regime regime_normalize(std::span<const double> raw);

// 1 iff (1, L') eta >= 0; the boundary is assigned treatment 1.
int regime_decide(const Regime& regime, std::span<const double> covariates);

}  // namespace ivregime
