#include "ivregime/data.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace ivregime {

namespace {

std::string describe(const std::vector<RowIssue>& issues) {
  std::string msg = "dataset validation failed:";
  for (const auto& issue : issues) {
    msg += "\n  ";
    if (issue.row != std::numeric_limits<std::size_t>::max()) {
      msg += "row " + std::to_string(issue.row);
      if (!issue.field.empty()) msg += " field '" + issue.field + "'";
      msg += ": ";
    }
    msg += issue.reason;
  }
  return msg;
}

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

ValidationError::ValidationError(std::vector<RowIssue> issues)
    : std::runtime_error(describe(issues)), issues_(std::move(issues)) {}

std::size_t Dataset::event_count() const noexcept {
  std::size_t k = 0;
  for (const auto& s : subjects_) k += static_cast<std::size_t>(s.status == 1);
  return k;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Subject> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= subjects_.size()) throw InvalidArgument("subset row out of range");
    picked.push_back(subjects_[r]);
  }
  return make_dataset(std::move(picked));
}

Dataset validate_dataset(const std::vector<RawRow>& rows) {
  constexpr auto kDatasetLevel = std::numeric_limits<std::size_t>::max();
  std::vector<RowIssue> issues;
  if (rows.empty()) {
    issues.push_back({kDatasetLevel, "", "empty dataset"});
    throw ValidationError(std::move(issues));
  }
  const std::size_t p = rows.front().covariates.size();
  bool any_event = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RawRow& r = rows[i];
    if (!std::isfinite(r.time) || r.time < 0.0)
      issues.push_back({i, "time", "must be finite and >= 0"});
    if (!is_binary(r.status)) issues.push_back({i, "status", "must be 0 or 1"});
    if (!is_binary(r.treatment)) issues.push_back({i, "treatment", "must be 0 or 1"});
    if (!is_binary(r.instrument)) issues.push_back({i, "instrument", "must be 0 or 1"});
    if (r.covariates.size() != p) {
      issues.push_back({i, "covariates",
                        "expected " + std::to_string(p) + " covariates, got " +
                            std::to_string(r.covariates.size())});
    } else {
      for (std::size_t k = 0; k < p; ++k) {
        if (!std::isfinite(r.covariates[k]))
          issues.push_back({i, "L" + std::to_string(k + 1), "must be finite"});
      }
    }
    any_event = any_event || r.status == 1.0;
  }
  if (!any_event) issues.push_back({kDatasetLevel, "status", "no events"});
  if (!issues.empty()) throw ValidationError(std::move(issues));

  Dataset ds;
  ds.p_ = p;
  ds.subjects_.reserve(rows.size());
  for (const RawRow& r : rows) {
    ds.subjects_.push_back(Subject{r.time, static_cast<int>(r.status),
                                   static_cast<int>(r.treatment),
                                   static_cast<int>(r.instrument), r.covariates});
  }
  return ds;
}

Dataset make_dataset(std::vector<Subject> subjects) {
  std::vector<RawRow> rows;
  rows.reserve(subjects.size());
  for (auto& s : subjects) {
    rows.push_back(RawRow{s.time, static_cast<double>(s.status),
                          static_cast<double>(s.treatment),
                          static_cast<double>(s.instrument), std::move(s.covariates)});
  }
  return validate_dataset(rows);
}

double Regime::index(std::span<const double> covariates) const {
  if (covariates.size() + 1 != eta_.size())
    throw InvalidArgument("regime has " + std::to_string(eta_.size()) +
                          " coefficients but covariate vector has " +
                          std::to_string(covariates.size()) + " entries");
  double x = eta_[0];
  for (std::size_t k = 0; k < covariates.size(); ++k) x += eta_[k + 1] * covariates[k];
  return x;
}

Regime regime_normalize(std::span<const double> raw) {
  if (raw.empty()) throw InvalidArgument("regime vector is empty");
  double ss = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw InvalidArgument("regime vector has non-finite entry");
    ss += v * v;
  }
  if (ss == 0.0) throw InvalidArgument("regime vector is all zero");
  const double norm = std::sqrt(ss);
  Regime r;
  r.eta_.reserve(raw.size());
  for (double v : raw) r.eta_.push_back(v / norm);
  return r;
}

int regime_decide(const Regime& regime, std::span<const double> covariates) {
  return regime.index(covariates) >= 0.0 ? 1 : 0;
}

}  // namespace ivregime
