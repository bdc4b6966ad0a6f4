#pragma once

// Propensity-score matching ahead of the DID re-estimate: logit scores fitted
// either on the pooled panel or year by year, nearest-neighbor matching inside
// the min-max common-support interval, covariate balance diagnostics, and
// kernel-density grids for score-overlap plots. The matched sample feeds
// psm_did, which reruns the baseline DID on the matched rows only.

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "paneldid/did.hpp"
#include "paneldid/panel.hpp"
#include "paneldid/regression.hpp"

namespace paneldid {

enum class PropensityMode { pooled, per_year };

struct PropensityFit {
  // Unset in pooled mode, the fitted year otherwise.
  std::optional<int> year;
  RegressionResult logit;
};

struct PropensityModel {
  PropensityMode mode = PropensityMode::pooled;
  std::string treatment;
  std::vector<std::string> covariates;
  // Aligned with the score matrix: entities index rows, years index columns.
  std::vector<std::string> entities;
  std::vector<int> years;
  Eigen::MatrixXd scores;  // fitted probabilities, strictly inside (0, 1)
  MaskMatrix valid;        // score defined: covariates observed, fit succeeded
  MaskMatrix treated;      // treatment value is 1 at this cell
  std::vector<PropensityFit> fits;
  std::map<int, std::string> skipped_years;  // per-year fits that failed
};

// Fits treatment ~ covariates by logit on complete cases. Pooled mode treats
// the panel as one cross-section; per-year mode fits one model per year and
// records years whose fit fails (separation, constant outcome) in
// skipped_years instead of aborting.
PropensityModel fit_propensity(const PanelDataset& data, const std::string& treatment,
                               const std::vector<std::string>& covariates,
                               PropensityMode mode, const SampleFilter& filter = {});

struct MatchOptions {
  PropensityMode mode = PropensityMode::pooled;
  int k = 1;
  std::optional<double> caliper;
  bool with_replacement = true;
  // Measure distances on the log-odds scale instead of raw probabilities.
  bool on_log_odds = false;
};

struct Observation {
  std::string entity;
  int year = 0;
};

struct MatchPair {
  Observation treated;
  Observation control;
  double score_treated = 0.0;
  double score_control = 0.0;
  double distance = 0.0;
};

struct Exclusion {
  Observation obs;
  std::string reason;
};

struct SupportInterval {
  double low = 0.0;
  double high = 0.0;
};

struct MatchedSample {
  std::string treatment;
  MatchOptions options;
  SupportInterval support;                        // pooled mode
  std::map<int, SupportInterval> yearly_support;  // per-year mode
  // Ascending year, then treated entity, then control distance.
  std::vector<MatchPair> pairs;
  std::vector<Exclusion> excluded;

  // Distinct panel cells appearing in any pair, treated or control side.
  std::set<std::pair<std::string, int>> rows() const;
};

// Matches every on-support treated observation to its k nearest control
// scores. Ties break toward the lower entity id, then the earlier year.
// Per-year mode matches within each year and concatenates the results in
// ascending year order.
MatchedSample match_nearest(const PropensityModel& model, const MatchOptions& options);

struct BalanceRow {
  std::string covariate;
  double mean_treated_before = 0.0;
  double mean_control_before = 0.0;
  double bias_before = 0.0;
  double mean_treated_after = 0.0;
  double mean_control_after = 0.0;
  double bias_after = 0.0;
  double reduction_pct = 0.0;
  bool flagged = false;  // a bias was undefined (no variance in that sample)
};

struct BalanceTable {
  std::optional<int> year;  // unset for the overall table
  std::vector<BalanceRow> rows;
  double pseudo_r2_before = 0.0;
  double pseudo_r2_after = 0.0;
  bool after_fit_failed = false;
};

struct BalanceReport {
  // Overall table first; per-year blocks follow in per-year mode.
  std::vector<BalanceTable> tables;
};

// Standardized bias 100*(mT - mC)/sqrt((vT + vC)/2) per covariate, before
// matching on the full complete-case sample and after on the matched rows,
// with the logit refit on the matched sample for the after pseudo-R^2.
BalanceReport balance_report(const PanelDataset& data, const MatchedSample& matched,
                             const std::vector<std::string>& covariates);

enum class Kernel { gaussian, epanechnikov };

struct DensityGrid {
  Kernel kernel = Kernel::gaussian;
  double bandwidth = 0.0;
  Eigen::VectorXd x;        // 512 evenly spaced points over [min-3h, max+3h]
  Eigen::VectorXd density;  // renormalized to unit trapezoid integral
};

DensityGrid kernel_density(const std::vector<double>& values, Kernel kernel,
                           std::optional<double> bandwidth = {});

// Baseline DID restricted to the matched rows: the union of treated and
// control observations in the matched sample, each row used once.
RegressionResult psm_did(const PanelDataset& data, const DualTreatment& dual,
                         const MatchedSample& matched,
                         const std::vector<std::string>& controls,
                         const DidOptions& options);

}  // namespace paneldid
