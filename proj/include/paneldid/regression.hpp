#pragma once

// Least squares with optional entity/year fixed effects, classical, HC1,
// and entity-clustered standard errors, plain logit via IRLS, and per-group
// regressions. Fixed effects are absorbed by demeaning: double demeaning on
// balanced samples, entity demeaning plus explicit year dummies when a row
// filter leaves the sample unbalanced. Coefficients match explicit-dummy
// least squares either way; the reported constant is the grand-mean
// adjustment so tables can print an intercept alongside absorbed effects.

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "paneldid/panel.hpp"

namespace paneldid {

enum class SeType { classical, hc_robust, cluster_by_entity };

struct FeSpec {
  bool entity = false;
  bool year = false;
};

// Keep an observation when the filter returns true; an empty function keeps
// every row.
using SampleFilter = std::function<bool(const std::string& entity, int year)>;

struct RegressionSpec {
  std::string outcome;
  std::vector<std::string> regressors;
  FeSpec effects;
  SeType se_type = SeType::cluster_by_entity;
  SampleFilter filter;
};

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
};

struct RegressionResult {
  // Kept regressors in spec order, then any explicit year dummies, then the
  // constant.
  std::vector<Coefficient> coefficients;
  std::vector<std::string> dropped;
  double r2_within = 0.0;
  double r2_overall = 0.0;
  long n_obs = 0;
  long n_entities = 0;
  long n_clusters = 0;
  double dof_resid = 0.0;
  SeType se_type = SeType::classical;
  FeSpec effects;
  bool balanced = true;
  bool intercept_absorbed = false;

  // Logit extras; zero/false for least squares results.
  bool is_logit = false;
  double pseudo_r2 = 0.0;
  double log_likelihood = 0.0;
  long iterations = 0;

  const Coefficient& coef(const std::string& name) const;
  bool has_coef(const std::string& name) const;
};

// Replaces the named variables with their demeaned versions over the full
// balanced panel: x - entity mean - year mean + grand mean for both effects,
// single demeaning otherwise.
PanelDataset within_transform(const PanelDataset& data,
                              const std::vector<std::string>& variables, FeSpec effects);

RegressionResult ols(const PanelDataset& data, const RegressionSpec& spec);

// Plain logit (no fixed effects) by iteratively reweighted least squares.
// Standard errors come from the inverse information matrix; se_type is
// ignored. Outcome must be exactly 0/1.
RegressionResult logit(const PanelDataset& data, const RegressionSpec& spec);

struct SubgroupResults {
  std::map<double, RegressionResult> groups;
  std::map<double, std::string> skipped;  // group label -> reason
};

// One independent regression per distinct value of group_var, which must be
// constant within each entity. Groups that fail to estimate are skipped with
// the reason recorded; the rest still run.
SubgroupResults subgroup_regressions(const PanelDataset& data, const RegressionSpec& spec,
                                     const std::string& group_var);

}  // namespace paneldid
