#include "paneldid/regression.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include "paneldid/errors.hpp"
#include "paneldid/stats.hpp"

namespace paneldid {

namespace {

constexpr double kPivotTolerance = 1e-10;

struct Sample {
  std::vector<Eigen::Index> egrp;   // compact entity group per observation
  std::vector<Eigen::Index> ygrp;   // compact year group per observation
  std::vector<std::string> entity_names;
  std::vector<int> year_values;
  bool balanced = true;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // regressors in spec order

  Eigen::Index n() const { return y.size(); }
  long n_entities() const { return static_cast<long>(entity_names.size()); }
  long n_years() const { return static_cast<long>(year_values.size()); }
};

Sample collect_sample(const PanelDataset& data, const RegressionSpec& spec) {
  if (spec.outcome.empty()) throw ValidationError("regression: outcome is empty");
  for (const std::string& name : spec.regressors)
    if (name == spec.outcome)
      throw ValidationError("regression: outcome \"" + spec.outcome +
                            "\" is also a regressor");

  std::vector<const Eigen::MatrixXd*> cols;
  std::vector<const MaskMatrix*> masks;
  cols.push_back(&data.var(spec.outcome));
  masks.push_back(&data.mask(spec.outcome));
  for (const std::string& name : spec.regressors) {
    cols.push_back(&data.var(name));
    masks.push_back(&data.mask(name));
  }

  std::vector<std::pair<Eigen::Index, Eigen::Index>> obs;
  for (Eigen::Index r = 0; r < data.n_entities(); ++r) {
    for (Eigen::Index c = 0; c < data.n_years(); ++c) {
      if (spec.filter && !spec.filter(data.entities[static_cast<std::size_t>(r)],
                                      data.years[static_cast<std::size_t>(c)]))
        continue;
      for (std::size_t v = 0; v < masks.size(); ++v)
        if ((*masks[v])(r, c))
          throw ValidationError(
              "regression: variable has missing cells in the sample; fill it first "
              "(entity \"" +
              data.entities[static_cast<std::size_t>(r)] + "\", year " +
              std::to_string(data.years[static_cast<std::size_t>(c)]) + ")");
      obs.emplace_back(r, c);
    }
  }
  const auto n = static_cast<Eigen::Index>(obs.size());
  if (n < static_cast<Eigen::Index>(spec.regressors.size()) + 2)
    throw ValidationError("regression: sample has " + std::to_string(n) +
                          " observations, need at least " +
                          std::to_string(spec.regressors.size() + 2));

  Sample s;
  std::map<Eigen::Index, Eigen::Index> ent_ids;
  std::map<Eigen::Index, Eigen::Index> yr_ids;
  for (const auto& [r, c] : obs) {
    if (!ent_ids.count(r)) {
      ent_ids[r] = static_cast<Eigen::Index>(s.entity_names.size());
      s.entity_names.push_back(data.entities[static_cast<std::size_t>(r)]);
    }
    if (!yr_ids.count(c)) {
      yr_ids[c] = static_cast<Eigen::Index>(s.year_values.size());
      s.year_values.push_back(data.years[static_cast<std::size_t>(c)]);
    }
  }

  s.y.resize(n);
  s.X.resize(n, static_cast<Eigen::Index>(spec.regressors.size()));
  s.egrp.resize(static_cast<std::size_t>(n));
  s.ygrp.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [r, c] = obs[static_cast<std::size_t>(i)];
    s.egrp[static_cast<std::size_t>(i)] = ent_ids[r];
    s.ygrp[static_cast<std::size_t>(i)] = yr_ids[c];
    s.y(i) = (*cols[0])(r, c);
    for (std::size_t v = 1; v < cols.size(); ++v)
      s.X(i, static_cast<Eigen::Index>(v - 1)) = (*cols[v])(r, c);
  }
  // Entity-year pairs are unique, so the sample is a full rectangle exactly
  // when the counts multiply out.
  s.balanced = (n == static_cast<Eigen::Index>(s.entity_names.size()) *
                         static_cast<Eigen::Index>(s.year_values.size()));
  return s;
}

// Subtracts group means in place and returns the overall mean of the input.
double demean_by(const std::vector<Eigen::Index>& grp, long n_groups,
                 Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_groups);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_groups);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    sums(grp[static_cast<std::size_t>(i)]) += v(i);
    counts(grp[static_cast<std::size_t>(i)]) += 1.0;
  }
  const double grand = sums.sum() / static_cast<double>(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const Eigen::Index g = grp[static_cast<std::size_t>(i)];
    v(i) -= sums(g) / counts(g);
  }
  return grand;
}

// Balanced two-way demeaning: x - entity mean - year mean + grand mean.
void double_demean(const Sample& s, Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::VectorXd esum = Eigen::VectorXd::Zero(s.n_entities());
  Eigen::VectorXd ecnt = Eigen::VectorXd::Zero(s.n_entities());
  Eigen::VectorXd ysum = Eigen::VectorXd::Zero(s.n_years());
  Eigen::VectorXd ycnt = Eigen::VectorXd::Zero(s.n_years());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    esum(s.egrp[static_cast<std::size_t>(i)]) += v(i);
    ecnt(s.egrp[static_cast<std::size_t>(i)]) += 1.0;
    ysum(s.ygrp[static_cast<std::size_t>(i)]) += v(i);
    ycnt(s.ygrp[static_cast<std::size_t>(i)]) += 1.0;
  }
  const double grand = esum.sum() / static_cast<double>(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const Eigen::Index e = s.egrp[static_cast<std::size_t>(i)];
    const Eigen::Index t = s.ygrp[static_cast<std::size_t>(i)];
    v(i) = v(i) - esum(e) / ecnt(e) - ysum(t) / ycnt(t) + grand;
  }
}

struct Design {
  Eigen::MatrixXd cols;            // intercept first
  std::vector<std::string> names;  // aligned with cols
  Eigen::VectorXd y;
  long absorbed_df = 0;
  double raw_y_mean = 0.0;
};

// Builds the estimation design: absorbs fixed effects by demeaning, adds
// explicit year dummies when both effects are requested on an unbalanced
// sample, re-centers columns on their raw means, and prepends an intercept.
Design build_design(const Sample& s, const RegressionSpec& spec) {
  Design d;
  d.y = s.y;
  d.raw_y_mean = s.y.mean();

  Eigen::MatrixXd X = s.X;
  std::vector<std::string> names = spec.regressors;

  const bool both = spec.effects.entity && spec.effects.year;
  const bool dummy_years = both && !s.balanced;
  if (dummy_years) {
    // First sample year is the reference category.
    std::vector<int> sorted_years = s.year_values;
    std::sort(sorted_years.begin(), sorted_years.end());
    const auto extra = static_cast<Eigen::Index>(sorted_years.size()) - 1;
    Eigen::MatrixXd with_dummies(X.rows(), X.cols() + extra);
    with_dummies.leftCols(X.cols()) = X;
    for (Eigen::Index j = 0; j < extra; ++j) {
      const int year = sorted_years[static_cast<std::size_t>(j + 1)];
      names.push_back("year_" + std::to_string(year));
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        with_dummies(i, X.cols() + j) =
            (s.year_values[static_cast<std::size_t>(s.ygrp[static_cast<std::size_t>(i)])] ==
             year)
                ? 1.0
                : 0.0;
    }
    X = std::move(with_dummies);
  }

  const bool any_effect = spec.effects.entity || spec.effects.year;
  if (any_effect) {
    const Eigen::RowVectorXd col_means = X.colwise().mean();
    if (both && s.balanced) {
      double_demean(s, d.y);
      for (Eigen::Index j = 0; j < X.cols(); ++j) double_demean(s, X.col(j));
      d.absorbed_df = s.n_entities() + s.n_years() - 2;
    } else if (spec.effects.entity) {
      demean_by(s.egrp, s.n_entities(), d.y);
      for (Eigen::Index j = 0; j < X.cols(); ++j) demean_by(s.egrp, s.n_entities(), X.col(j));
      d.absorbed_df = s.n_entities() - 1;
    } else {
      demean_by(s.ygrp, s.n_years(), d.y);
      for (Eigen::Index j = 0; j < X.cols(); ++j) demean_by(s.ygrp, s.n_years(), X.col(j));
      d.absorbed_df = s.n_years() - 1;
    }
    // Re-center on the raw means so the intercept reports the grand-mean
    // adjustment instead of zero.
    X.rowwise() += col_means;
    d.y.array() += d.raw_y_mean;
  }

  d.cols.resize(X.rows(), X.cols() + 1);
  d.cols.col(0).setOnes();
  d.cols.rightCols(X.cols()) = X;
  d.names.reserve(names.size() + 1);
  d.names.push_back("constant");
  d.names.insert(d.names.end(), names.begin(), names.end());
  return d;
}

// Greedy rank detection by column-pivoted QR; returns kept design columns in
// their original order and records the dropped names.
void drop_collinear(const Design& d, std::vector<Eigen::Index>* kept,
                    std::vector<std::string>* dropped) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pqr(d.cols);
  const Eigen::VectorXd diag = pqr.matrixQR().diagonal().cwiseAbs();
  if (diag.size() == 0 || diag(0) <= 0.0)
    throw EstimationError("regression: design matrix is identically zero");
  Eigen::Index rank = 1;
  while (rank < diag.size() && diag(rank) > kPivotTolerance * diag(0)) ++rank;

  // (cols * P).col(k) = cols.col(indices()(k)), so the pivot slots below the
  // rank name the surviving original columns.
  const auto& perm = pqr.colsPermutation().indices();
  std::set<Eigen::Index> kept_set;
  for (Eigen::Index k = 0; k < rank; ++k) kept_set.insert(perm(k));
  kept->assign(kept_set.begin(), kept_set.end());
  for (Eigen::Index j = 0; j < d.cols.cols(); ++j)
    if (!kept_set.count(j)) dropped->push_back(d.names[static_cast<std::size_t>(j)]);
}

double p_value_dof(SeType se, long n_clusters, double dof_resid) {
  if (se == SeType::cluster_by_entity) return static_cast<double>(n_clusters - 1);
  return dof_resid;
}

}  // namespace

const Coefficient& RegressionResult::coef(const std::string& name) const {
  for (const Coefficient& c : coefficients)
    if (c.name == name) return c;
  throw ValidationError("regression result: no coefficient named \"" + name + "\"");
}

bool RegressionResult::has_coef(const std::string& name) const {
  for (const Coefficient& c : coefficients)
    if (c.name == name) return true;
  return false;
}

PanelDataset within_transform(const PanelDataset& data,
                              const std::vector<std::string>& variables, FeSpec effects) {
  PanelDataset out = data;
  for (const std::string& name : variables) {
    if (data.mask(name).any())
      throw ValidationError("within_transform: variable \"" + name +
                            "\" has missing cells; fill it first");
    Eigen::MatrixXd& m = out.values.at(name);
    const double grand = m.mean();
    const Eigen::VectorXd entity_means = m.rowwise().mean();
    const Eigen::RowVectorXd year_means = m.colwise().mean();
    if (effects.entity && effects.year) {
      m = ((m.colwise() - entity_means).rowwise() - year_means).array() + grand;
    } else if (effects.entity) {
      m.colwise() -= entity_means;
    } else if (effects.year) {
      m.rowwise() -= year_means;
    }
  }
  return out;
}

RegressionResult ols(const PanelDataset& data, const RegressionSpec& spec) {
  const Sample s = collect_sample(data, spec);
  if (spec.se_type == SeType::cluster_by_entity && s.n_entities() < 2)
    throw ValidationError("regression: clustered standard errors need at least 2 entities");

  Design d = build_design(s, spec);
  std::vector<Eigen::Index> kept;
  std::vector<std::string> dropped;
  drop_collinear(d, &kept, &dropped);

  const auto n = static_cast<Eigen::Index>(d.y.size());
  const auto r = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd Xk(n, r);
  for (Eigen::Index j = 0; j < r; ++j) Xk.col(j) = d.cols.col(kept[static_cast<std::size_t>(j)]);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Xk);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < r; ++j)
    if (std::fabs(R(j, j)) < 1e-13 * std::fabs(R(0, 0)))
      throw EstimationError("regression: rank deficiency beyond dropped columns near \"" +
                            d.names[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])] +
                            "\"");
  const Eigen::VectorXd beta = qr.solve(d.y);
  const Eigen::VectorXd resid = d.y - Xk * beta;

  const double dof_resid = static_cast<double>(n - r) - static_cast<double>(d.absorbed_df);
  if (dof_resid < 1.0)
    throw EstimationError("regression: no residual degrees of freedom (n=" +
                          std::to_string(n) + ", parameters=" +
                          std::to_string(r + d.absorbed_df) + ")");
  const double k_total = static_cast<double>(r) + static_cast<double>(d.absorbed_df);

  const Eigen::MatrixXd r_inv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(r, r));
  const Eigen::MatrixXd xtx_inv = r_inv * r_inv.transpose();

  Eigen::MatrixXd vcov(r, r);
  long n_clusters = 0;
  switch (spec.se_type) {
    case SeType::classical: {
      const double sigma2 = resid.squaredNorm() / dof_resid;
      vcov = sigma2 * xtx_inv;
      break;
    }
    case SeType::hc_robust: {
      const Eigen::MatrixXd weighted = Xk.array().colwise() * resid.array().square();
      const Eigen::MatrixXd meat = Xk.transpose() * weighted;
      const double factor = static_cast<double>(n) / (static_cast<double>(n) - k_total);
      vcov = factor * xtx_inv * meat * xtx_inv;
      break;
    }
    case SeType::cluster_by_entity: {
      const long g_count = s.n_entities();
      n_clusters = g_count;
      Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(g_count, r);
      for (Eigen::Index i = 0; i < n; ++i)
        scores.row(s.egrp[static_cast<std::size_t>(i)]) += resid(i) * Xk.row(i);
      const Eigen::MatrixXd meat = scores.transpose() * scores;
      const double gd = static_cast<double>(g_count);
      const double factor =
          gd / (gd - 1.0) * (static_cast<double>(n) - 1.0) / (static_cast<double>(n) - k_total);
      vcov = factor * xtx_inv * meat * xtx_inv;
      break;
    }
  }

  RegressionResult result;
  result.se_type = spec.se_type;
  result.effects = spec.effects;
  result.balanced = s.balanced;
  result.intercept_absorbed = spec.effects.entity || spec.effects.year;
  result.n_obs = static_cast<long>(n);
  result.n_entities = s.n_entities();
  result.n_clusters = n_clusters;
  result.dof_resid = dof_resid;
  result.dropped = dropped;

  const double p_dof = p_value_dof(spec.se_type, n_clusters, dof_resid);
  std::vector<Coefficient> rows;
  for (Eigen::Index j = 0; j < r; ++j) {
    Coefficient c;
    c.name = d.names[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])];
    c.estimate = beta(j);
    c.se = std::sqrt(std::max(0.0, vcov(j, j)));
    c.t_stat = c.se > 0.0 ? c.estimate / c.se : 0.0;
    c.p_value = c.se > 0.0 ? two_sided_p_from_t(c.t_stat, p_dof) : 1.0;
    rows.push_back(std::move(c));
  }
  // Spec order first, then year dummies, constant last.
  for (const std::string& name : spec.regressors)
    for (Coefficient& c : rows)
      if (c.name == name) result.coefficients.push_back(c);
  for (Coefficient& c : rows)
    if (c.name.rfind("year_", 0) == 0) result.coefficients.push_back(c);
  for (Coefficient& c : rows)
    if (c.name == "constant") result.coefficients.push_back(c);

  const double ssr = resid.squaredNorm();
  const double tss_within = (d.y.array() - d.y.mean()).square().sum();
  if (tss_within <= 0.0)
    throw EstimationError("regression: outcome has no variation left after absorbing effects");
  result.r2_within = 1.0 - ssr / tss_within;
  const double tss_overall = (s.y.array() - s.y.mean()).square().sum();
  result.r2_overall = tss_overall > 0.0 ? 1.0 - ssr / tss_overall : 0.0;
  return result;
}

RegressionResult logit(const PanelDataset& data, const RegressionSpec& spec) {
  if (spec.effects.entity || spec.effects.year)
    throw ValidationError("logit: fixed effects are not supported (plain logit only)");
  const Sample s = collect_sample(data, spec);
  for (Eigen::Index i = 0; i < s.y.size(); ++i)
    if (s.y(i) != 0.0 && s.y(i) != 1.0)
      throw ValidationError("logit: outcome \"" + spec.outcome +
                            "\" is not binary 0/1 (found " + std::to_string(s.y(i)) + ")");
  const double y_mean = s.y.mean();
  if (y_mean <= 0.0 || y_mean >= 1.0)
    throw ValidationError("logit: outcome \"" + spec.outcome + "\" is constant");

  Design d;
  d.y = s.y;
  d.cols.resize(s.X.rows(), s.X.cols() + 1);
  d.cols.col(0).setOnes();
  d.cols.rightCols(s.X.cols()) = s.X;
  d.names.push_back("constant");
  d.names.insert(d.names.end(), spec.regressors.begin(), spec.regressors.end());

  std::vector<Eigen::Index> kept;
  std::vector<std::string> dropped;
  drop_collinear(d, &kept, &dropped);
  const auto n = static_cast<Eigen::Index>(d.y.size());
  const auto r = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd Xk(n, r);
  for (Eigen::Index j = 0; j < r; ++j) Xk.col(j) = d.cols.col(kept[static_cast<std::size_t>(j)]);

  // Column scales for the separation check: |beta_j| * sd_j > 30 means the
  // fitted probabilities are saturating and the MLE is running away.
  Eigen::VectorXd scales(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const double mean = Xk.col(j).mean();
    const double var = (Xk.col(j).array() - mean).square().sum() /
                       std::max(1.0, static_cast<double>(n - 1));
    scales(j) = std::sqrt(var);
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(r);
  std::deque<double> step_trace;
  long iterations = 0;
  bool converged = false;
  Eigen::MatrixXd info(r, r);
  while (iterations < 100) {
    ++iterations;
    const Eigen::VectorXd eta = Xk * beta;
    const Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).cwiseMax(1e-10).matrix();
    const Eigen::VectorXd z = eta.array() + (d.y - p).array() / w.array();
    const Eigen::MatrixXd xw = Xk.array().colwise() * w.array();
    info = Xk.transpose() * xw;
    const Eigen::VectorXd rhs = xw.transpose() * z;
    const Eigen::VectorXd beta_new = info.ldlt().solve(rhs);

    const double step = (beta_new - beta).cwiseAbs().maxCoeff();
    step_trace.push_back(step);
    if (step_trace.size() > 5) step_trace.pop_front();
    beta = beta_new;

    for (Eigen::Index j = 0; j < r; ++j)
      if (scales(j) > 0.0 && std::fabs(beta(j)) * scales(j) > 30.0)
        throw EstimationError(
            "logit: perfect separation detected for variable \"" +
            d.names[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])] + "\"");

    if (step < 1e-8) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream trace;
    trace << "logit: no convergence after 100 iterations; last steps:";
    for (const double v : step_trace) trace << ' ' << v;
    throw EstimationError(trace.str());
  }

  const Eigen::VectorXd eta = Xk * beta;
  const Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = std::min(1.0 - 1e-12, std::max(1e-12, p(i)));
    ll += d.y(i) * std::log(pi) + (1.0 - d.y(i)) * std::log(1.0 - pi);
  }
  const double ll0 =
      static_cast<double>(n) * (y_mean * std::log(y_mean) + (1.0 - y_mean) * std::log(1.0 - y_mean));

  const Eigen::MatrixXd vcov = info.ldlt().solve(Eigen::MatrixXd::Identity(r, r));

  RegressionResult result;
  result.is_logit = true;
  result.se_type = SeType::classical;
  result.n_obs = static_cast<long>(n);
  result.n_entities = s.n_entities();
  result.dof_resid = static_cast<double>(n - r);
  result.dropped = dropped;
  result.iterations = iterations;
  result.log_likelihood = ll;
  result.pseudo_r2 = 1.0 - ll / ll0;
  result.balanced = s.balanced;

  std::vector<Coefficient> rows;
  for (Eigen::Index j = 0; j < r; ++j) {
    Coefficient c;
    c.name = d.names[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])];
    c.estimate = beta(j);
    c.se = std::sqrt(std::max(0.0, vcov(j, j)));
    c.t_stat = c.se > 0.0 ? c.estimate / c.se : 0.0;
    // Large-sample z statistics.
    c.p_value = c.se > 0.0 ? 2.0 * (1.0 - normal_cdf(std::fabs(c.t_stat))) : 1.0;
    rows.push_back(std::move(c));
  }
  for (const std::string& name : spec.regressors)
    for (Coefficient& c : rows)
      if (c.name == name) result.coefficients.push_back(c);
  for (Coefficient& c : rows)
    if (c.name == "constant") result.coefficients.push_back(c);
  return result;
}

SubgroupResults subgroup_regressions(const PanelDataset& data, const RegressionSpec& spec,
                                     const std::string& group_var) {
  const Eigen::MatrixXd& groups = data.var(group_var);
  if (data.mask(group_var).any())
    throw ValidationError("subgroup_regressions: group variable \"" + group_var +
                          "\" has missing cells");

  auto entity_label = std::make_shared<std::map<std::string, double>>();
  for (Eigen::Index r = 0; r < data.n_entities(); ++r) {
    const double label = groups(r, 0);
    for (Eigen::Index c = 1; c < data.n_years(); ++c)
      if (groups(r, c) != label)
        throw ValidationError("subgroup_regressions: group variable \"" + group_var +
                              "\" varies within entity \"" +
                              data.entities[static_cast<std::size_t>(r)] + "\"");
    (*entity_label)[data.entities[static_cast<std::size_t>(r)]] = label;
  }

  std::set<double> labels;
  for (const auto& [entity, label] : *entity_label) labels.insert(label);

  SubgroupResults results;
  for (const double label : labels) {
    RegressionSpec sub = spec;
    const SampleFilter base = spec.filter;
    sub.filter = [entity_label, label, base](const std::string& entity, int year) {
      if (base && !base(entity, year)) return false;
      const auto it = entity_label->find(entity);
      return it != entity_label->end() && it->second == label;
    };
    try {
      results.groups.emplace(label, ols(data, sub));
    } catch (const std::runtime_error& e) {
      results.skipped.emplace(label, e.what());
    }
  }
  return results;
}

}  // namespace paneldid
