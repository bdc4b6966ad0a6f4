#include "paneldid/psm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "paneldid/errors.hpp"
#include "paneldid/stats.hpp"

namespace paneldid {

namespace {

constexpr double kScoreClamp = 1e-12;

// Cells usable for fitting and matching: treatment and every covariate
// observed, and the caller's filter (if any) keeps the row.
MaskMatrix complete_cases(const PanelDataset& data, const std::string& treatment,
                          const std::vector<std::string>& covariates,
                          const SampleFilter& filter) {
  MaskMatrix usable =
      MaskMatrix::Constant(static_cast<Eigen::Index>(data.entities.size()),
                           static_cast<Eigen::Index>(data.years.size()), true);
  usable = usable && !data.mask(treatment);
  for (const std::string& cov : covariates) usable = usable && !data.mask(cov);
  if (filter) {
    for (Eigen::Index r = 0; r < usable.rows(); ++r)
      for (Eigen::Index c = 0; c < usable.cols(); ++c)
        if (usable(r, c) && !filter(data.entities[static_cast<std::size_t>(r)],
                                    data.years[static_cast<std::size_t>(c)]))
          usable(r, c) = false;
  }
  return usable;
}

// Fitted probability from a logit coefficient table, honoring dropped
// columns, clamped strictly inside (0, 1).
double fitted_score(const RegressionResult& fit, const std::vector<std::string>& covariates,
                    const PanelDataset& data, Eigen::Index r, Eigen::Index c) {
  double z = fit.coef("constant").estimate;
  for (const std::string& cov : covariates)
    if (fit.has_coef(cov)) z += fit.coef(cov).estimate * data.var(cov)(r, c);
  const double p = 1.0 / (1.0 + std::exp(-z));
  return std::min(1.0 - kScoreClamp, std::max(kScoreClamp, p));
}

SampleFilter mask_filter(const PanelDataset& data, const MaskMatrix& usable) {
  return [&data, usable](const std::string& entity, int year) {
    return usable(data.entity_index(entity), data.year_index(year));
  };
}

struct Candidate {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double score = 0.0;
};

Observation to_obs(const PropensityModel& model, const Candidate& cand) {
  return {model.entities[static_cast<std::size_t>(cand.row)],
          model.years[static_cast<std::size_t>(cand.col)]};
}

double match_scale(double p, bool on_log_odds) {
  return on_log_odds ? std::log(p / (1.0 - p)) : p;
}

// Matches one candidate group (the whole panel in pooled mode, a single year
// otherwise). Returns false when the group has no common support so per-year
// callers can record the exclusions and move on.
bool match_group(const PropensityModel& model, const MatchOptions& options,
                 std::vector<Candidate> treated, std::vector<Candidate> controls,
                 SupportInterval& support, std::vector<MatchPair>& pairs,
                 std::vector<Exclusion>& excluded) {
  auto min_score = [](const std::vector<Candidate>& v) {
    double m = std::numeric_limits<double>::infinity();
    for (const Candidate& c : v) m = std::min(m, c.score);
    return m;
  };
  auto max_score = [](const std::vector<Candidate>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (const Candidate& c : v) m = std::max(m, c.score);
    return m;
  };
  support.low = std::max(min_score(treated), min_score(controls));
  support.high = std::min(max_score(treated), max_score(controls));
  if (support.low > support.high) {
    for (const Candidate& t : treated)
      excluded.push_back({to_obs(model, t), "no common support"});
    return false;
  }

  auto on_support = [&](std::vector<Candidate>& v) {
    std::vector<Candidate> kept;
    for (const Candidate& c : v) {
      if (c.score < support.low || c.score > support.high)
        excluded.push_back({to_obs(model, c), "outside common support"});
      else
        kept.push_back(c);
    }
    v = std::move(kept);
  };
  on_support(treated);
  on_support(controls);
  if (controls.empty()) {
    for (const Candidate& t : treated)
      excluded.push_back({to_obs(model, t), "no control observations available"});
    return false;
  }

  // Nearest controls first; ties break toward the lower entity id, then the
  // earlier year. The order is a total order, so matching is deterministic.
  std::vector<char> used(controls.size(), 0);
  for (const Candidate& t : treated) {
    std::vector<std::size_t> order(controls.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const double ts = match_scale(t.score, options.on_log_odds);
    auto distance = [&](std::size_t i) {
      return std::fabs(match_scale(controls[i].score, options.on_log_odds) - ts);
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double da = distance(a);
      const double db = distance(b);
      if (da != db) return da < db;
      if (controls[a].row != controls[b].row) return controls[a].row < controls[b].row;
      return controls[a].col < controls[b].col;
    });
    int taken = 0;
    for (std::size_t i : order) {
      if (taken == options.k) break;
      if (!options.with_replacement && used[i]) continue;
      if (options.caliper && distance(i) > *options.caliper) break;
      pairs.push_back({to_obs(model, t), to_obs(model, controls[i]), t.score,
                       controls[i].score, distance(i)});
      used[i] = 1;
      ++taken;
    }
    if (taken == 0)
      excluded.push_back({to_obs(model, t), options.caliper
                                                ? "no control within caliper"
                                                : "no unused control available"});
  }
  return true;
}

struct GroupStats {
  double mean = 0.0;
  double var = 0.0;
  long n = 0;
};

GroupStats group_stats(const std::vector<double>& values) {
  GroupStats s;
  s.n = static_cast<long>(values.size());
  if (s.n == 0) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    for (double v : values) s.var += (v - s.mean) * (v - s.mean);
    s.var /= static_cast<double>(s.n - 1);
  }
  return s;
}

double standardized_bias(const GroupStats& t, const GroupStats& c, bool& defined) {
  const double pooled = (t.var + c.var) / 2.0;
  defined = t.n > 0 && c.n > 0 && pooled > 0.0;
  if (!defined) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (t.mean - c.mean) / std::sqrt(pooled);
}

double safe_pseudo_r2(const PanelDataset& data, const std::string& treatment,
                      const std::vector<std::string>& covariates,
                      const SampleFilter& filter, bool* failed = nullptr) {
  RegressionSpec spec;
  spec.outcome = treatment;
  spec.regressors = covariates;
  spec.filter = filter;
  try {
    const RegressionResult fit = logit(data, spec);
    if (failed) *failed = false;
    return fit.pseudo_r2;
  } catch (const std::runtime_error&) {
    if (failed) *failed = true;
    return std::numeric_limits<double>::quiet_NaN();
  }
}

BalanceTable balance_table(const PanelDataset& data, const MatchedSample& matched,
                           const std::vector<std::string>& covariates,
                           const MaskMatrix& usable,
                           const std::set<std::pair<std::string, int>>& matched_rows,
                           std::optional<int> year) {
  BalanceTable table;
  table.year = year;
  const Eigen::MatrixXd& treat = data.var(matched.treatment);
  for (const std::string& cov : covariates) {
    const Eigen::MatrixXd& x = data.var(cov);
    std::vector<double> tb, cb, ta, ca;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (!usable(r, c)) continue;
        const int cell_year = data.years[static_cast<std::size_t>(c)];
        if (year && cell_year != *year) continue;
        const bool is_treated = treat(r, c) == 1.0;
        (is_treated ? tb : cb).push_back(x(r, c));
        if (matched_rows.count({data.entities[static_cast<std::size_t>(r)], cell_year}))
          (is_treated ? ta : ca).push_back(x(r, c));
      }
    }
    BalanceRow row;
    row.covariate = cov;
    const GroupStats stb = group_stats(tb);
    const GroupStats scb = group_stats(cb);
    const GroupStats sta = group_stats(ta);
    const GroupStats sca = group_stats(ca);
    row.mean_treated_before = stb.mean;
    row.mean_control_before = scb.mean;
    row.mean_treated_after = sta.mean;
    row.mean_control_after = sca.mean;
    bool before_ok = false;
    bool after_ok = false;
    row.bias_before = standardized_bias(stb, scb, before_ok);
    row.bias_after = standardized_bias(sta, sca, after_ok);
    row.flagged = !before_ok || !after_ok;
    row.reduction_pct =
        (before_ok && after_ok && row.bias_before != 0.0)
            ? 100.0 * (1.0 - std::fabs(row.bias_after) / std::fabs(row.bias_before))
            : std::numeric_limits<double>::quiet_NaN();
    table.rows.push_back(row);
  }

  SampleFilter before_filter = [&data, usable, year](const std::string& entity, int y) {
    if (year && y != *year) return false;
    return usable(data.entity_index(entity), data.year_index(y)) != false;
  };
  SampleFilter after_filter = [before_filter, &matched_rows](const std::string& entity,
                                                             int y) {
    return before_filter(entity, y) && matched_rows.count({entity, y}) > 0;
  };
  table.pseudo_r2_before =
      safe_pseudo_r2(data, matched.treatment, covariates, before_filter);
  table.pseudo_r2_after = safe_pseudo_r2(data, matched.treatment, covariates,
                                         after_filter, &table.after_fit_failed);
  return table;
}

}  // namespace

std::set<std::pair<std::string, int>> MatchedSample::rows() const {
  std::set<std::pair<std::string, int>> out;
  for (const MatchPair& pair : pairs) {
    out.insert({pair.treated.entity, pair.treated.year});
    out.insert({pair.control.entity, pair.control.year});
  }
  return out;
}

PropensityModel fit_propensity(const PanelDataset& data, const std::string& treatment,
                               const std::vector<std::string>& covariates,
                               PropensityMode mode, const SampleFilter& filter) {
  if (covariates.empty())
    throw ValidationError("propensity: at least one matching covariate is required");
  PropensityModel model;
  model.mode = mode;
  model.treatment = treatment;
  model.covariates = covariates;
  model.entities = data.entities;
  model.years = data.years;
  const MaskMatrix usable = complete_cases(data, treatment, covariates, filter);
  model.valid = usable;
  model.scores = Eigen::MatrixXd::Zero(usable.rows(), usable.cols());
  model.treated = MaskMatrix::Constant(usable.rows(), usable.cols(), false);
  const Eigen::MatrixXd& treat = data.var(treatment);
  for (Eigen::Index r = 0; r < usable.rows(); ++r)
    for (Eigen::Index c = 0; c < usable.cols(); ++c)
      if (usable(r, c) && treat(r, c) == 1.0) model.treated(r, c) = true;

  RegressionSpec spec;
  spec.outcome = treatment;
  spec.regressors = covariates;

  if (mode == PropensityMode::pooled) {
    spec.filter = mask_filter(data, usable);
    PropensityFit fit;
    fit.logit = logit(data, spec);
    for (Eigen::Index r = 0; r < usable.rows(); ++r)
      for (Eigen::Index c = 0; c < usable.cols(); ++c)
        if (usable(r, c))
          model.scores(r, c) = fitted_score(fit.logit, covariates, data, r, c);
    model.fits.push_back(std::move(fit));
    return model;
  }

  for (std::size_t ci = 0; ci < data.years.size(); ++ci) {
    const int year = data.years[ci];
    const Eigen::Index c = static_cast<Eigen::Index>(ci);
    if (!usable.col(c).any()) {
      model.skipped_years[year] = "no usable observations";
      continue;
    }
    SampleFilter base = mask_filter(data, usable);
    spec.filter = [base, year](const std::string& entity, int y) {
      return y == year && base(entity, y);
    };
    PropensityFit fit;
    fit.year = year;
    try {
      fit.logit = logit(data, spec);
    } catch (const std::runtime_error& err) {
      model.skipped_years[year] = err.what();
      for (Eigen::Index r = 0; r < usable.rows(); ++r) model.valid(r, c) = false;
      continue;
    }
    for (Eigen::Index r = 0; r < usable.rows(); ++r)
      if (usable(r, c))
        model.scores(r, c) = fitted_score(fit.logit, covariates, data, r, c);
    model.fits.push_back(std::move(fit));
  }
  if (model.fits.empty())
    throw EstimationError("propensity: every per-year fit failed");
  return model;
}

MatchedSample match_nearest(const PropensityModel& model, const MatchOptions& options) {
  if (options.k < 1) throw ValidationError("matching: k must be at least 1");
  if (options.caliper && *options.caliper <= 0.0)
    throw ValidationError("matching: caliper must be positive");
  MatchedSample out;
  out.treatment = model.treatment;
  out.options = options;

  // Year-major observation order so pooled and per-year matching both process
  // treated units in ascending (year, entity) order.
  auto collect = [&](std::optional<Eigen::Index> only_col, std::vector<Candidate>& treated,
                     std::vector<Candidate>& controls) {
    for (Eigen::Index c = 0; c < model.valid.cols(); ++c) {
      if (only_col && c != *only_col) continue;
      for (Eigen::Index r = 0; r < model.valid.rows(); ++r) {
        if (!model.valid(r, c)) continue;
        Candidate cand{r, c, model.scores(r, c)};
        (model.treated(r, c) ? treated : controls).push_back(cand);
      }
    }
  };

  if (options.mode == PropensityMode::pooled) {
    std::vector<Candidate> treated, controls;
    collect({}, treated, controls);
    if (treated.empty() || controls.empty())
      throw ValidationError(
          "matching: need at least one treated and one control observation");
    if (!match_group(model, options, std::move(treated), std::move(controls),
                     out.support, out.pairs, out.excluded))
      throw EstimationError("matching: treated and control scores share no support");
    return out;
  }

  for (std::size_t ci = 0; ci < model.years.size(); ++ci) {
    const Eigen::Index c = static_cast<Eigen::Index>(ci);
    std::vector<Candidate> treated, controls;
    collect(c, treated, controls);
    if (treated.empty()) continue;
    if (controls.empty()) {
      for (const Candidate& t : treated)
        out.excluded.push_back({to_obs(model, t), "no control observations in year"});
      continue;
    }
    SupportInterval support;
    match_group(model, options, std::move(treated), std::move(controls), support,
                out.pairs, out.excluded);
    out.yearly_support[model.years[ci]] = support;
  }
  if (out.pairs.empty())
    throw EstimationError("matching: no year produced any matched pair");
  return out;
}

BalanceReport balance_report(const PanelDataset& data, const MatchedSample& matched,
                             const std::vector<std::string>& covariates) {
  if (matched.pairs.empty())
    throw ValidationError("balance: matched sample is empty");
  const MaskMatrix usable = complete_cases(data, matched.treatment, covariates, {});
  const std::set<std::pair<std::string, int>> rows = matched.rows();
  BalanceReport report;
  report.tables.push_back(balance_table(data, matched, covariates, usable, rows, {}));
  if (matched.options.mode == PropensityMode::per_year) {
    std::set<int> years;
    for (const auto& row : rows) years.insert(row.second);
    for (int year : years)
      report.tables.push_back(
          balance_table(data, matched, covariates, usable, rows, year));
  }
  return report;
}

DensityGrid kernel_density(const std::vector<double>& values, Kernel kernel,
                           std::optional<double> bandwidth) {
  const auto n = static_cast<long>(values.size());
  if (n < 2) throw ValidationError("density: need at least two values");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double lo_val = sorted.front();
  const double hi_val = sorted.back();

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  const double sd = std::sqrt(var);
  if (sd == 0.0) throw ValidationError("density: values have zero variance");

  double h;
  if (bandwidth) {
    if (*bandwidth <= 0.0) throw ValidationError("density: bandwidth must be positive");
    h = *bandwidth;
  } else {
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (spread == 0.0) spread = sd;
    h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  }

  DensityGrid grid;
  grid.kernel = kernel;
  grid.bandwidth = h;
  const int points = 512;
  const double lo = lo_val - 3.0 * h;
  const double hi = hi_val + 3.0 * h;
  grid.x.resize(points);
  grid.density.resize(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i) {
    const double x = lo + step * static_cast<double>(i);
    grid.x(i) = x;
    double density = 0.0;
    for (double v : values) {
      const double u = (x - v) / h;
      if (kernel == Kernel::gaussian)
        density += normal_pdf(u);
      else if (std::fabs(u) <= 1.0)
        density += 0.75 * (1.0 - u * u);
    }
    grid.density(i) = density / (static_cast<double>(n) * h);
  }

  // Renormalize so the reported grid integrates to one exactly; the raw
  // kernel sum loses the tail mass beyond the grid edges.
  double integral = 0.0;
  for (int i = 1; i < points; ++i)
    integral += 0.5 * (grid.density(i) + grid.density(i - 1)) * step;
  grid.density /= integral;
  return grid;
}

RegressionResult psm_did(const PanelDataset& data, const DualTreatment& dual,
                         const MatchedSample& matched,
                         const std::vector<std::string>& controls,
                         const DidOptions& options) {
  const std::set<std::pair<std::string, int>> rows = matched.rows();
  if (rows.empty()) throw ValidationError("psm-did: matched sample is empty");
  DidOptions restricted = options;
  const SampleFilter base = options.filter;
  restricted.filter = [rows, base](const std::string& entity, int year) {
    if (base && !base(entity, year)) return false;
    return rows.count({entity, year}) > 0;
  };
  return did_baseline(data, dual, controls, restricted);
}

}  // namespace paneldid
