#include "paneldid/did.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "paneldid/errors.hpp"
#include "paneldid/stats.hpp"

namespace paneldid {

namespace {

void check_schedule(const PanelDataset& data, const TreatmentSchedule& schedule) {
  if (schedule.policy.empty())
    throw ValidationError("treatment: schedule has an empty policy name");
  for (const auto& [entity, year] : schedule.adoption) {
    const auto it = std::lower_bound(data.entities.begin(), data.entities.end(), entity);
    if (it == data.entities.end() || *it != entity)
      throw ValidationError("treatment: schedule for \"" + schedule.policy +
                            "\" names unknown entity \"" + entity + "\"");
    if (year > data.years.back())
      throw ValidationError("treatment: adoption year " + std::to_string(year) +
                            " for entity \"" + entity + "\" lies after the panel ends (" +
                            std::to_string(data.years.back()) + ")");
  }
}

Eigen::MatrixXd schedule_dummies(const PanelDataset& data,
                                 const TreatmentSchedule& schedule) {
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(data.n_entities(), data.n_years());
  for (const auto& [entity, year] : schedule.adoption) {
    const Eigen::Index r = data.entity_index(entity);
    for (Eigen::Index c = 0; c < data.n_years(); ++c)
      if (data.years[static_cast<std::size_t>(c)] >= year) cells(r, c) = 1.0;
  }
  return cells;
}

std::string bin_label(int clamped_rel) {
  if (clamped_rel < 0) return "Before_" + std::to_string(-clamped_rel - 1);
  if (clamped_rel == 0) return "Current";
  return "After_" + std::to_string(clamped_rel - 1);
}

}  // namespace

std::optional<int> DualTreatment::effective_adoption(const std::string& entity) const {
  const auto a = first.adoption.find(entity);
  const auto b = second.adoption.find(entity);
  if (a == first.adoption.end() || b == second.adoption.end()) return std::nullopt;
  return std::max(a->second, b->second);
}

PanelDataset build_treatment_dummies(const PanelDataset& data, const DualTreatment& dual) {
  check_schedule(data, dual.first);
  check_schedule(data, dual.second);
  if (dual.combined_name.empty())
    throw ValidationError("treatment: combined dummy name is empty");

  const MaskMatrix no_holes =
      MaskMatrix::Constant(data.n_entities(), data.n_years(), false);
  PanelDataset out = data;
  const Eigen::MatrixXd first_cells = schedule_dummies(data, dual.first);
  const Eigen::MatrixXd second_cells = schedule_dummies(data, dual.second);
  out.add_variable(dual.first.policy + "_treat", first_cells, no_holes);
  out.add_variable(dual.second.policy + "_treat", second_cells, no_holes);
  out.add_variable(dual.combined_name, first_cells.cwiseProduct(second_cells), no_holes);
  return out;
}

RegressionResult did_baseline(const PanelDataset& data, const DualTreatment& dual,
                              const std::vector<std::string>& controls,
                              const DidOptions& options) {
  const PanelDataset* panel = &data;
  PanelDataset with_dummies;
  if (!data.has_variable(dual.combined_name)) {
    with_dummies = build_treatment_dummies(data, dual);
    panel = &with_dummies;
  }
  RegressionSpec spec;
  spec.outcome = options.outcome;
  spec.regressors.push_back(dual.combined_name);
  spec.regressors.insert(spec.regressors.end(), controls.begin(), controls.end());
  spec.effects = options.effects;
  spec.se_type = options.se_type;
  spec.filter = options.filter;
  return ols(*panel, spec);
}

EventStudyResult event_study(const PanelDataset& data, const DualTreatment& dual,
                             const EventWindow& window,
                             const std::vector<std::string>& controls,
                             const DidOptions& options, int reference_rel) {
  if (window.pre < 0 || window.post < 0)
    throw ValidationError("event_study: window sides must be non-negative");
  const int lo = -(window.pre + 1);
  const int hi = window.post + 1;
  if (reference_rel < lo || reference_rel > hi)
    throw ValidationError("event_study: reference bin " + std::to_string(reference_rel) +
                          " lies outside the window");

  // Effective adoption year per entity row; nullopt rows stay all-zero.
  std::vector<std::optional<int>> adoption(static_cast<std::size_t>(data.n_entities()));
  long treated_entities = 0;
  long always_treated = 0;
  for (Eigen::Index r = 0; r < data.n_entities(); ++r) {
    adoption[static_cast<std::size_t>(r)] =
        dual.effective_adoption(data.entities[static_cast<std::size_t>(r)]);
    if (adoption[static_cast<std::size_t>(r)]) {
      ++treated_entities;
      if (*adoption[static_cast<std::size_t>(r)] <= data.years.front()) ++always_treated;
    }
  }
  if (treated_entities == 0) throw ValidationError("event_study: no treated entities");

  // One dummy matrix per clamped relative time; label order is time order.
  PanelDataset panel = data;
  std::vector<EventBin> bins;
  std::vector<std::string> bin_regressors;
  const MaskMatrix no_holes =
      MaskMatrix::Constant(data.n_entities(), data.n_years(), false);
  for (int b = lo; b <= hi; ++b) {
    EventBin bin;
    bin.rel = b;
    bin.label = bin_label(b);
    Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(data.n_entities(), data.n_years());
    for (Eigen::Index r = 0; r < data.n_entities(); ++r) {
      if (!adoption[static_cast<std::size_t>(r)]) continue;
      for (Eigen::Index c = 0; c < data.n_years(); ++c) {
        const int rel =
            data.years[static_cast<std::size_t>(c)] - *adoption[static_cast<std::size_t>(r)];
        const int clamped = std::clamp(rel, lo, hi);
        if (clamped == b) cells(r, c) = 1.0;
      }
    }
    bin.n_obs = static_cast<long>(cells.sum() + 0.5);
    bin.reference = (b == reference_rel);
    bin.dropped = (bin.n_obs == 0 && !bin.reference);
    if (!bin.reference && !bin.dropped) {
      panel.add_variable(bin.label, cells, no_holes);
      bin_regressors.push_back(bin.label);
    }
    bins.push_back(std::move(bin));
  }

  RegressionSpec spec;
  spec.outcome = options.outcome;
  spec.regressors = bin_regressors;
  spec.regressors.insert(spec.regressors.end(), controls.begin(), controls.end());
  spec.effects = options.effects;
  spec.se_type = options.se_type;
  spec.filter = options.filter;

  EventStudyResult result;
  result.regression = ols(panel, spec);
  result.always_treated = always_treated;

  const double ci_dof = result.regression.se_type == SeType::cluster_by_entity
                            ? static_cast<double>(result.regression.n_clusters - 1)
                            : result.regression.dof_resid;
  const double t_crit = student_t_quantile(0.975, ci_dof);
  for (EventBin& bin : bins) {
    if (bin.reference) {
      result.reference_label = bin.label;
      continue;
    }
    if (bin.dropped) continue;
    if (!result.regression.has_coef(bin.label)) {
      // Absorbed by fixed effects (no within variation); flag as dropped.
      bin.dropped = true;
      continue;
    }
    const Coefficient& c = result.regression.coef(bin.label);
    bin.coefficient = c.estimate;
    bin.se = c.se;
    bin.p_value = c.p_value;
    bin.ci_low = c.estimate - t_crit * c.se;
    bin.ci_high = c.estimate + t_crit * c.se;
  }
  result.bins = std::move(bins);
  return result;
}

PanelDataset trim_sample(const PanelDataset& data, const std::vector<int>& drop_years) {
  const std::set<int> dropped(drop_years.begin(), drop_years.end());
  std::vector<int> kept_years;
  std::vector<Eigen::Index> kept_cols;
  for (Eigen::Index c = 0; c < data.n_years(); ++c) {
    const int year = data.years[static_cast<std::size_t>(c)];
    if (!dropped.count(year)) {
      kept_years.push_back(year);
      kept_cols.push_back(c);
    }
  }
  if (kept_years.empty()) throw ValidationError("trim_sample: dropping every year");
  if (kept_years.size() < 2)
    throw ValidationError("trim_sample: fewer than two years would remain");
  for (std::size_t i = 1; i < kept_years.size(); ++i)
    if (kept_years[i] != kept_years[i - 1] + 1)
      throw ValidationError(
          "trim_sample: remaining years are not consecutive; the panel would be "
          "unbalanced");
  if (kept_years.size() == data.years.size()) return data;

  PanelDataset out;
  out.entities = data.entities;
  out.years = kept_years;
  const auto ny = static_cast<Eigen::Index>(kept_cols.size());
  for (const std::string& name : data.variable_order) {
    const Eigen::MatrixXd& src = data.values.at(name);
    const MaskMatrix& src_mask = data.missing.at(name);
    Eigen::MatrixXd cells(data.n_entities(), ny);
    MaskMatrix holes(data.n_entities(), ny);
    for (Eigen::Index j = 0; j < ny; ++j) {
      cells.col(j) = src.col(kept_cols[static_cast<std::size_t>(j)]);
      holes.col(j) = src_mask.col(kept_cols[static_cast<std::size_t>(j)]);
    }
    out.add_variable(name, std::move(cells), std::move(holes));
  }
  return out;
}

}  // namespace paneldid
