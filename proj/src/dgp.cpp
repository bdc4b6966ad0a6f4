#include "paneldid/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "paneldid/errors.hpp"
#include "paneldid/rng.hpp"

namespace paneldid {

namespace {

void check_config(const DgpConfig& config) {
  if (config.n_entities < 2)
    throw ValidationError("dgp: need at least two entities");
  if (config.n_years < 2) throw ValidationError("dgp: need at least two years");
  if (config.entity_fe_sd < 0.0 || config.year_fe_sd < 0.0 || config.noise_sd < 0.0 ||
      config.mediator.noise_sd < 0.0)
    throw ValidationError("dgp: standard deviations must be non-negative");
  if (config.treatment.rule == TreatmentRule::random_staggered &&
      (config.treatment.treated_count < 0 ||
       config.treatment.treated_count > config.n_entities))
    throw ValidationError("dgp: treated count must lie in [0, n_entities]");
  if (config.treatment.second_policy_lag < 0)
    throw ValidationError("dgp: second policy lag must be non-negative");
  for (const ControlSpec& control : config.controls) {
    if (control.name.empty()) throw ValidationError("dgp: control name is empty");
    if (control.between_sd < 0.0 || control.within_sd < 0.0)
      throw ValidationError("dgp: control sds must be non-negative");
  }
}

double effect_at(const EffectSpec& effect, int rel) {
  if (rel < 0) return effect.pre_trend_slope * static_cast<double>(rel);
  if (effect.dynamic_path.empty()) return effect.constant;
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(rel),
                                         effect.dynamic_path.size() - 1);
  return effect.dynamic_path[idx];
}

}  // namespace

DgpResult generate(const DgpConfig& config) {
  check_config(config);
  Rng rng(config.seed);

  const int ne = config.n_entities;
  const int ny = config.n_years;
  DgpResult result;
  result.config = config;

  std::vector<std::string> entities;
  int width = 1;
  for (int v = ne - 1; v >= 10; v /= 10) ++width;
  for (int i = 0; i < ne; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "E%0*d", width, i);
    entities.push_back(buf);
  }
  std::vector<int> years;
  for (int t = 0; t < ny; ++t) years.push_back(config.first_year + t);

  std::vector<double> entity_fe(static_cast<std::size_t>(ne));
  for (double& fe : entity_fe) fe = rng.normal(0.0, config.entity_fe_sd);
  std::vector<double> year_fe(static_cast<std::size_t>(ny));
  for (double& fe : year_fe) fe = rng.normal(0.0, config.year_fe_sd);

  // Per-entity base levels first, then per-cell deviations, one control at a
  // time, so the draw order is stable.
  const auto n_controls = config.controls.size();
  std::vector<std::vector<double>> bases(n_controls);
  std::vector<Eigen::MatrixXd> control_cells(n_controls);
  for (std::size_t j = 0; j < n_controls; ++j) {
    const ControlSpec& spec = config.controls[j];
    bases[j].resize(static_cast<std::size_t>(ne));
    for (double& base : bases[j]) base = rng.normal(spec.mean, spec.between_sd);
    control_cells[j].resize(ne, ny);
    for (int r = 0; r < ne; ++r)
      for (int c = 0; c < ny; ++c)
        control_cells[j](r, c) =
            bases[j][static_cast<std::size_t>(r)] + rng.normal(0.0, spec.within_sd);
  }

  const int adopt_from = config.treatment.adopt_from != 0
                             ? config.treatment.adopt_from
                             : config.first_year + std::min(2, ny - 1);
  const int adopt_to = config.treatment.adopt_to != 0 ? config.treatment.adopt_to
                                                      : config.first_year + ny - 2;
  if (adopt_from > adopt_to || adopt_from < config.first_year ||
      adopt_to > config.first_year + ny - 1)
    throw ValidationError("dgp: adoption window falls outside the panel years");

  std::vector<int> treated_idx;
  if (config.treatment.rule == TreatmentRule::random_staggered) {
    treated_idx = rng.sample_without_replacement(ne, config.treatment.treated_count);
    std::sort(treated_idx.begin(), treated_idx.end());
  } else {
    for (int i = 0; i < ne; ++i) {
      double z = config.treatment.selection_intercept;
      for (std::size_t j = 0; j < n_controls; ++j)
        z += config.controls[j].selection_beta * bases[j][static_cast<std::size_t>(i)];
      if (rng.uniform() < 1.0 / (1.0 + std::exp(-z))) treated_idx.push_back(i);
    }
  }

  result.dual.first.policy = "first_pilot";
  result.dual.second.policy = "second_pilot";
  const int last_year = config.first_year + ny - 1;
  for (int idx : treated_idx) {
    const std::string& entity = entities[static_cast<std::size_t>(idx)];
    const int first = rng.uniform_int(adopt_from, adopt_to);
    const int second = std::min(first + config.treatment.second_policy_lag, last_year);
    result.dual.first.adoption[entity] = first;
    result.dual.second.adoption[entity] = second;
    result.adoption[entity] = std::max(first, second);
    result.treated.push_back(entity);
  }

  Eigen::MatrixXd mediator(ne, ny);
  if (config.mediator.enabled) {
    std::vector<double> mediator_fe(static_cast<std::size_t>(ne));
    for (double& fe : mediator_fe) fe = rng.normal(0.0, config.entity_fe_sd);
    for (int r = 0; r < ne; ++r) {
      const auto adopted = result.adoption.find(entities[static_cast<std::size_t>(r)]);
      for (int c = 0; c < ny; ++c) {
        const bool on = adopted != result.adoption.end() &&
                        config.first_year + c >= adopted->second;
        mediator(r, c) = mediator_fe[static_cast<std::size_t>(r)] +
                         config.mediator.phi * (on ? 1.0 : 0.0) +
                         rng.normal(0.0, config.mediator.noise_sd);
      }
    }
  }

  Eigen::MatrixXd outcome(ne, ny);
  for (int r = 0; r < ne; ++r) {
    const auto adopted = result.adoption.find(entities[static_cast<std::size_t>(r)]);
    for (int c = 0; c < ny; ++c) {
      double value = entity_fe[static_cast<std::size_t>(r)] +
                     year_fe[static_cast<std::size_t>(c)];
      if (adopted != result.adoption.end()) {
        const int rel = config.first_year + c - adopted->second;
        value += effect_at(config.effect, rel);
        if (config.mediator.enabled && rel >= 0) value += config.mediator.theta;
      }
      for (std::size_t j = 0; j < n_controls; ++j) {
        value += config.controls[j].gamma * control_cells[j](r, c);
        value += config.controls[j].trend_gamma * control_cells[j](r, c) *
                 static_cast<double>(c);
      }
      if (config.mediator.enabled) value += config.mediator.delta * mediator(r, c);
      outcome(r, c) = value + rng.normal(0.0, config.noise_sd);
    }
  }

  PanelDataset data;
  data.entities = entities;
  data.years = years;
  const MaskMatrix none = MaskMatrix::Constant(ne, ny, false);
  data.add_variable(config.outcome_name, std::move(outcome), none);
  for (std::size_t j = 0; j < n_controls; ++j)
    data.add_variable(config.controls[j].name, std::move(control_cells[j]), none);
  if (config.mediator.enabled)
    data.add_variable(config.mediator.name, std::move(mediator), none);
  result.data = std::move(data);
  return result;
}

}  // namespace paneldid
