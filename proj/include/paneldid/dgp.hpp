#pragma once

// Synthetic panel generator with planted truths: additive entity and year
// effects, a dual-policy treatment assigned either at random or by a logit
// selection rule on entity-level covariates, constant or dynamic treatment
// effects with an optional pre-trend, an optional mediator channel, and
// Gaussian noise. Every planted parameter is echoed back so tests can
// predict the estimates they expect.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "paneldid/did.hpp"
#include "paneldid/panel.hpp"

namespace paneldid {

enum class TreatmentRule { random_staggered, selection_on_covariates };

struct ControlSpec {
  std::string name;
  double mean = 0.0;
  double between_sd = 1.0;  // sd of the per-entity base level
  double within_sd = 0.5;   // sd of the per-cell deviation
  double gamma = 0.0;       // outcome loading
  double selection_beta = 0.0;  // logit loading when selection assigns treatment
  // Loading on covariate * year-index; lets treated and control entities
  // trend apart so a naive DID is biased while matching can fix it.
  double trend_gamma = 0.0;
};

struct TreatmentSpec {
  TreatmentRule rule = TreatmentRule::random_staggered;
  int treated_count = 0;  // random_staggered: exact count; ignored by selection
  double selection_intercept = 0.0;
  // Adoption years drawn uniformly from [adopt_from, adopt_to]; zeros mean
  // "pick a window inside the panel" at generation time.
  int adopt_from = 0;
  int adopt_to = 0;
  // Years between the first and second policy; the dual dummy follows the
  // later one.
  int second_policy_lag = 0;
};

struct EffectSpec {
  double constant = 0.0;
  // Effect at relative time 0, 1, 2, ...; the last entry persists. When
  // non-empty it replaces the constant effect.
  std::vector<double> dynamic_path;
  // Adds slope * rel to treated entities before adoption (rel < 0).
  double pre_trend_slope = 0.0;
};

struct MediatorSpec {
  bool enabled = false;
  std::string name = "m";
  double phi = 0.0;    // treatment -> mediator
  double delta = 0.0;  // mediator -> outcome
  double theta = 0.0;  // direct treatment -> outcome, alongside the channel
  double noise_sd = 1.0;
};

struct DgpConfig {
  int n_entities = 50;
  int n_years = 10;
  int first_year = 2011;
  double entity_fe_sd = 1.0;
  double year_fe_sd = 0.5;
  double noise_sd = 1.0;
  TreatmentSpec treatment;
  EffectSpec effect;
  MediatorSpec mediator;
  std::vector<ControlSpec> controls;
  std::string outcome_name = "y";
  std::uint64_t seed = 0;
};

struct DgpResult {
  PanelDataset data;
  DualTreatment dual;
  DgpConfig config;  // the planted truth, echoed
  std::map<std::string, int> adoption;  // realized effective adoption years
  std::vector<std::string> treated;     // realized treated entities, sorted
};

// Pure function of the config: the same seed always yields bit-identical
// panels regardless of how many other configs are generated concurrently.
DgpResult generate(const DgpConfig& config);

}  // namespace paneldid
