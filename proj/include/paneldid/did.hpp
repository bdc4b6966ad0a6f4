#pragma once

// Treatment-schedule algebra and the staggered difference-in-differences
// layer: policy dummies, the dual-policy interaction, the baseline two-way
// fixed-effects estimate, the relative-time event study, and year trimming.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paneldid/panel.hpp"
#include "paneldid/regression.hpp"

namespace paneldid {

struct TreatmentSchedule {
  std::string policy;                  // dummy column is named "<policy>_treat"
  std::map<std::string, int> adoption; // entity -> adoption year; absent = never
};

// Two staggered policies; an entity counts as dual-treated from the first
// year it holds both, so the effective adoption year is the later of the two.
struct DualTreatment {
  TreatmentSchedule first;
  TreatmentSchedule second;
  std::string combined_name = "dual_treat";

  std::optional<int> effective_adoption(const std::string& entity) const;
};

// Appends "<policy>_treat" for each schedule plus the combined dummy, all
// 0/1 and non-decreasing in time (treatment is absorbing).
PanelDataset build_treatment_dummies(const PanelDataset& data, const DualTreatment& dual);

struct DidOptions {
  std::string outcome;
  SeType se_type = SeType::cluster_by_entity;
  FeSpec effects{true, true};
  SampleFilter filter;
};

// Two-way fixed-effects regression of the outcome on the combined treatment
// dummy plus controls; the dummy's coefficient is the treatment effect.
RegressionResult did_baseline(const PanelDataset& data, const DualTreatment& dual,
                              const std::vector<std::string>& controls,
                              const DidOptions& options);

struct EventWindow {
  int pre = 2;
  int post = 6;
};

struct EventBin {
  std::string label;  // Before_<i>, Current, After_<i>
  int rel = 0;        // clamped relative time this bin represents
  double coefficient = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  long n_obs = 0;
  bool reference = false;
  bool dropped = false;  // no observations fell in this bin
};

struct EventStudyResult {
  std::vector<EventBin> bins;  // earliest bin first
  std::string reference_label;
  long always_treated = 0;  // entities treated from the first panel year on
  RegressionResult regression;
};

// Relative time rel = year - effective adoption. Bins run Before_pre ...
// Before_0, Current, After_0 ... After_post where Before_i stands for
// rel = -(i+1) and After_i for rel = +(i+1); observations beyond the window
// pool into the endpoint bins. The reference bin (default rel = -1, label
// Before_0) is omitted from the regression and reported with coefficient 0.
// Bin labels double as regressor names, so panel variables may not share
// them.
EventStudyResult event_study(const PanelDataset& data, const DualTreatment& dual,
                             const EventWindow& window,
                             const std::vector<std::string>& controls,
                             const DidOptions& options, int reference_rel = -1);

// Removes the given years; the remaining years must stay consecutive so the
// result is still a balanced panel.
PanelDataset trim_sample(const PanelDataset& data, const std::vector<int>& drop_years);

}  // namespace paneldid
