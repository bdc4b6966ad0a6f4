#pragma once

// Mediation decomposition of the treatment effect: a first regression of the
// mediator on the treatment dummy gives phi, a second regression of the
// outcome on both gives the direct effect theta and the mediator coefficient
// delta, and phi*delta/(phi*delta + theta) is the share of the total effect
// flowing through the mediator. Also builds the three mediator variables
// (credit depth, talent pool, technology effort) from their source columns.

#include <string>
#include <vector>

#include "paneldid/did.hpp"
#include "paneldid/panel.hpp"
#include "paneldid/regression.hpp"

namespace paneldid {

struct MediationOptions {
  std::string outcome;
  SeType se_type = SeType::cluster_by_entity;
  FeSpec effects{true, true};
  SampleFilter filter;
  double significance_level = 0.10;
};

struct MediationResult {
  RegressionResult mediator_model;  // mediator ~ treatment (+ controls)
  RegressionResult outcome_model;   // outcome ~ treatment + mediator (+ controls)
  Coefficient phi;                  // treatment effect on the mediator
  Coefficient theta;                // direct treatment effect on the outcome
  Coefficient delta;                // mediator effect on the outcome
  // phi*delta/(phi*delta + theta); meaningful only when share_valid.
  double share = 0.0;
  bool share_valid = false;
  // "partial mediation" when phi, delta, and theta are all significant and
  // theta shares the sign of phi*delta; "full mediation" when phi and delta
  // are significant but theta is not; "competitive mediation" when theta is
  // significant with the opposite sign; "no mediation" otherwise.
  std::string verdict;
  double significance_level = 0.10;
};

double mediation_share(double phi, double delta, double theta);

MediationResult mediation_analysis(const PanelDataset& data, const DualTreatment& dual,
                                   const std::string& mediator,
                                   const std::vector<std::string>& controls,
                                   const MediationOptions& options);

struct MediatorSources {
  std::string financial = "financial_institutions";
  std::string gdp = "gdp";
  // Employment headcounts for the four talent-intensive sectors, and the
  // total they are taken as a share of.
  std::vector<std::string> talent_sectors = {"employ_information", "employ_science",
                                             "employ_education", "employ_finance"};
  std::string total_employment = "employ_total";
  std::string scitech_budget = "scitech_budget";
  std::string total_budget = "total_budget";
  std::string patents = "patent_grants";
  std::string population = "population";
};

// Appends vcpe = financial/gdp, talents = sector employment share, and
// technology = 0.5 * budget share + 0.5 * z-scored per-capita patents.
PanelDataset mediator_construction(const PanelDataset& data,
                                   const MediatorSources& sources = {});

}  // namespace paneldid
