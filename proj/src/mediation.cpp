#include "paneldid/mediation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "paneldid/errors.hpp"

namespace paneldid {

namespace {

std::string cell_ref(const PanelDataset& data, Eigen::Index r, Eigen::Index c) {
  return "(\"" + data.entities[static_cast<std::size_t>(r)] + "\", " +
         std::to_string(data.years[static_cast<std::size_t>(c)]) + ")";
}

// Elementwise a/b with masks combined; a zero denominator in an observed
// cell is a hard error because every mediator is a ratio by construction.
void append_ratio(PanelDataset& data, const std::string& name,
                  const Eigen::MatrixXd& num, const MaskMatrix& num_mask,
                  const std::string& denom_name) {
  const Eigen::MatrixXd& den = data.var(denom_name);
  const MaskMatrix& den_mask = data.mask(denom_name);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(num.rows(), num.cols());
  MaskMatrix holes = num_mask || den_mask;
  for (Eigen::Index r = 0; r < num.rows(); ++r) {
    for (Eigen::Index c = 0; c < num.cols(); ++c) {
      if (holes(r, c)) continue;
      if (den(r, c) == 0.0)
        throw ValidationError("mediators: zero denominator for \"" + name + "\" at " +
                              cell_ref(data, r, c));
      out(r, c) = num(r, c) / den(r, c);
    }
  }
  data.add_variable(name, std::move(out), std::move(holes));
}

bool significant(const Coefficient& coef, double level) {
  return coef.p_value < level;
}

}  // namespace

double mediation_share(double phi, double delta, double theta) {
  return phi * delta / (phi * delta + theta);
}

MediationResult mediation_analysis(const PanelDataset& data, const DualTreatment& dual,
                                   const std::string& mediator,
                                   const std::vector<std::string>& controls,
                                   const MediationOptions& options) {
  MediationResult result;
  result.significance_level = options.significance_level;

  DidOptions mediator_eq;
  mediator_eq.outcome = mediator;
  mediator_eq.se_type = options.se_type;
  mediator_eq.effects = options.effects;
  mediator_eq.filter = options.filter;
  result.mediator_model = did_baseline(data, dual, controls, mediator_eq);

  DidOptions outcome_eq = mediator_eq;
  outcome_eq.outcome = options.outcome;
  std::vector<std::string> with_mediator{mediator};
  with_mediator.insert(with_mediator.end(), controls.begin(), controls.end());
  result.outcome_model = did_baseline(data, dual, with_mediator, outcome_eq);

  const std::string& treat = dual.combined_name;
  if (!result.mediator_model.has_coef(treat) || !result.outcome_model.has_coef(treat))
    throw EstimationError(
        "mediation: the treatment dummy was dropped as collinear; nothing to decompose");
  if (!result.outcome_model.has_coef(mediator))
    throw EstimationError("mediation: mediator \"" + mediator +
                          "\" is collinear with the treatment dummy");

  result.phi = result.mediator_model.coef(treat);
  result.theta = result.outcome_model.coef(treat);
  result.delta = result.outcome_model.coef(mediator);

  const bool phi_sig = significant(result.phi, options.significance_level);
  const bool delta_sig = significant(result.delta, options.significance_level);
  const bool theta_sig = significant(result.theta, options.significance_level);
  result.share_valid = phi_sig && delta_sig;
  result.share = result.share_valid
                     ? mediation_share(result.phi.estimate, result.delta.estimate,
                                       result.theta.estimate)
                     : std::numeric_limits<double>::quiet_NaN();
  if (!result.share_valid) {
    result.verdict = "no mediation";
  } else if (!theta_sig) {
    result.verdict = "full mediation";
  } else {
    const double indirect = result.phi.estimate * result.delta.estimate;
    result.verdict = (indirect >= 0.0) == (result.theta.estimate >= 0.0)
                         ? "partial mediation"
                         : "competitive mediation";
  }
  return result;
}

PanelDataset mediator_construction(const PanelDataset& data,
                                   const MediatorSources& sources) {
  PanelDataset out = data;

  append_ratio(out, "vcpe", out.var(sources.financial), out.mask(sources.financial),
               sources.gdp);

  if (sources.talent_sectors.empty())
    throw ValidationError("mediators: talent sectors list is empty");
  Eigen::MatrixXd sector_sum = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(out.entities.size()),
      static_cast<Eigen::Index>(out.years.size()));
  MaskMatrix sector_mask =
      MaskMatrix::Constant(sector_sum.rows(), sector_sum.cols(), false);
  for (const std::string& sector : sources.talent_sectors) {
    sector_sum += out.var(sector);
    sector_mask = sector_mask || out.mask(sector);
  }
  append_ratio(out, "talents", sector_sum, sector_mask, sources.total_employment);

  append_ratio(out, "budget_share_tmp", out.var(sources.scitech_budget),
               out.mask(sources.scitech_budget), sources.total_budget);
  append_ratio(out, "per_capita_patents_tmp", out.var(sources.patents),
               out.mask(sources.patents), sources.population);

  const Eigen::MatrixXd& per_capita = out.var("per_capita_patents_tmp");
  const MaskMatrix& pc_mask = out.mask("per_capita_patents_tmp");
  double mean = 0.0;
  long n = 0;
  for (Eigen::Index r = 0; r < per_capita.rows(); ++r)
    for (Eigen::Index c = 0; c < per_capita.cols(); ++c)
      if (!pc_mask(r, c)) {
        mean += per_capita(r, c);
        ++n;
      }
  if (n < 2)
    throw ValidationError("mediators: too few observed per-capita patent cells");
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (Eigen::Index r = 0; r < per_capita.rows(); ++r)
    for (Eigen::Index c = 0; c < per_capita.cols(); ++c)
      if (!pc_mask(r, c)) var += (per_capita(r, c) - mean) * (per_capita(r, c) - mean);
  var /= static_cast<double>(n - 1);
  if (var == 0.0)
    throw ValidationError(
        "mediators: per-capita patents have zero variance; cannot standardize");
  const double sd = std::sqrt(var);

  const Eigen::MatrixXd& budget_share = out.var("budget_share_tmp");
  const MaskMatrix& bs_mask = out.mask("budget_share_tmp");
  Eigen::MatrixXd technology = Eigen::MatrixXd::Zero(per_capita.rows(), per_capita.cols());
  MaskMatrix tech_mask = bs_mask || pc_mask;
  for (Eigen::Index r = 0; r < per_capita.rows(); ++r)
    for (Eigen::Index c = 0; c < per_capita.cols(); ++c)
      if (!tech_mask(r, c))
        technology(r, c) =
            0.5 * budget_share(r, c) + 0.5 * (per_capita(r, c) - mean) / sd;

  // The two intermediate ratios are scaffolding, not outputs.
  PanelDataset final_out = data;
  final_out.add_variable("vcpe", out.var("vcpe"), out.mask("vcpe"));
  final_out.add_variable("talents", out.var("talents"), out.mask("talents"));
  final_out.add_variable("technology", std::move(technology), std::move(tech_mask));
  return final_out;
}

}  // namespace paneldid
