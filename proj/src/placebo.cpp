#include "paneldid/placebo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "paneldid/errors.hpp"
#include "paneldid/rng.hpp"

namespace paneldid {

namespace {

// A pseudo policy adopted by the drawn entities in the drawn years. Both
// schedules carry the same map so the combined dummy follows it directly.
DualTreatment pseudo_policy(const std::map<std::string, int>& adoption) {
  DualTreatment dual;
  dual.first = {"placebo_a", adoption};
  dual.second = {"placebo_b", adoption};
  dual.combined_name = "placebo_treat";
  return dual;
}

}  // namespace

PlaceboResult placebo_test(const PanelDataset& data, const DualTreatment& real_dual,
                           const std::vector<std::string>& controls,
                           const DidOptions& options, const PlaceboConfig& config) {
  if (config.replications < 1)
    throw ValidationError("placebo: replications must be at least 1");
  if (config.threads < 1)
    throw ValidationError("placebo: thread count must be at least 1");
  const int n_entities = static_cast<int>(data.entities.size());

  std::vector<int> real_years;
  for (const std::string& entity : data.entities)
    if (const auto year = real_dual.effective_adoption(entity))
      real_years.push_back(*year);

  int treated_count =
      config.treated_count ? *config.treated_count : static_cast<int>(real_years.size());
  if (treated_count < 1)
    throw ValidationError("placebo: treated count must be at least 1");
  if (treated_count > n_entities)
    throw ValidationError("placebo: treated count exceeds the entity count");
  if (config.year_rule == PseudoYearRule::resample && real_years.empty())
    throw ValidationError(
        "placebo: resampling adoption years requires a treated real policy");

  PlaceboResult result;
  const RegressionResult actual = did_baseline(data, real_dual, controls, options);
  result.actual_beta = actual.coef(real_dual.combined_name).estimate;
  result.actual_p = actual.coef(real_dual.combined_name).p_value;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.betas.assign(static_cast<std::size_t>(config.replications), nan);
  result.p_values.assign(static_cast<std::size_t>(config.replications), nan);

  const int first_year = data.years.front();
  const int last_year = data.years.back();

  const auto run_replication = [&](long rep) {
    Rng rng(Rng::substream(config.seed, static_cast<std::uint64_t>(rep)));
    for (int attempt = 0; attempt <= config.max_redraws; ++attempt) {
      std::map<std::string, int> adoption;
      for (int idx : rng.sample_without_replacement(n_entities, treated_count)) {
        const std::string& entity = data.entities[static_cast<std::size_t>(idx)];
        adoption[entity] =
            config.year_rule == PseudoYearRule::uniform
                ? rng.uniform_int(first_year, last_year)
                : real_years[static_cast<std::size_t>(rng.below(real_years.size()))];
      }
      const DualTreatment pseudo = pseudo_policy(adoption);
      try {
        const RegressionResult fit = did_baseline(data, pseudo, controls, options);
        if (!fit.has_coef(pseudo.combined_name)) continue;  // dummy dropped, redraw
        result.betas[static_cast<std::size_t>(rep)] =
            fit.coef(pseudo.combined_name).estimate;
        result.p_values[static_cast<std::size_t>(rep)] =
            fit.coef(pseudo.combined_name).p_value;
        return;
      } catch (const std::runtime_error&) {
        // degenerate pseudo-design, redraw
      }
    }
  };

  // Each replication owns its slot and its seed, so splitting them across
  // threads cannot change any value, only the wall-clock time.
  const long workers = std::min<long>(config.threads, config.replications);
  if (workers <= 1) {
    for (long rep = 0; rep < config.replications; ++rep) run_replication(rep);
  } else {
    std::vector<std::thread> pool;
    for (long w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (long rep = w; rep < config.replications; rep += workers) run_replication(rep);
      });
    for (auto& t : pool) t.join();
  }
  for (long rep = 0; rep < config.replications; ++rep)
    if (std::isnan(result.betas[static_cast<std::size_t>(rep)]))
      result.flagged.push_back(rep);

  std::vector<double> valid;
  for (double b : result.betas)
    if (!std::isnan(b)) valid.push_back(b);
  for (double b : valid)
    if (b < result.actual_beta) ++result.rank;
  result.percentile =
      100.0 * static_cast<double>(result.rank) / static_cast<double>(config.replications);
  if (valid.size() >= 2) {
    try {
      result.density = kernel_density(valid, Kernel::gaussian);
    } catch (const std::runtime_error&) {
      // zero-variance betas leave the grid empty
    }
  }
  return result;
}

}  // namespace paneldid
