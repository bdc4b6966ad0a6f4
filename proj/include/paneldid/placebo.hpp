#pragma once

// Randomization inference for the baseline DID: each replication assigns a
// pseudo policy to randomly drawn entities with randomly drawn adoption
// years, reruns the baseline, and records the placebo coefficient. The real
// estimate is then ranked against the placebo distribution.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "paneldid/did.hpp"
#include "paneldid/panel.hpp"
#include "paneldid/psm.hpp"

namespace paneldid {

enum class PseudoYearRule {
  uniform,   // each pseudo adoption year uniform over the panel's year range
  resample,  // drawn from the real adoption-year distribution
};

struct PlaceboConfig {
  long replications = 500;
  // Entities drawn as pseudo-treated per replication; defaults to the real
  // treated count.
  std::optional<int> treated_count;
  std::uint64_t seed = 0;
  PseudoYearRule year_rule = PseudoYearRule::uniform;
  // Degenerate pseudo-designs (no identifying variation) are redrawn up to
  // this many times, then the replication is flagged and left as NaN.
  int max_redraws = 10;
  // Worker threads for the replication loop. Each replication seeds its own
  // substream and writes a preallocated slot, so results are bit-identical
  // for any thread count.
  int threads = 1;
};

struct PlaceboResult {
  std::vector<double> betas;     // one per replication, NaN when flagged
  std::vector<double> p_values;  // aligned with betas
  std::vector<long> flagged;     // replications that exhausted their redraws
  DensityGrid density;           // of the non-flagged betas; empty under 2 draws
  double actual_beta = 0.0;
  double actual_p = 1.0;
  long rank = 0;  // placebo betas strictly below the actual estimate
  double percentile = 0.0;
};

// Every replication derives its own substream from config.seed, so the full
// set of pseudo-designs is reproducible regardless of execution order.
PlaceboResult placebo_test(const PanelDataset& data, const DualTreatment& real_dual,
                           const std::vector<std::string>& controls,
                           const DidOptions& options, const PlaceboConfig& config);

}  // namespace paneldid
