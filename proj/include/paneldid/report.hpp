#pragma once

// Artifact rendering: CSV and plain-text tables for every result type, a
// content hash, and the run manifest. Every number is written through one
// locale-independent round-trip formatter, so rendering the same result
// twice yields byte-identical files.

#include <cstdint>
#include <string>
#include <vector>

#include "paneldid/did.hpp"
#include "paneldid/index.hpp"
#include "paneldid/mediation.hpp"
#include "paneldid/placebo.hpp"
#include "paneldid/psm.hpp"
#include "paneldid/regression.hpp"

namespace paneldid {

// Shortest decimal form that parses back to the exact double; "nan" and
// "inf" pass through as spelled by the classic locale.
std::string format_number(double v);

// Fixed significant digits for table display; CSV artifacts keep full
// precision via format_number.
std::string format_number_prec(double v, int digits);

// *** / ** / * at the 1, 5, and 10 percent levels.
std::string significance_stars(double p_value);

std::uint64_t fnv1a64(const std::string& bytes);

// "fnv1a64:" followed by sixteen lowercase hex digits.
std::string content_hash(const std::string& bytes);

std::string render_regression_csv(const RegressionResult& result);
std::string render_regression_table(const RegressionResult& result,
                                    const std::string& title);
std::string render_event_study_csv(const EventStudyResult& result);
std::string render_index_weights_csv(const IndexWeights& weights);
std::string render_matched_sample_csv(const MatchedSample& matched);
std::string render_exclusions_csv(const MatchedSample& matched);
std::string render_balance_csv(const BalanceReport& report);
std::string render_balance_table(const BalanceReport& report);
std::string render_density_csv(const DensityGrid& grid);
std::string render_placebo_csv(const PlaceboResult& result);
std::string render_mediation_table(const MediationResult& result,
                                   const std::string& mediator);

struct ManifestEntry {
  std::string path;
  std::uint64_t bytes = 0;
  std::string hash;
};

// Collects artifacts for one run. Entries are sorted by path when rendered,
// so the manifest does not depend on the order analyses executed.
struct Manifest {
  std::vector<ManifestEntry> entries;

  void add(const std::string& path, const std::string& content);
};

std::string render_manifest_json(const Manifest& manifest);

// Throws ValidationError when the file cannot be opened for writing.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace paneldid
