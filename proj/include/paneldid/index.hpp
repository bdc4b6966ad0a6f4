#pragma once

// Composite-index construction: direction-aware standardization over the
// pooled panel, entropy and principal-component weighting schemes, the
// weighted index itself, and the three-sector industrial-structure index.

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "paneldid/panel.hpp"

namespace paneldid {

enum class Direction { positive, negative };
enum class WeightMethod { entropy, pca };

struct IndexIndicator {
  std::string name;
  Direction direction = Direction::positive;
};

struct IndexSpec {
  std::vector<IndexIndicator> indicators;
  WeightMethod method = WeightMethod::entropy;
  std::string output_name;
};

// Weight vector aligned with the indicator list, plus the per-method
// diagnostics (entropies and divergences, or the eigenvalue spectrum).
struct IndexWeights {
  std::vector<IndexIndicator> indicators;
  std::string output_name;
  WeightMethod method = WeightMethod::entropy;
  Eigen::VectorXd weights;
  Eigen::VectorXd entropies;
  Eigen::VectorXd divergences;
  Eigen::VectorXd eigenvalues;  // descending, pca only
  Eigen::Index retained = 0;    // count of eigenvalue >= 1 components kept
};

// Shift added to min-max standardized cells before entropy proportions are
// formed; exact zeros would otherwise leave p*ln(p) ill-posed when a whole
// column sums to zero.
inline constexpr double kEntropyShift = 1e-4;

// Both standardizers replace the named column in the returned copy, pooling
// over every (entity, year) cell so cross-year comparisons stay meaningful.
PanelDataset standardize_minmax(const PanelDataset& data, const std::string& indicator,
                                Direction direction);
PanelDataset standardize_zscore(const PanelDataset& data, const std::string& indicator);

// Expect indicators already standardized to [0,1] with directions applied.
IndexWeights entropy_weights(const PanelDataset& data, const IndexSpec& spec);
IndexWeights pca_weights(const PanelDataset& data, const IndexSpec& spec);

// Appends weights.output_name = scale * sum_j w_j * x_ij.
PanelDataset composite_index(const PanelDataset& data, const IndexWeights& weights,
                             double scale);

// index = share_1*1 + share_2*2 + share_3*3. Shares that sum to neither
// about 1 nor about 100 produce a warning string, not an error.
PanelDataset industrial_structure_index(const PanelDataset& data,
                                        const std::array<std::string, 3>& shares,
                                        const std::string& out_name,
                                        std::vector<std::string>* warnings = nullptr);

}  // namespace paneldid
