#include "paneldid/index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paneldid/errors.hpp"

namespace paneldid {

namespace {

// Flattens a fully observed variable into one pooled vector (entity-major).
Eigen::VectorXd pooled_cells(const PanelDataset& data, const std::string& name) {
  const Eigen::MatrixXd& m = data.var(name);
  if (data.mask(name).any())
    throw ValidationError("index: variable \"" + name +
                          "\" still has missing cells; fill it first");
  Eigen::VectorXd out(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(k++) = m(r, c);
  return out;
}

void check_spec(const IndexSpec& spec) {
  if (spec.indicators.size() < 2)
    throw ValidationError("index: at least two indicators are required");
  if (spec.output_name.empty())
    throw ValidationError("index: output name is empty");
}

IndexWeights base_weights(const IndexSpec& spec) {
  IndexWeights w;
  w.indicators = spec.indicators;
  w.output_name = spec.output_name;
  w.method = spec.method;
  return w;
}

}  // namespace

PanelDataset standardize_minmax(const PanelDataset& data, const std::string& indicator,
                                Direction direction) {
  const Eigen::VectorXd pooled = pooled_cells(data, indicator);
  const double lo = pooled.minCoeff();
  const double hi = pooled.maxCoeff();
  if (hi - lo <= 0.0)
    throw ValidationError("standardize_minmax: indicator \"" + indicator +
                          "\" has zero range");
  PanelDataset out = data;
  Eigen::MatrixXd& cells = out.values.at(indicator);
  if (direction == Direction::positive)
    cells = (cells.array() - lo) / (hi - lo);
  else
    cells = (hi - cells.array()) / (hi - lo);
  return out;
}

PanelDataset standardize_zscore(const PanelDataset& data, const std::string& indicator) {
  const Eigen::VectorXd pooled = pooled_cells(data, indicator);
  const double n = static_cast<double>(pooled.size());
  if (n < 2.0)
    throw ValidationError("standardize_zscore: indicator \"" + indicator +
                          "\" has fewer than two cells");
  const double mean = pooled.mean();
  const double sd = std::sqrt((pooled.array() - mean).square().sum() / (n - 1.0));
  if (sd <= 0.0)
    throw ValidationError("standardize_zscore: indicator \"" + indicator +
                          "\" has zero standard deviation");
  PanelDataset out = data;
  Eigen::MatrixXd& cells = out.values.at(indicator);
  cells = (cells.array() - mean) / sd;
  return out;
}

IndexWeights entropy_weights(const PanelDataset& data, const IndexSpec& spec) {
  check_spec(spec);
  const auto p_count = static_cast<Eigen::Index>(spec.indicators.size());
  IndexWeights w = base_weights(spec);
  w.entropies.resize(p_count);
  w.divergences.resize(p_count);
  w.weights.resize(p_count);

  for (Eigen::Index j = 0; j < p_count; ++j) {
    const Eigen::VectorXd shifted =
        pooled_cells(data, spec.indicators[static_cast<std::size_t>(j)].name).array() +
        kEntropyShift;
    if (shifted.minCoeff() < 0.0)
      throw ValidationError("entropy_weights: indicator \"" +
                            spec.indicators[static_cast<std::size_t>(j)].name +
                            "\" has negative cells; standardize to [0,1] first");
    const double total = shifted.sum();
    const double n = static_cast<double>(shifted.size());
    double sum_plogp = 0.0;
    for (Eigen::Index i = 0; i < shifted.size(); ++i) {
      const double p = shifted(i) / total;
      if (p > 0.0) sum_plogp += p * std::log(p);
    }
    w.entropies(j) = -sum_plogp / std::log(n);
    w.divergences(j) = 1.0 - w.entropies(j);
  }

  const double total_divergence = w.divergences.sum();
  if (total_divergence <= 0.0)
    throw ValidationError("entropy_weights: no information content (all indicators uniform)");
  w.weights = w.divergences / total_divergence;
  return w;
}

IndexWeights pca_weights(const PanelDataset& data, const IndexSpec& spec) {
  check_spec(spec);
  const auto p_count = static_cast<Eigen::Index>(spec.indicators.size());

  Eigen::MatrixXd pooled;
  for (Eigen::Index j = 0; j < p_count; ++j) {
    const Eigen::VectorXd col =
        pooled_cells(data, spec.indicators[static_cast<std::size_t>(j)].name);
    if (pooled.size() == 0) pooled.resize(col.size(), p_count);
    pooled.col(j) = col;
  }
  const double n = static_cast<double>(pooled.rows());
  if (n < 2.0) throw ValidationError("pca_weights: fewer than two pooled cells");

  const Eigen::RowVectorXd means = pooled.colwise().mean();
  const Eigen::MatrixXd centered = pooled.rowwise() - means;
  const Eigen::VectorXd sds =
      (centered.array().square().colwise().sum() / (n - 1.0)).sqrt();
  for (Eigen::Index j = 0; j < p_count; ++j)
    if (sds(j) <= 0.0)
      throw ValidationError("pca_weights: indicator \"" +
                            spec.indicators[static_cast<std::size_t>(j)].name +
                            "\" has zero variance");
  Eigen::MatrixXd corr = (centered.transpose() * centered) / (n - 1.0);
  corr = sds.cwiseInverse().asDiagonal() * corr * sds.cwiseInverse().asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr);
  if (solver.info() != Eigen::Success)
    throw EstimationError("pca_weights: eigendecomposition failed");
  if (solver.eigenvalues().minCoeff() < -1e-8)
    throw EstimationError("pca_weights: correlation matrix is not positive semidefinite");

  // Eigen returns ascending order; flip to descending.
  IndexWeights w = base_weights(spec);
  w.eigenvalues = solver.eigenvalues().reverse();
  Eigen::MatrixXd loadings = solver.eigenvectors().rowwise().reverse();

  // Kaiser rule with a hair of slack so exactly-unit spectra keep all
  // components. The eigenvalue mean is 1, so at least one always survives.
  w.retained = 0;
  double retained_sum = 0.0;
  for (Eigen::Index k = 0; k < p_count; ++k) {
    if (w.eigenvalues(k) >= 1.0 - 1e-9) {
      ++w.retained;
      retained_sum += w.eigenvalues(k);
    }
  }

  w.weights = Eigen::VectorXd::Zero(p_count);
  for (Eigen::Index k = 0; k < w.retained; ++k)
    w.weights += (w.eigenvalues(k) / retained_sum) * loadings.col(k).cwiseAbs();
  const double total = w.weights.sum();
  if (total <= 0.0) throw EstimationError("pca_weights: degenerate loadings");
  w.weights /= total;
  return w;
}

PanelDataset composite_index(const PanelDataset& data, const IndexWeights& weights,
                             double scale) {
  if (weights.indicators.empty() ||
      weights.weights.size() != static_cast<Eigen::Index>(weights.indicators.size()))
    throw ValidationError("composite_index: weights are not aligned with indicators");
  if (weights.output_name.empty())
    throw ValidationError("composite_index: output name is empty");

  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(data.n_entities(), data.n_years());
  for (std::size_t j = 0; j < weights.indicators.size(); ++j) {
    const std::string& name = weights.indicators[j].name;
    if (data.mask(name).any())
      throw ValidationError("composite_index: indicator \"" + name +
                            "\" still has missing cells");
    cells += weights.weights(static_cast<Eigen::Index>(j)) * data.var(name);
  }
  cells *= scale;

  PanelDataset out = data;
  out.add_variable(weights.output_name, std::move(cells),
                   MaskMatrix::Constant(data.n_entities(), data.n_years(), false));
  return out;
}

PanelDataset industrial_structure_index(const PanelDataset& data,
                                        const std::array<std::string, 3>& shares,
                                        const std::string& out_name,
                                        std::vector<std::string>* warnings) {
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(data.n_entities(), data.n_years());
  Eigen::MatrixXd share_sum = Eigen::MatrixXd::Zero(data.n_entities(), data.n_years());
  for (int i = 0; i < 3; ++i) {
    const std::string& name = shares[static_cast<std::size_t>(i)];
    if (data.mask(name).any())
      throw ValidationError("industrial_structure_index: variable \"" + name +
                            "\" still has missing cells");
    cells += static_cast<double>(i + 1) * data.var(name);
    share_sum += data.var(name);
  }

  if (warnings) {
    long odd_cells = 0;
    for (Eigen::Index r = 0; r < share_sum.rows(); ++r)
      for (Eigen::Index c = 0; c < share_sum.cols(); ++c) {
        const double s = share_sum(r, c);
        if (std::fabs(s - 1.0) > 0.02 && std::fabs(s - 100.0) > 2.0) ++odd_cells;
      }
    if (odd_cells > 0)
      warnings->push_back("industrial_structure_index: " + std::to_string(odd_cells) +
                          " cell(s) have shares summing to neither ~1 nor ~100");
  }

  PanelDataset out = data;
  out.add_variable(out_name, std::move(cells),
                   MaskMatrix::Constant(data.n_entities(), data.n_years(), false));
  return out;
}

}  // namespace paneldid
