#pragma once

// Balanced entity-by-year panel container plus CSV ingestion and the
// column transforms (interpolation fill, log, share-of) used to prepare
// estimation samples. All operations return new datasets; nothing mutates
// a dataset after construction, so sharing across threads is safe.

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace paneldid {

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Variables are stored as entities-by-years matrices. Entities are kept
// sorted byte-wise and years ascending, so any two loads of the same file
// agree on layout regardless of row order in the source.
struct PanelDataset {
  std::vector<std::string> entities;
  std::vector<int> years;
  std::vector<std::string> variable_order;
  std::map<std::string, Eigen::MatrixXd> values;
  std::map<std::string, MaskMatrix> missing;

  Eigen::Index n_entities() const { return static_cast<Eigen::Index>(entities.size()); }
  Eigen::Index n_years() const { return static_cast<Eigen::Index>(years.size()); }

  bool has_variable(const std::string& name) const { return values.count(name) != 0; }
  Eigen::Index entity_index(const std::string& entity) const;
  Eigen::Index year_index(int year) const;

  // Throws ValidationError when the variable is absent.
  const Eigen::MatrixXd& var(const std::string& name) const;
  const MaskMatrix& mask(const std::string& name) const;

  // Throws ValidationError on duplicate names or shape mismatch.
  void add_variable(const std::string& name, Eigen::MatrixXd cells, MaskMatrix holes);
};

PanelDataset load_csv(const std::string& path, const std::string& entity_col,
                      const std::string& year_col);

void write_csv(const PanelDataset& data, const std::string& path,
               const std::string& entity_col = "entity",
               const std::string& year_col = "year");
void write_csv(const PanelDataset& data, std::ostream& out,
               const std::string& entity_col = "entity",
               const std::string& year_col = "year");

// Interpolation bookkeeping: interior cells get linear fills, leading and
// trailing cells get flat fills from the nearest observation. The split is
// reported so boundary fills stay visible in the load report.
struct FillCount {
  std::string entity;
  long interior = 0;
  long boundary = 0;
};

struct FillReport {
  std::string variable;
  std::vector<FillCount> per_entity;

  long total_interior() const;
  long total_boundary() const;
};

PanelDataset fill_missing(const PanelDataset& data, const std::string& variable,
                          FillReport* report = nullptr);

enum class Transform { none, natural_log, share_of };
enum class VariableRole { outcome, control, indicator, mediator, auxiliary };

struct VariableSpec {
  std::string name;
  std::string source;
  Transform transform = Transform::none;
  std::string denominator;  // used by share_of only
  VariableRole role = VariableRole::auxiliary;
};

PanelDataset derive_variable(const PanelDataset& data, const VariableSpec& spec);

}  // namespace paneldid
