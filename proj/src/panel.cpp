#include "paneldid/panel.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "paneldid/errors.hpp"

namespace paneldid {

namespace {

// Splits one CSV record. Fields may be double-quoted to embed commas;
// doubled quotes inside a quoted field unescape to a single quote.
std::vector<std::string> split_csv_line(const std::string& line, long line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  if (quoted)
    throw ValidationError("load_csv: unterminated quote on line " + std::to_string(line_no));
  fields.push_back(current);
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Empty cells and the literal "NA" are missing values. Anything else must
// parse fully as a number; typos fail loudly instead of becoming holes.
bool parse_cell(const std::string& raw, double* out) {
  const std::string cell = trim(raw);
  if (cell.empty() || cell == "NA") return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v))
    throw ValidationError("load_csv: non-numeric cell \"" + cell + "\"");
  *out = v;
  return true;
}

long parse_year(const std::string& raw, long line_no) {
  const std::string cell = trim(raw);
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(cell.c_str(), &end, 10);
  if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE)
    throw ValidationError("load_csv: year \"" + cell + "\" on line " +
                          std::to_string(line_no) + " is not an integer");
  return v;
}

std::string format_cell(double v) {
  // Round-trippable shortest form, locale independent.
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << v;
  std::string s = out.str();
  // Prefer the shorter representation when it round-trips exactly.
  for (int prec = 1; prec < 17; ++prec) {
    std::ostringstream trial;
    trial.imbue(std::locale::classic());
    trial.precision(prec);
    trial << v;
    if (std::strtod(trial.str().c_str(), nullptr) == v) return trial.str();
  }
  return s;
}

}  // namespace

Eigen::Index PanelDataset::entity_index(const std::string& entity) const {
  const auto it = std::lower_bound(entities.begin(), entities.end(), entity);
  if (it == entities.end() || *it != entity)
    throw ValidationError("panel: unknown entity \"" + entity + "\"");
  return static_cast<Eigen::Index>(it - entities.begin());
}

Eigen::Index PanelDataset::year_index(int year) const {
  if (years.empty() || year < years.front() || year > years.back())
    throw ValidationError("panel: year " + std::to_string(year) + " outside panel range");
  return static_cast<Eigen::Index>(year - years.front());
}

const Eigen::MatrixXd& PanelDataset::var(const std::string& name) const {
  const auto it = values.find(name);
  if (it == values.end())
    throw ValidationError("panel: unknown variable \"" + name + "\"");
  return it->second;
}

const MaskMatrix& PanelDataset::mask(const std::string& name) const {
  const auto it = missing.find(name);
  if (it == missing.end())
    throw ValidationError("panel: unknown variable \"" + name + "\"");
  return it->second;
}

void PanelDataset::add_variable(const std::string& name, Eigen::MatrixXd cells,
                                MaskMatrix holes) {
  if (values.count(name))
    throw ValidationError("panel: variable \"" + name + "\" already exists");
  if (cells.rows() != n_entities() || cells.cols() != n_years() ||
      holes.rows() != cells.rows() || holes.cols() != cells.cols())
    throw ValidationError("panel: variable \"" + name + "\" has the wrong shape");
  variable_order.push_back(name);
  values.emplace(name, std::move(cells));
  missing.emplace(name, std::move(holes));
}

PanelDataset load_csv(const std::string& path, const std::string& entity_col,
                      const std::string& year_col) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_csv: cannot open \"" + path + "\"");

  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("load_csv: \"" + path + "\" is empty");
  const std::vector<std::string> header = split_csv_line(line, 1);

  long entity_pos = -1;
  long year_pos = -1;
  std::vector<std::string> var_names;
  std::vector<long> var_pos;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (name == entity_col) {
      if (entity_pos >= 0)
        throw ValidationError("load_csv: duplicate header \"" + name + "\"");
      entity_pos = static_cast<long>(i);
    } else if (name == year_col) {
      if (year_pos >= 0)
        throw ValidationError("load_csv: duplicate header \"" + name + "\"");
      year_pos = static_cast<long>(i);
    } else {
      if (name.empty())
        throw ValidationError("load_csv: empty header name in \"" + path + "\"");
      if (std::find(var_names.begin(), var_names.end(), name) != var_names.end())
        throw ValidationError("load_csv: duplicate header \"" + name + "\"");
      var_names.push_back(name);
      var_pos.push_back(static_cast<long>(i));
    }
  }
  if (entity_pos < 0)
    throw ValidationError("load_csv: entity column \"" + entity_col + "\" not found");
  if (year_pos < 0)
    throw ValidationError("load_csv: year column \"" + year_col + "\" not found");

  struct Row {
    std::string entity;
    long year;
    long line_no;
    std::vector<double> cells;
    std::vector<bool> holes;
  };
  std::vector<Row> rows;
  std::map<std::pair<std::string, long>, long> first_seen;

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line, line_no);
    if (fields.size() != header.size())
      throw ValidationError("load_csv: line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
    Row row;
    row.entity = trim(fields[static_cast<std::size_t>(entity_pos)]);
    if (row.entity.empty())
      throw ValidationError("load_csv: empty entity on line " + std::to_string(line_no));
    row.year = parse_year(fields[static_cast<std::size_t>(year_pos)], line_no);
    row.line_no = line_no;

    const auto key = std::make_pair(row.entity, row.year);
    const auto seen = first_seen.find(key);
    if (seen != first_seen.end())
      throw ValidationError("load_csv: duplicate (entity, year) pair (\"" + row.entity +
                            "\", " + std::to_string(row.year) + ") at rows " +
                            std::to_string(seen->second) + " and " +
                            std::to_string(line_no));
    first_seen.emplace(key, line_no);

    row.cells.resize(var_names.size());
    row.holes.resize(var_names.size());
    for (std::size_t j = 0; j < var_names.size(); ++j) {
      double v = std::numeric_limits<double>::quiet_NaN();
      bool present;
      try {
        present = parse_cell(fields[static_cast<std::size_t>(var_pos[j])], &v);
      } catch (const ValidationError& e) {
        throw ValidationError(std::string(e.what()) + " in column \"" + var_names[j] +
                              "\" on line " + std::to_string(line_no));
      }
      row.cells[j] = v;
      row.holes[j] = !present;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("load_csv: \"" + path + "\" has no data rows");

  PanelDataset data;
  for (const Row& row : rows) data.entities.push_back(row.entity);
  std::sort(data.entities.begin(), data.entities.end());
  data.entities.erase(std::unique(data.entities.begin(), data.entities.end()),
                      data.entities.end());

  long min_year = rows.front().year;
  long max_year = rows.front().year;
  for (const Row& row : rows) {
    min_year = std::min(min_year, row.year);
    max_year = std::max(max_year, row.year);
  }
  for (long y = min_year; y <= max_year; ++y) data.years.push_back(static_cast<int>(y));

  // Balance check: every entity must cover every year in the span.
  for (const std::string& entity : data.entities) {
    for (long y = min_year; y <= max_year; ++y) {
      if (!first_seen.count(std::make_pair(entity, y)))
        throw ValidationError("load_csv: entity \"" + entity + "\" is missing year " +
                              std::to_string(y) + " (panel must be balanced)");
    }
  }

  const Eigen::Index ne = data.n_entities();
  const Eigen::Index ny = data.n_years();
  for (std::size_t j = 0; j < var_names.size(); ++j) {
    Eigen::MatrixXd cells =
        Eigen::MatrixXd::Constant(ne, ny, std::numeric_limits<double>::quiet_NaN());
    MaskMatrix holes = MaskMatrix::Constant(ne, ny, true);
    for (const Row& row : rows) {
      const Eigen::Index r = data.entity_index(row.entity);
      const Eigen::Index c = data.year_index(static_cast<int>(row.year));
      cells(r, c) = row.cells[j];
      holes(r, c) = row.holes[j];
    }
    data.add_variable(var_names[j], std::move(cells), std::move(holes));
  }
  return data;
}

void write_csv(const PanelDataset& data, std::ostream& out,
               const std::string& entity_col, const std::string& year_col) {
  out << entity_col << ',' << year_col;
  for (const std::string& name : data.variable_order) out << ',' << name;
  out << '\n';

  for (Eigen::Index r = 0; r < data.n_entities(); ++r) {
    for (Eigen::Index c = 0; c < data.n_years(); ++c) {
      out << data.entities[static_cast<std::size_t>(r)] << ','
          << data.years[static_cast<std::size_t>(c)];
      for (const std::string& name : data.variable_order) {
        out << ',';
        if (!data.missing.at(name)(r, c)) out << format_cell(data.values.at(name)(r, c));
      }
      out << '\n';
    }
  }
}

void write_csv(const PanelDataset& data, const std::string& path,
               const std::string& entity_col, const std::string& year_col) {
  std::ofstream out(path);
  if (!out) throw ValidationError("write_csv: cannot open \"" + path + "\" for writing");
  write_csv(data, out, entity_col, year_col);
  if (!out) throw ValidationError("write_csv: failed writing \"" + path + "\"");
}

long FillReport::total_interior() const {
  long n = 0;
  for (const FillCount& c : per_entity) n += c.interior;
  return n;
}

long FillReport::total_boundary() const {
  long n = 0;
  for (const FillCount& c : per_entity) n += c.boundary;
  return n;
}

PanelDataset fill_missing(const PanelDataset& data, const std::string& variable,
                          FillReport* report) {
  const Eigen::MatrixXd& src = data.var(variable);
  const MaskMatrix& holes = data.mask(variable);

  PanelDataset out = data;
  Eigen::MatrixXd& cells = out.values.at(variable);
  MaskMatrix& mask = out.missing.at(variable);
  if (report) {
    report->variable = variable;
    report->per_entity.clear();
  }

  for (Eigen::Index r = 0; r < data.n_entities(); ++r) {
    std::vector<Eigen::Index> observed;
    for (Eigen::Index c = 0; c < data.n_years(); ++c)
      if (!holes(r, c)) observed.push_back(c);
    if (observed.size() == data.years.size()) continue;
    if (observed.size() < 2)
      throw ValidationError("fill_missing: entity \"" +
                            data.entities[static_cast<std::size_t>(r)] +
                            "\" has fewer than two observed values for \"" + variable +
                            "\"");

    FillCount count;
    count.entity = data.entities[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < data.n_years(); ++c) {
      if (!holes(r, c)) continue;
      if (c < observed.front()) {
        cells(r, c) = src(r, observed.front());
        ++count.boundary;
      } else if (c > observed.back()) {
        cells(r, c) = src(r, observed.back());
        ++count.boundary;
      } else {
        const auto next = std::upper_bound(observed.begin(), observed.end(), c);
        const Eigen::Index hi = *next;
        const Eigen::Index lo = *(next - 1);
        const double t = static_cast<double>(c - lo) / static_cast<double>(hi - lo);
        cells(r, c) = src(r, lo) + t * (src(r, hi) - src(r, lo));
        ++count.interior;
      }
      mask(r, c) = false;
    }
    if (report) report->per_entity.push_back(std::move(count));
  }
  return out;
}

PanelDataset derive_variable(const PanelDataset& data, const VariableSpec& spec) {
  if (spec.name.empty())
    throw ValidationError("derive_variable: output name is empty");
  const Eigen::MatrixXd& src = data.var(spec.source);
  const MaskMatrix& src_mask = data.mask(spec.source);

  Eigen::MatrixXd cells = src;
  MaskMatrix holes = src_mask;

  switch (spec.transform) {
    case Transform::none:
      break;
    case Transform::natural_log:
      for (Eigen::Index r = 0; r < src.rows(); ++r) {
        for (Eigen::Index c = 0; c < src.cols(); ++c) {
          if (holes(r, c)) continue;
          if (!(src(r, c) > 0.0))
            throw ValidationError(
                "derive_variable: log of non-positive value at (\"" +
                data.entities[static_cast<std::size_t>(r)] + "\", " +
                std::to_string(data.years[static_cast<std::size_t>(c)]) + ")");
          cells(r, c) = std::log(src(r, c));
        }
      }
      break;
    case Transform::share_of: {
      const Eigen::MatrixXd& den = data.var(spec.denominator);
      const MaskMatrix& den_mask = data.mask(spec.denominator);
      for (Eigen::Index r = 0; r < src.rows(); ++r) {
        for (Eigen::Index c = 0; c < src.cols(); ++c) {
          if (src_mask(r, c) || den_mask(r, c)) {
            holes(r, c) = true;
            cells(r, c) = std::numeric_limits<double>::quiet_NaN();
            continue;
          }
          if (den(r, c) == 0.0)
            throw ValidationError(
                "derive_variable: zero denominator at (\"" +
                data.entities[static_cast<std::size_t>(r)] + "\", " +
                std::to_string(data.years[static_cast<std::size_t>(c)]) + ")");
          cells(r, c) = src(r, c) / den(r, c);
        }
      }
      break;
    }
  }

  PanelDataset out = data;
  out.add_variable(spec.name, std::move(cells), std::move(holes));
  return out;
}

}  // namespace paneldid
