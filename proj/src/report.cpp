#include "paneldid/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <locale>
#include <sstream>

#include "json.hpp"
#include "paneldid/errors.hpp"

namespace paneldid {

namespace {

// Quote a CSV field only when it needs it, doubling embedded quotes.
std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\n\r") == std::string::npos) return raw;
  std::string quoted = "\"";
  for (const char c : raw) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string yes_no(bool flag) { return flag ? "yes" : "no"; }

std::string se_label(SeType se) {
  switch (se) {
    case SeType::classical: return "classical";
    case SeType::hc_robust: return "robust";
    case SeType::cluster_by_entity: return "cluster";
  }
  return "classical";
}

std::string direction_label(Direction d) {
  return d == Direction::positive ? "positive" : "negative";
}

// Left-pads to the column width; simple enough for fixed ASCII tables.
std::string pad_left(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return s + std::string(width - s.size(), ' ');
}

// Renders one aligned text table from pre-formatted cells; the first row is
// the header and the first column is left-aligned.
std::string layout_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c)
      widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c > 0) line += "  ";
      line += c == 0 ? pad_right(rows[r][c], widths[c]) : pad_left(rows[r][c], widths[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line;
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (const std::size_t w : widths) total += w;
      out += std::string(total + 2 * (widths.size() - 1), '-');
      out += '\n';
    }
  }
  return out;
}

}  // namespace

std::string format_number(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << v;
  std::string full = out.str();
  for (int prec = 1; prec < 17; ++prec) {
    std::ostringstream trial;
    trial.imbue(std::locale::classic());
    trial.precision(prec);
    trial << v;
    if (std::strtod(trial.str().c_str(), nullptr) == v) return trial.str();
  }
  return full;
}

std::string format_number_prec(double v, int digits) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(digits);
  out << v;
  return out.str();
}

std::string significance_stars(double p_value) {
  if (std::isnan(p_value)) return "";
  if (p_value < 0.01) return "***";
  if (p_value < 0.05) return "**";
  if (p_value < 0.10) return "*";
  return "";
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 14695981039346656037ull;
  for (const unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string content_hash(const std::string& bytes) {
  std::ostringstream out;
  out << "fnv1a64:" << std::hex << std::setfill('0') << std::setw(16) << fnv1a64(bytes);
  return out.str();
}

std::string render_regression_csv(const RegressionResult& result) {
  std::string out = "term,estimate,se,t_stat,p_value,stars\n";
  for (const auto& coef : result.coefficients) {
    out += csv_field(coef.name) + ',' + format_number(coef.estimate) + ',' +
           format_number(coef.se) + ',' + format_number(coef.t_stat) + ',' +
           format_number(coef.p_value) + ',' + significance_stars(coef.p_value) + '\n';
  }
  return out;
}

std::string render_regression_table(const RegressionResult& result,
                                    const std::string& title) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"term", "estimate", "se", "t", "p", ""});
  for (const auto& coef : result.coefficients) {
    rows.push_back({coef.name, format_number_prec(coef.estimate, 6),
                    format_number_prec(coef.se, 6), format_number_prec(coef.t_stat, 4),
                    format_number_prec(coef.p_value, 4),
                    significance_stars(coef.p_value)});
  }
  std::string out = title + '\n' + layout_table(rows);
  out += '\n';
  out += "observations: " + std::to_string(result.n_obs) +
         "  entities: " + std::to_string(result.n_entities) + '\n';
  out += "fixed effects: entity=" + yes_no(result.effects.entity) +
         " year=" + yes_no(result.effects.year) +
         "  se: " + se_label(result.se_type);
  if (result.se_type == SeType::cluster_by_entity)
    out += " (" + std::to_string(result.n_clusters) + " clusters)";
  out += '\n';
  if (result.is_logit) {
    out += "pseudo R2: " + format_number_prec(result.pseudo_r2, 6) +
           "  log-likelihood: " + format_number_prec(result.log_likelihood, 6) +
           "  iterations: " + std::to_string(result.iterations) + '\n';
  } else {
    out += "R2 within: " + format_number_prec(result.r2_within, 6) +
           "  R2 overall: " + format_number_prec(result.r2_overall, 6) + '\n';
  }
  if (!result.dropped.empty()) {
    out += "dropped as collinear:";
    for (const auto& name : result.dropped) out += ' ' + name;
    out += '\n';
  }
  out += "significance: * p<0.10  ** p<0.05  *** p<0.01\n";
  return out;
}

std::string render_event_study_csv(const EventStudyResult& result) {
  std::string out = "bin,rel,coefficient,se,ci_low,ci_high,p_value,n_obs,reference,dropped\n";
  for (const auto& bin : result.bins) {
    out += csv_field(bin.label) + ',' + std::to_string(bin.rel) + ',' +
           format_number(bin.coefficient) + ',' + format_number(bin.se) + ',' +
           format_number(bin.ci_low) + ',' + format_number(bin.ci_high) + ',' +
           format_number(bin.p_value) + ',' + std::to_string(bin.n_obs) + ',' +
           (bin.reference ? "1" : "0") + ',' + (bin.dropped ? "1" : "0") + '\n';
  }
  return out;
}

std::string render_index_weights_csv(const IndexWeights& weights) {
  std::string out = "indicator,direction,weight,entropy,divergence,eigenvalue\n";
  for (Eigen::Index j = 0; j < weights.weights.size(); ++j) {
    out += csv_field(weights.indicators[static_cast<std::size_t>(j)].name) + ',' +
           direction_label(weights.indicators[static_cast<std::size_t>(j)].direction) +
           ',' + format_number(weights.weights(j)) + ',';
    if (weights.method == WeightMethod::entropy) {
      out += format_number(weights.entropies(j)) + ',' +
             format_number(weights.divergences(j)) + ',';
    } else {
      out += ",," + format_number(weights.eigenvalues(j));
    }
    out += '\n';
  }
  return out;
}

std::string render_matched_sample_csv(const MatchedSample& matched) {
  std::string out =
      "treated_entity,treated_year,control_entity,control_year,"
      "score_treated,score_control,distance\n";
  for (const auto& pair : matched.pairs) {
    out += csv_field(pair.treated.entity) + ',' + std::to_string(pair.treated.year) +
           ',' + csv_field(pair.control.entity) + ',' +
           std::to_string(pair.control.year) + ',' + format_number(pair.score_treated) +
           ',' + format_number(pair.score_control) + ',' + format_number(pair.distance) +
           '\n';
  }
  return out;
}

std::string render_exclusions_csv(const MatchedSample& matched) {
  std::string out = "entity,year,reason\n";
  for (const auto& ex : matched.excluded) {
    out += csv_field(ex.obs.entity) + ',' + std::to_string(ex.obs.year) + ',' +
           csv_field(ex.reason) + '\n';
  }
  return out;
}

std::string render_balance_csv(const BalanceReport& report) {
  std::string out =
      "sample,covariate,mean_treated_before,mean_control_before,bias_before,"
      "mean_treated_after,mean_control_after,bias_after,reduction_pct,flagged\n";
  for (const auto& table : report.tables) {
    const std::string sample =
        table.year ? std::to_string(*table.year) : std::string("pooled");
    for (const auto& row : table.rows) {
      out += sample + ',' + csv_field(row.covariate) + ',' +
             format_number(row.mean_treated_before) + ',' +
             format_number(row.mean_control_before) + ',' +
             format_number(row.bias_before) + ',' +
             format_number(row.mean_treated_after) + ',' +
             format_number(row.mean_control_after) + ',' +
             format_number(row.bias_after) + ',' + format_number(row.reduction_pct) +
             ',' + (row.flagged ? "1" : "0") + '\n';
    }
  }
  return out;
}

std::string render_balance_table(const BalanceReport& report) {
  std::string out;
  for (const auto& table : report.tables) {
    out += table.year ? "year " + std::to_string(*table.year) : std::string("pooled");
    out += '\n';
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"covariate", "bias before", "bias after", "reduction %", ""});
    for (const auto& row : table.rows) {
      rows.push_back({row.covariate, format_number_prec(row.bias_before, 4),
                      format_number_prec(row.bias_after, 4),
                      format_number_prec(row.reduction_pct, 4),
                      row.flagged ? "flagged" : ""});
    }
    out += layout_table(rows);
    out += "pseudo R2 before: " + format_number_prec(table.pseudo_r2_before, 4);
    if (table.after_fit_failed)
      out += "  after: fit failed\n";
    else
      out += "  after: " + format_number_prec(table.pseudo_r2_after, 4) + '\n';
    out += '\n';
  }
  return out;
}

std::string render_density_csv(const DensityGrid& grid) {
  std::string out = "x,density\n";
  for (Eigen::Index i = 0; i < grid.x.size(); ++i)
    out += format_number(grid.x(i)) + ',' + format_number(grid.density(i)) + '\n';
  return out;
}

std::string render_placebo_csv(const PlaceboResult& result) {
  std::string out = "replication,beta,p_value,flagged\n";
  std::vector<char> flagged(result.betas.size(), 0);
  for (const long idx : result.flagged) flagged[static_cast<std::size_t>(idx)] = 1;
  for (std::size_t r = 0; r < result.betas.size(); ++r) {
    out += std::to_string(r) + ',' + format_number(result.betas[r]) + ',' +
           format_number(result.p_values[r]) + ',' + (flagged[r] ? "1" : "0") + '\n';
  }
  return out;
}

std::string render_mediation_table(const MediationResult& result,
                                   const std::string& mediator) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"path", "estimate", "se", "p", ""});
  const auto add = [&rows](const std::string& label, const Coefficient& c) {
    rows.push_back({label, format_number_prec(c.estimate, 6),
                    format_number_prec(c.se, 6), format_number_prec(c.p_value, 4),
                    significance_stars(c.p_value)});
  };
  add("treatment -> " + mediator + " (phi)", result.phi);
  add("treatment -> outcome direct (theta)", result.theta);
  add(mediator + " -> outcome (delta)", result.delta);
  std::string out = "mediation through " + mediator + '\n' + layout_table(rows);
  out += '\n';
  out += "mediated share: ";
  out += result.share_valid ? format_number_prec(100.0 * result.share, 6) + "%"
                            : std::string("not identified");
  out += '\n';
  out += "verdict: " + result.verdict + '\n';
  out += "significance threshold: " +
         format_number_prec(100.0 * result.significance_level, 6) + "%\n";
  return out;
}

void Manifest::add(const std::string& path, const std::string& content) {
  entries.push_back({path, content.size(), content_hash(content)});
}

std::string render_manifest_json(const Manifest& manifest) {
  std::vector<ManifestEntry> sorted = manifest.entries;
  std::sort(sorted.begin(), sorted.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& entry : sorted) {
    artifacts.push_back({{"path", entry.path},
                         {"bytes", entry.bytes},
                         {"hash", entry.hash}});
  }
  nlohmann::json doc{{"artifact_count", sorted.size()}, {"artifacts", artifacts}};
  return doc.dump(2) + '\n';
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("report: cannot write \"" + path + "\"");
  out << content;
  if (!out) throw ValidationError("report: write to \"" + path + "\" failed");
}

}  // namespace paneldid
