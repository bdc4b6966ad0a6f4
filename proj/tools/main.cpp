// Config-driven pipeline: reads a strict JSON config, loads the panel and
// treatment schedules, runs the requested analyses, and writes their CSV,
// JSON, and text artifacts plus a content-hashed manifest. Artifacts are
// buffered in memory and flushed only after every analysis succeeds, so a
// failing run leaves no partial output behind.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "paneldid/dgp.hpp"
#include "paneldid/did.hpp"
#include "paneldid/errors.hpp"
#include "paneldid/index.hpp"
#include "paneldid/mediation.hpp"
#include "paneldid/panel.hpp"
#include "paneldid/placebo.hpp"
#include "paneldid/psm.hpp"
#include "paneldid/regression.hpp"
#include "paneldid/report.hpp"

namespace {

using nlohmann::json;
using namespace paneldid;

// ---------------------------------------------------------------------------
// Strict config parsing. Every object is checked against its full key list,
// so a typo in an analysis spec fails loudly instead of silently defaulting.

void expect_object(const json& node, const std::string& context) {
  if (!node.is_object())
    throw ValidationError("config: " + context + " must be a JSON object");
}

void check_keys(const json& node, const std::string& context,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : node.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) known = true;
    if (!known)
      throw ValidationError("config: unknown key \"" + item.key() + "\" in " + context);
  }
}

template <typename T>
T get_as(const json& node, const std::string& context) {
  try {
    return node.get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: " + context + " has the wrong type");
  }
}

template <typename T>
void read_if(const json& node, const char* key, T& target, const std::string& context) {
  if (node.contains(key)) target = get_as<T>(node.at(key), context + "." + key);
}

SeType parse_se(const std::string& label) {
  if (label == "classical") return SeType::classical;
  if (label == "robust") return SeType::hc_robust;
  if (label == "cluster") return SeType::cluster_by_entity;
  throw ValidationError("config: unknown se type \"" + label +
                        "\" (expected classical, robust, or cluster)");
}

Transform parse_transform(const std::string& label) {
  if (label == "none") return Transform::none;
  if (label == "log") return Transform::natural_log;
  if (label == "share_of") return Transform::share_of;
  throw ValidationError("config: unknown transform \"" + label +
                        "\" (expected none, log, or share_of)");
}

Direction parse_direction(const std::string& label) {
  if (label == "positive") return Direction::positive;
  if (label == "negative") return Direction::negative;
  throw ValidationError("config: unknown direction \"" + label +
                        "\" (expected positive or negative)");
}

const std::set<std::string> kAnalyses = {
    "build-index", "baseline",  "event-study", "trim",         "psm-did-pooled",
    "psm-did-yearly", "placebo", "mediation",  "heterogeneity"};

struct PsmSettings {
  std::vector<std::string> covariates;
  MatchOptions options;  // mode is set per analysis variant
};

struct MediationSettings {
  std::vector<std::string> mediators;
  bool construct = false;
  MediatorSources sources;
  double significance_level = 0.10;
};

struct HeterogeneitySettings {
  std::string group_csv;
  std::string group_name = "group";
};

struct PipelineConfig {
  std::string panel_csv;
  std::string entity_column = "entity";
  std::string year_column = "year";
  std::vector<std::string> fill;
  std::vector<VariableSpec> derived;
  std::optional<IndexSpec> index;
  double index_scale = 1.0;
  std::string schedule_csv;
  std::vector<std::string> policies;
  std::string combined_name = "dual_treat";
  std::string outcome;
  std::vector<std::string> controls;
  SeType se_type = SeType::cluster_by_entity;
  std::vector<std::string> analyses;
  EventWindow window;
  std::vector<int> trim_years;
  std::optional<PsmSettings> psm;
  PlaceboConfig placebo;
  std::optional<MediationSettings> mediation;
  std::optional<HeterogeneitySettings> heterogeneity;
  std::optional<DgpConfig> dgp;
  std::uint64_t seed = 0;
  int threads = 1;
};

std::vector<VariableSpec> parse_derived(const json& node) {
  std::vector<VariableSpec> specs;
  for (const json& entry : node) {
    expect_object(entry, "derived entry");
    check_keys(entry, "derived entry", {"name", "source", "transform", "denominator"});
    VariableSpec spec;
    spec.name = get_as<std::string>(entry.at("name"), "derived.name");
    spec.source = get_as<std::string>(entry.at("source"), "derived.source");
    if (entry.contains("transform"))
      spec.transform =
          parse_transform(get_as<std::string>(entry.at("transform"), "derived.transform"));
    read_if(entry, "denominator", spec.denominator, "derived");
    specs.push_back(std::move(spec));
  }
  return specs;
}

IndexSpec parse_index(const json& node, double& scale) {
  expect_object(node, "index");
  check_keys(node, "index", {"output", "method", "scale", "indicators"});
  IndexSpec spec;
  spec.output_name = get_as<std::string>(node.at("output"), "index.output");
  if (node.contains("method")) {
    const std::string method = get_as<std::string>(node.at("method"), "index.method");
    if (method == "entropy")
      spec.method = WeightMethod::entropy;
    else if (method == "pca")
      spec.method = WeightMethod::pca;
    else
      throw ValidationError("config: unknown index method \"" + method + "\"");
  }
  read_if(node, "scale", scale, "index");
  if (!node.contains("indicators"))
    throw ValidationError("config: index.indicators is required");
  for (const json& entry : node.at("indicators")) {
    expect_object(entry, "index indicator");
    check_keys(entry, "index indicator", {"name", "direction"});
    IndexIndicator indicator;
    indicator.name = get_as<std::string>(entry.at("name"), "indicator.name");
    if (entry.contains("direction"))
      indicator.direction =
          parse_direction(get_as<std::string>(entry.at("direction"), "indicator.direction"));
    spec.indicators.push_back(std::move(indicator));
  }
  return spec;
}

PsmSettings parse_psm(const json& node) {
  expect_object(node, "psm");
  check_keys(node, "psm",
             {"covariates", "neighbors", "caliper", "with_replacement", "log_odds"});
  PsmSettings settings;
  if (!node.contains("covariates"))
    throw ValidationError("config: psm.covariates is required");
  settings.covariates =
      get_as<std::vector<std::string>>(node.at("covariates"), "psm.covariates");
  read_if(node, "neighbors", settings.options.k, "psm");
  if (node.contains("caliper"))
    settings.options.caliper = get_as<double>(node.at("caliper"), "psm.caliper");
  read_if(node, "with_replacement", settings.options.with_replacement, "psm");
  read_if(node, "log_odds", settings.options.on_log_odds, "psm");
  return settings;
}

PlaceboConfig parse_placebo(const json& node) {
  expect_object(node, "placebo");
  check_keys(node, "placebo",
             {"replications", "treated_count", "year_rule", "max_redraws"});
  PlaceboConfig config;
  read_if(node, "replications", config.replications, "placebo");
  if (node.contains("treated_count"))
    config.treated_count = get_as<int>(node.at("treated_count"), "placebo.treated_count");
  if (node.contains("year_rule")) {
    const std::string rule = get_as<std::string>(node.at("year_rule"), "placebo.year_rule");
    if (rule == "uniform")
      config.year_rule = PseudoYearRule::uniform;
    else if (rule == "resample")
      config.year_rule = PseudoYearRule::resample;
    else
      throw ValidationError("config: unknown placebo year rule \"" + rule + "\"");
  }
  read_if(node, "max_redraws", config.max_redraws, "placebo");
  return config;
}

MediationSettings parse_mediation(const json& node) {
  expect_object(node, "mediation");
  check_keys(node, "mediation",
             {"mediators", "construct", "sources", "significance_level"});
  MediationSettings settings;
  if (!node.contains("mediators"))
    throw ValidationError("config: mediation.mediators is required");
  settings.mediators =
      get_as<std::vector<std::string>>(node.at("mediators"), "mediation.mediators");
  if (settings.mediators.empty())
    throw ValidationError("config: mediation.mediators must not be empty");
  read_if(node, "construct", settings.construct, "mediation");
  read_if(node, "significance_level", settings.significance_level, "mediation");
  if (node.contains("sources")) {
    const json& src = node.at("sources");
    expect_object(src, "mediation.sources");
    check_keys(src, "mediation.sources",
               {"financial", "gdp", "talent_sectors", "total_employment",
                "scitech_budget", "total_budget", "patents", "population"});
    read_if(src, "financial", settings.sources.financial, "sources");
    read_if(src, "gdp", settings.sources.gdp, "sources");
    read_if(src, "talent_sectors", settings.sources.talent_sectors, "sources");
    read_if(src, "total_employment", settings.sources.total_employment, "sources");
    read_if(src, "scitech_budget", settings.sources.scitech_budget, "sources");
    read_if(src, "total_budget", settings.sources.total_budget, "sources");
    read_if(src, "patents", settings.sources.patents, "sources");
    read_if(src, "population", settings.sources.population, "sources");
  }
  return settings;
}

HeterogeneitySettings parse_heterogeneity(const json& node) {
  expect_object(node, "heterogeneity");
  check_keys(node, "heterogeneity", {"group_csv", "group_name"});
  HeterogeneitySettings settings;
  if (!node.contains("group_csv"))
    throw ValidationError("config: heterogeneity.group_csv is required");
  settings.group_csv = get_as<std::string>(node.at("group_csv"), "heterogeneity.group_csv");
  read_if(node, "group_name", settings.group_name, "heterogeneity");
  return settings;
}

DgpConfig parse_dgp(const json& node) {
  expect_object(node, "dgp");
  check_keys(node, "dgp",
             {"entities", "years", "first_year", "entity_fe_sd", "year_fe_sd", "noise_sd",
              "outcome", "treatment", "effect", "mediator", "controls"});
  DgpConfig config;
  read_if(node, "entities", config.n_entities, "dgp");
  read_if(node, "years", config.n_years, "dgp");
  read_if(node, "first_year", config.first_year, "dgp");
  read_if(node, "entity_fe_sd", config.entity_fe_sd, "dgp");
  read_if(node, "year_fe_sd", config.year_fe_sd, "dgp");
  read_if(node, "noise_sd", config.noise_sd, "dgp");
  read_if(node, "outcome", config.outcome_name, "dgp");
  if (node.contains("treatment")) {
    const json& t = node.at("treatment");
    expect_object(t, "dgp.treatment");
    check_keys(t, "dgp.treatment",
               {"rule", "treated_count", "selection_intercept", "adopt_from", "adopt_to",
                "second_policy_lag"});
    if (t.contains("rule")) {
      const std::string rule = get_as<std::string>(t.at("rule"), "dgp.treatment.rule");
      if (rule == "random")
        config.treatment.rule = TreatmentRule::random_staggered;
      else if (rule == "selection")
        config.treatment.rule = TreatmentRule::selection_on_covariates;
      else
        throw ValidationError("config: unknown treatment rule \"" + rule + "\"");
    }
    read_if(t, "treated_count", config.treatment.treated_count, "dgp.treatment");
    read_if(t, "selection_intercept", config.treatment.selection_intercept, "dgp.treatment");
    read_if(t, "adopt_from", config.treatment.adopt_from, "dgp.treatment");
    read_if(t, "adopt_to", config.treatment.adopt_to, "dgp.treatment");
    read_if(t, "second_policy_lag", config.treatment.second_policy_lag, "dgp.treatment");
  }
  if (node.contains("effect")) {
    const json& e = node.at("effect");
    expect_object(e, "dgp.effect");
    check_keys(e, "dgp.effect", {"constant", "dynamic_path", "pre_trend_slope"});
    read_if(e, "constant", config.effect.constant, "dgp.effect");
    read_if(e, "dynamic_path", config.effect.dynamic_path, "dgp.effect");
    read_if(e, "pre_trend_slope", config.effect.pre_trend_slope, "dgp.effect");
  }
  if (node.contains("mediator")) {
    const json& m = node.at("mediator");
    expect_object(m, "dgp.mediator");
    check_keys(m, "dgp.mediator", {"name", "phi", "delta", "theta", "noise_sd"});
    config.mediator.enabled = true;
    read_if(m, "name", config.mediator.name, "dgp.mediator");
    read_if(m, "phi", config.mediator.phi, "dgp.mediator");
    read_if(m, "delta", config.mediator.delta, "dgp.mediator");
    read_if(m, "theta", config.mediator.theta, "dgp.mediator");
    read_if(m, "noise_sd", config.mediator.noise_sd, "dgp.mediator");
  }
  if (node.contains("controls")) {
    for (const json& entry : node.at("controls")) {
      expect_object(entry, "dgp control");
      check_keys(entry, "dgp control",
                 {"name", "mean", "between_sd", "within_sd", "gamma", "selection_beta",
                  "trend_gamma"});
      ControlSpec control;
      control.name = get_as<std::string>(entry.at("name"), "dgp.controls.name");
      read_if(entry, "mean", control.mean, "dgp.controls");
      read_if(entry, "between_sd", control.between_sd, "dgp.controls");
      read_if(entry, "within_sd", control.within_sd, "dgp.controls");
      read_if(entry, "gamma", control.gamma, "dgp.controls");
      read_if(entry, "selection_beta", control.selection_beta, "dgp.controls");
      read_if(entry, "trend_gamma", control.trend_gamma, "dgp.controls");
      config.controls.push_back(std::move(control));
    }
  }
  return config;
}

PipelineConfig parse_config(const json& doc) {
  expect_object(doc, "the top level");
  check_keys(doc, "the top level",
             {"panel_csv", "entity_column", "year_column", "fill_missing", "derived",
              "index", "schedule_csv", "policies", "combined_name", "outcome", "controls",
              "se", "analyses", "event_window", "trim_years", "psm", "placebo",
              "mediation", "heterogeneity", "dgp", "seed", "threads"});
  PipelineConfig cfg;
  read_if(doc, "panel_csv", cfg.panel_csv, "top level");
  read_if(doc, "entity_column", cfg.entity_column, "top level");
  read_if(doc, "year_column", cfg.year_column, "top level");
  read_if(doc, "fill_missing", cfg.fill, "top level");
  if (doc.contains("derived")) cfg.derived = parse_derived(doc.at("derived"));
  if (doc.contains("index")) cfg.index = parse_index(doc.at("index"), cfg.index_scale);
  read_if(doc, "schedule_csv", cfg.schedule_csv, "top level");
  read_if(doc, "policies", cfg.policies, "top level");
  read_if(doc, "combined_name", cfg.combined_name, "top level");
  read_if(doc, "outcome", cfg.outcome, "top level");
  read_if(doc, "controls", cfg.controls, "top level");
  if (doc.contains("se")) cfg.se_type = parse_se(get_as<std::string>(doc.at("se"), "se"));
  read_if(doc, "analyses", cfg.analyses, "top level");
  for (const std::string& name : cfg.analyses)
    if (!kAnalyses.count(name))
      throw ValidationError("config: unknown analysis \"" + name + "\"");
  if (doc.contains("event_window")) {
    const json& w = doc.at("event_window");
    expect_object(w, "event_window");
    check_keys(w, "event_window", {"pre", "post"});
    read_if(w, "pre", cfg.window.pre, "event_window");
    read_if(w, "post", cfg.window.post, "event_window");
  }
  read_if(doc, "trim_years", cfg.trim_years, "top level");
  if (doc.contains("psm")) cfg.psm = parse_psm(doc.at("psm"));
  if (doc.contains("placebo")) cfg.placebo = parse_placebo(doc.at("placebo"));
  if (doc.contains("mediation")) cfg.mediation = parse_mediation(doc.at("mediation"));
  if (doc.contains("heterogeneity"))
    cfg.heterogeneity = parse_heterogeneity(doc.at("heterogeneity"));
  if (doc.contains("dgp")) cfg.dgp = parse_dgp(doc.at("dgp"));
  read_if(doc, "seed", cfg.seed, "top level");
  read_if(doc, "threads", cfg.threads, "top level");
  if (!cfg.policies.empty() && cfg.policies.size() != 2)
    throw ValidationError("config: policies must list exactly two policy names");
  return cfg;
}

// ---------------------------------------------------------------------------
// Input loading.

std::vector<std::string> split_simple(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

DualTreatment load_schedule(const std::string& path, const std::vector<std::string>& policies,
                            const std::string& combined_name) {
  std::ifstream in(path);
  if (!in) throw ValidationError("schedule: cannot open \"" + path + "\"");
  std::string line;
  if (!std::getline(in, line) || split_simple(line) != std::vector<std::string>{
                                                           "entity", "policy", "year"})
    throw ValidationError("schedule: \"" + path +
                          "\" must start with the header entity,policy,year");
  DualTreatment dual;
  dual.first.policy = policies[0];
  dual.second.policy = policies[1];
  dual.combined_name = combined_name;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_simple(line);
    if (fields.size() != 3)
      throw ValidationError("schedule: line " + std::to_string(line_no) +
                            " does not have three fields");
    TreatmentSchedule* schedule = nullptr;
    if (fields[1] == policies[0])
      schedule = &dual.first;
    else if (fields[1] == policies[1])
      schedule = &dual.second;
    else
      throw ValidationError("schedule: line " + std::to_string(line_no) +
                            " names undeclared policy \"" + fields[1] + "\"");
    char* end = nullptr;
    const long year = std::strtol(fields[2].c_str(), &end, 10);
    if (fields[2].empty() || end != fields[2].c_str() + fields[2].size())
      throw ValidationError("schedule: line " + std::to_string(line_no) +
                            " has a non-integer year \"" + fields[2] + "\"");
    if (!schedule->adoption.emplace(fields[0], static_cast<int>(year)).second)
      throw ValidationError("schedule: entity \"" + fields[0] +
                            "\" appears twice for policy \"" + fields[1] + "\"");
  }
  return dual;
}

std::map<std::string, double> load_groups(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("groups: cannot open \"" + path + "\"");
  std::string line;
  if (!std::getline(in, line) ||
      split_simple(line) != std::vector<std::string>{"entity", "group"})
    throw ValidationError("groups: \"" + path +
                          "\" must start with the header entity,group");
  std::map<std::string, double> groups;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_simple(line);
    if (fields.size() != 2)
      throw ValidationError("groups: line " + std::to_string(line_no) +
                            " does not have two fields");
    char* end = nullptr;
    const double label = std::strtod(fields[1].c_str(), &end);
    if (fields[1].empty() || end != fields[1].c_str() + fields[1].size())
      throw ValidationError("groups: line " + std::to_string(line_no) +
                            " has a non-numeric label \"" + fields[1] + "\"");
    if (!groups.emplace(fields[0], label).second)
      throw ValidationError("groups: entity \"" + fields[0] + "\" appears twice");
  }
  return groups;
}

struct LoadedInputs {
  PanelDataset data;
  std::optional<DualTreatment> dual;
  std::optional<IndexWeights> weights;
};

LoadedInputs load_inputs(const PipelineConfig& cfg) {
  if (cfg.panel_csv.empty())
    throw ValidationError("config: panel_csv is required for this command");
  LoadedInputs inputs{load_csv(cfg.panel_csv, cfg.entity_column, cfg.year_column), {}, {}};
  for (const std::string& variable : cfg.fill)
    inputs.data = fill_missing(inputs.data, variable);
  for (const VariableSpec& spec : cfg.derived)
    inputs.data = derive_variable(inputs.data, spec);
  if (cfg.index) {
    PanelDataset standardized = inputs.data;
    for (const IndexIndicator& indicator : cfg.index->indicators)
      standardized = standardize_minmax(standardized, indicator.name, indicator.direction);
    inputs.weights = cfg.index->method == WeightMethod::entropy
                         ? entropy_weights(standardized, *cfg.index)
                         : pca_weights(standardized, *cfg.index);
    standardized = composite_index(standardized, *inputs.weights, cfg.index_scale);
    // The composite lives on the standardized columns; only the new index
    // column is carried back onto the untouched panel.
    inputs.data.add_variable(cfg.index->output_name,
                             standardized.values.at(cfg.index->output_name),
                             standardized.missing.at(cfg.index->output_name));
  }
  if (cfg.mediation && cfg.mediation->construct)
    inputs.data = mediator_construction(inputs.data, cfg.mediation->sources);
  if (!cfg.schedule_csv.empty()) {
    if (cfg.policies.size() != 2)
      throw ValidationError("config: policies must list exactly two names when "
                            "schedule_csv is set");
    inputs.dual = load_schedule(cfg.schedule_csv, cfg.policies, cfg.combined_name);
  }
  return inputs;
}

// ---------------------------------------------------------------------------
// Analyses. Each one appends (filename, content) artifacts and a one-line
// summary; nothing touches the filesystem until the whole run succeeds.

struct RunContext {
  const PipelineConfig& cfg;
  LoadedInputs inputs;
  std::vector<std::pair<std::string, std::string>> artifacts;
  std::vector<std::string> notes;

  void add(const std::string& name, const std::string& content) {
    artifacts.emplace_back(name, content);
  }
};

const DualTreatment& need_dual(const RunContext& ctx) {
  if (!ctx.inputs.dual)
    throw ValidationError("config: schedule_csv and policies are required");
  return *ctx.inputs.dual;
}

DidOptions did_options(const PipelineConfig& cfg) {
  if (cfg.outcome.empty()) throw ValidationError("config: outcome is required");
  DidOptions options;
  options.outcome = cfg.outcome;
  options.se_type = cfg.se_type;
  return options;
}

std::string coefficient_note(const std::string& analysis, const Coefficient& coef) {
  return analysis + ": " + coef.name + " = " + format_number_prec(coef.estimate, 6) +
         " (se " + format_number_prec(coef.se, 6) + ", p " +
         format_number_prec(coef.p_value, 4) + ")";
}

void run_build_index(RunContext& ctx) {
  if (!ctx.cfg.index)
    throw ValidationError("config: an index section is required");
  ctx.add("index_weights.csv", render_index_weights_csv(*ctx.inputs.weights));
  std::ostringstream panel;
  write_csv(ctx.inputs.data, panel, ctx.cfg.entity_column, ctx.cfg.year_column);
  ctx.add("panel_indexed.csv", panel.str());
  ctx.notes.push_back("build-index: " + ctx.cfg.index->output_name + " over " +
                      std::to_string(ctx.cfg.index->indicators.size()) + " indicators");
}

void run_baseline(RunContext& ctx) {
  const DualTreatment& dual = need_dual(ctx);
  const RegressionResult result =
      did_baseline(ctx.inputs.data, dual, ctx.cfg.controls, did_options(ctx.cfg));
  ctx.add("did_baseline.csv", render_regression_csv(result));
  ctx.add("did_baseline.txt", render_regression_table(result, "baseline DID"));
  ctx.notes.push_back(coefficient_note("baseline", result.coef(dual.combined_name)));
}

void run_trim(RunContext& ctx) {
  if (ctx.cfg.trim_years.empty())
    throw ValidationError("config: trim_years is required");
  const DualTreatment& dual = need_dual(ctx);
  const PanelDataset trimmed = trim_sample(ctx.inputs.data, ctx.cfg.trim_years);
  const RegressionResult result =
      did_baseline(trimmed, dual, ctx.cfg.controls, did_options(ctx.cfg));
  ctx.add("did_trimmed.csv", render_regression_csv(result));
  ctx.add("did_trimmed.txt", render_regression_table(result, "trimmed-years DID"));
  ctx.notes.push_back(coefficient_note("trim", result.coef(dual.combined_name)));
}

void run_event_study(RunContext& ctx) {
  const DualTreatment& dual = need_dual(ctx);
  const EventStudyResult result = event_study(ctx.inputs.data, dual, ctx.cfg.window,
                                              ctx.cfg.controls, did_options(ctx.cfg));
  ctx.add("event_study.csv", render_event_study_csv(result));
  ctx.add("event_study.txt",
          render_regression_table(result.regression, "event-study regression"));
  ctx.notes.push_back("event-study: " + std::to_string(result.bins.size()) +
                      " bins, reference " + result.reference_label);
}

void run_psm(RunContext& ctx, PropensityMode mode) {
  if (!ctx.cfg.psm) throw ValidationError("config: a psm section is required");
  const DualTreatment& dual = need_dual(ctx);
  const std::string prefix =
      mode == PropensityMode::pooled ? "psm_pooled" : "psm_yearly";
  const PanelDataset with_dummies = build_treatment_dummies(ctx.inputs.data, dual);
  const PropensityModel model = fit_propensity(with_dummies, dual.combined_name,
                                               ctx.cfg.psm->covariates, mode);
  MatchOptions options = ctx.cfg.psm->options;
  options.mode = mode;
  const MatchedSample matched = match_nearest(model, options);
  ctx.add(prefix + "_matches.csv", render_matched_sample_csv(matched));
  ctx.add(prefix + "_exclusions.csv", render_exclusions_csv(matched));

  const BalanceReport balance =
      balance_report(with_dummies, matched, ctx.cfg.psm->covariates);
  ctx.add(prefix + "_balance.csv", render_balance_csv(balance));
  std::string balance_text = render_balance_table(balance);
  for (const auto& [year, reason] : model.skipped_years)
    balance_text += "skipped year " + std::to_string(year) + ": " + reason + '\n';
  ctx.add(prefix + "_balance.txt", balance_text);

  std::vector<double> treated_scores;
  std::vector<double> control_scores;
  for (Eigen::Index r = 0; r < model.scores.rows(); ++r)
    for (Eigen::Index c = 0; c < model.scores.cols(); ++c) {
      if (!model.valid(r, c)) continue;
      (model.treated(r, c) ? treated_scores : control_scores).push_back(model.scores(r, c));
    }
  ctx.add(prefix + "_density_treated.csv",
          render_density_csv(kernel_density(treated_scores, Kernel::gaussian)));
  ctx.add(prefix + "_density_control.csv",
          render_density_csv(kernel_density(control_scores, Kernel::gaussian)));

  const RegressionResult result =
      psm_did(ctx.inputs.data, dual, matched, ctx.cfg.controls, did_options(ctx.cfg));
  ctx.add(prefix + "_did.csv", render_regression_csv(result));
  ctx.add(prefix + "_did.txt", render_regression_table(result, prefix + " DID"));
  ctx.notes.push_back(coefficient_note(prefix, result.coef(dual.combined_name)));
}

void run_placebo(RunContext& ctx) {
  const DualTreatment& dual = need_dual(ctx);
  PlaceboConfig config = ctx.cfg.placebo;
  config.seed = ctx.cfg.seed;
  config.threads = ctx.cfg.threads;
  const PlaceboResult result =
      placebo_test(ctx.inputs.data, dual, ctx.cfg.controls, did_options(ctx.cfg), config);
  ctx.add("placebo_draws.csv", render_placebo_csv(result));
  ctx.add("placebo_density.csv", render_density_csv(result.density));

  double sum = 0.0;
  double sum_sq = 0.0;
  long valid = 0;
  long above_010 = 0;
  for (std::size_t r = 0; r < result.betas.size(); ++r) {
    if (std::isnan(result.betas[r])) continue;
    ++valid;
    sum += result.betas[r];
    sum_sq += result.betas[r] * result.betas[r];
    if (result.p_values[r] > 0.10) ++above_010;
  }
  const double mean = valid > 0 ? sum / static_cast<double>(valid) : 0.0;
  const double var =
      valid > 1 ? (sum_sq - static_cast<double>(valid) * mean * mean) /
                      static_cast<double>(valid - 1)
                : 0.0;
  json summary{{"replications", config.replications},
               {"valid", valid},
               {"flagged", result.flagged.size()},
               {"actual_beta", result.actual_beta},
               {"actual_p", result.actual_p},
               {"rank", result.rank},
               {"percentile", result.percentile},
               {"mean_beta", mean},
               {"sd_beta", var > 0.0 ? std::sqrt(var) : 0.0},
               {"p_above_0.10", above_010}};
  ctx.add("placebo_summary.json", summary.dump(2) + '\n');
  ctx.notes.push_back("placebo: actual beta " +
                      format_number_prec(result.actual_beta, 6) + " at percentile " +
                      format_number_prec(result.percentile, 4));
}

void run_mediation(RunContext& ctx) {
  if (!ctx.cfg.mediation)
    throw ValidationError("config: a mediation section is required");
  const DualTreatment& dual = need_dual(ctx);
  MediationOptions options;
  options.outcome = ctx.cfg.outcome;
  if (options.outcome.empty()) throw ValidationError("config: outcome is required");
  options.se_type = ctx.cfg.se_type;
  options.significance_level = ctx.cfg.mediation->significance_level;
  for (const std::string& mediator : ctx.cfg.mediation->mediators) {
    const MediationResult result =
        mediation_analysis(ctx.inputs.data, dual, mediator, ctx.cfg.controls, options);
    ctx.add("mediation_" + mediator + ".txt", render_mediation_table(result, mediator));
    json doc{{"mediator", mediator},
             {"phi", {{"estimate", result.phi.estimate},
                      {"se", result.phi.se},
                      {"p_value", result.phi.p_value}}},
             {"theta", {{"estimate", result.theta.estimate},
                        {"se", result.theta.se},
                        {"p_value", result.theta.p_value}}},
             {"delta", {{"estimate", result.delta.estimate},
                        {"se", result.delta.se},
                        {"p_value", result.delta.p_value}}},
             {"share_valid", result.share_valid},
             {"verdict", result.verdict}};
    doc["share"] = result.share_valid ? json(result.share) : json(nullptr);
    ctx.add("mediation_" + mediator + ".json", doc.dump(2) + '\n');
    ctx.notes.push_back("mediation " + mediator + ": " + result.verdict);
  }
}

void run_heterogeneity(RunContext& ctx) {
  if (!ctx.cfg.heterogeneity)
    throw ValidationError("config: a heterogeneity section is required");
  const DualTreatment& dual = need_dual(ctx);
  const std::map<std::string, double> groups =
      load_groups(ctx.cfg.heterogeneity->group_csv);
  PanelDataset data = build_treatment_dummies(ctx.inputs.data, dual);
  Eigen::MatrixXd labels(data.n_entities(), data.n_years());
  for (Eigen::Index r = 0; r < data.n_entities(); ++r) {
    const auto it = groups.find(data.entities[static_cast<std::size_t>(r)]);
    if (it == groups.end())
      throw ValidationError("groups: entity \"" +
                            data.entities[static_cast<std::size_t>(r)] +
                            "\" has no group label");
    labels.row(r).setConstant(it->second);
  }
  data.add_variable(ctx.cfg.heterogeneity->group_name, labels,
                    MaskMatrix::Constant(data.n_entities(), data.n_years(), false));

  RegressionSpec spec;
  spec.outcome = ctx.cfg.outcome;
  if (spec.outcome.empty()) throw ValidationError("config: outcome is required");
  spec.regressors.push_back(dual.combined_name);
  spec.regressors.insert(spec.regressors.end(), ctx.cfg.controls.begin(),
                         ctx.cfg.controls.end());
  spec.effects = {true, true};
  spec.se_type = ctx.cfg.se_type;
  const SubgroupResults results =
      subgroup_regressions(data, spec, ctx.cfg.heterogeneity->group_name);

  std::string csv = "group,term,estimate,se,t_stat,p_value,stars\n";
  std::string text;
  for (const auto& [label, result] : results.groups) {
    for (const auto& coef : result.coefficients)
      csv += format_number(label) + ',' + coef.name + ',' +
             format_number(coef.estimate) + ',' + format_number(coef.se) + ',' +
             format_number(coef.t_stat) + ',' + format_number(coef.p_value) + ',' +
             significance_stars(coef.p_value) + '\n';
    text += render_regression_table(result, "group " + format_number(label)) + '\n';
  }
  for (const auto& [label, reason] : results.skipped)
    text += "group " + format_number(label) + " skipped: " + reason + '\n';
  ctx.add("heterogeneity.csv", csv);
  ctx.add("heterogeneity.txt", text);
  ctx.notes.push_back("heterogeneity: " + std::to_string(results.groups.size()) +
                      " groups estimated, " + std::to_string(results.skipped.size()) +
                      " skipped");
}

void run_simulate(RunContext& ctx) {
  if (!ctx.cfg.dgp) throw ValidationError("config: a dgp section is required");
  DgpConfig config = *ctx.cfg.dgp;
  config.seed = ctx.cfg.seed;
  const DgpResult result = generate(config);

  std::ostringstream panel;
  write_csv(result.data, panel, ctx.cfg.entity_column, ctx.cfg.year_column);
  ctx.add("panel.csv", panel.str());

  std::string schedule = "entity,policy,year\n";
  for (const auto& [entity, year] : result.dual.first.adoption)
    schedule += entity + ',' + result.dual.first.policy + ',' + std::to_string(year) + '\n';
  for (const auto& [entity, year] : result.dual.second.adoption)
    schedule += entity + ',' + result.dual.second.policy + ',' + std::to_string(year) + '\n';
  ctx.add("schedule.csv", schedule);

  json truth{{"outcome", config.outcome_name},
             {"entities", config.n_entities},
             {"years", config.n_years},
             {"first_year", config.first_year},
             {"seed", config.seed},
             {"policies", {result.dual.first.policy, result.dual.second.policy}},
             {"effect",
              {{"constant", config.effect.constant},
               {"dynamic_path", config.effect.dynamic_path},
               {"pre_trend_slope", config.effect.pre_trend_slope}}},
             {"adoption", result.adoption},
             {"treated", result.treated}};
  if (config.mediator.enabled)
    truth["mediator"] = {{"name", config.mediator.name},
                         {"phi", config.mediator.phi},
                         {"delta", config.mediator.delta},
                         {"theta", config.mediator.theta}};
  json controls = json::array();
  for (const ControlSpec& control : config.controls)
    controls.push_back({{"name", control.name},
                        {"gamma", control.gamma},
                        {"selection_beta", control.selection_beta},
                        {"trend_gamma", control.trend_gamma}});
  truth["controls"] = controls;
  ctx.add("truth.json", truth.dump(2) + '\n');
  ctx.notes.push_back("simulate: " + std::to_string(result.treated.size()) +
                      " treated of " + std::to_string(config.n_entities) + " entities");
}

void run_analysis(RunContext& ctx, const std::string& name) {
  try {
    if (name == "build-index")
      run_build_index(ctx);
    else if (name == "baseline")
      run_baseline(ctx);
    else if (name == "event-study")
      run_event_study(ctx);
    else if (name == "trim")
      run_trim(ctx);
    else if (name == "psm-did-pooled")
      run_psm(ctx, PropensityMode::pooled);
    else if (name == "psm-did-yearly")
      run_psm(ctx, PropensityMode::per_year);
    else if (name == "placebo")
      run_placebo(ctx);
    else if (name == "mediation")
      run_mediation(ctx);
    else if (name == "heterogeneity")
      run_heterogeneity(ctx);
    else
      throw ValidationError("config: unknown analysis \"" + name + "\"");
  } catch (const ValidationError& e) {
    throw ValidationError("analysis \"" + name + "\": " + e.what());
  } catch (const EstimationError& e) {
    throw EstimationError("analysis \"" + name + "\": " + e.what());
  }
}

void flush_artifacts(const RunContext& ctx, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw ValidationError("output: cannot create directory \"" + out_dir + "\": " +
                          ec.message());
  Manifest manifest;
  for (const auto& [name, content] : ctx.artifacts) {
    write_text_file((fs::path(out_dir) / name).string(), content);
    manifest.add(name, content);
  }
  write_text_file((fs::path(out_dir) / "manifest.json").string(),
                  render_manifest_json(manifest));
  for (const std::string& note : ctx.notes) std::cout << note << '\n';
  std::cout << "wrote " << ctx.artifacts.size() << " artifacts to " << out_dir << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panel policy evaluation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string se_flag;
  std::uint64_t seed_flag = 0;
  int threads_flag = 1;
  auto* config_opt =
      app.add_option("--config", config_path, "JSON pipeline configuration")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed_flag, "override the config seed");
  auto* se_opt = app.add_option("--se", se_flag, "standard errors")
                     ->check(CLI::IsMember({"classical", "robust", "cluster"}));
  auto* threads_opt =
      app.add_option("--threads", threads_flag, "worker threads for replication loops");
  (void)config_opt;
  (void)out_opt;

  const std::vector<std::pair<std::string, std::string>> subcommands = {
      {"simulate", "generate a synthetic panel with planted truths"},
      {"build-index", "construct the composite index and its weights"},
      {"did", "baseline two-way fixed-effects DID"},
      {"event-study", "relative-time event study"},
      {"psm-did", "propensity-matched DID, pooled and per-year"},
      {"placebo", "randomization inference for the baseline"},
      {"mediate", "mediation decomposition"},
      {"run", "every analysis listed in the config"}};
  for (const auto& [name, description] : subcommands)
    app.add_subcommand(name, description)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    std::ifstream in(config_path);
    if (!in) throw ValidationError("config: cannot open \"" + config_path + "\"");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError("config: " + std::string(e.what()));
    }
    PipelineConfig cfg = parse_config(doc);
    if (seed_opt->count()) cfg.seed = seed_flag;
    if (se_opt->count()) cfg.se_type = parse_se(se_flag);
    if (threads_opt->count()) cfg.threads = threads_flag;
    if (cfg.threads < 1)
      throw ValidationError("config: threads must be at least 1");

    std::vector<std::string> analyses;
    bool simulate = false;
    if (app.got_subcommand("simulate"))
      simulate = true;
    else if (app.got_subcommand("build-index"))
      analyses = {"build-index"};
    else if (app.got_subcommand("did"))
      analyses = {"baseline"};
    else if (app.got_subcommand("event-study"))
      analyses = {"event-study"};
    else if (app.got_subcommand("psm-did"))
      analyses = {"psm-did-pooled", "psm-did-yearly"};
    else if (app.got_subcommand("placebo"))
      analyses = {"placebo"};
    else if (app.got_subcommand("mediate"))
      analyses = {"mediation"};
    else if (app.got_subcommand("run")) {
      if (cfg.analyses.empty())
        throw ValidationError("config: analyses is required by the run command");
      analyses = cfg.analyses;
    }

    if (simulate) {
      RunContext ctx{cfg, LoadedInputs{}};
      try {
        run_simulate(ctx);
      } catch (const ValidationError& e) {
        throw ValidationError("analysis \"simulate\": " + std::string(e.what()));
      } catch (const EstimationError& e) {
        throw EstimationError("analysis \"simulate\": " + std::string(e.what()));
      }
      flush_artifacts(ctx, out_dir);
    } else {
      RunContext ctx{cfg, load_inputs(cfg)};
      for (const std::string& name : analyses) run_analysis(ctx, name);
      flush_artifacts(ctx, out_dir);
    }
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const EstimationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
