#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "paneldid/did.hpp"
#include "paneldid/errors.hpp"
#include "paneldid/rng.hpp"
#include "test_helpers.hpp"

using namespace paneldid;
using testutil::make_panel;

namespace {

std::vector<int> year_span(int first, int last) {
  std::vector<int> years;
  for (int y = first; y <= last; ++y) years.push_back(y);
  return years;
}

// Additive noiseless panel: y = entity effect + year effect + planted
// dynamic effect from the adoption year onward.
PanelDataset dynamic_panel(const DualTreatment& dual,
                           const std::vector<std::string>& entities, int first_year,
                           int last_year, double (*effect_at)(int rel)) {
  const auto ne = static_cast<Eigen::Index>(entities.size());
  const auto ny = static_cast<Eigen::Index>(last_year - first_year + 1);
  Eigen::MatrixXd y(ne, ny);
  for (Eigen::Index r = 0; r < ne; ++r) {
    const auto adopted = dual.effective_adoption(entities[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < ny; ++c) {
      const int year = first_year + static_cast<int>(c);
      double value = 3.0 * static_cast<double>(r) + 0.7 * static_cast<double>(c);
      if (adopted) value += effect_at(year - *adopted);
      y(r, c) = value;
    }
  }
  return make_panel(entities, year_span(first_year, last_year), {{"y", y}});
}

DualTreatment two_policy(const std::map<std::string, int>& first,
                         const std::map<std::string, int>& second) {
  DualTreatment dual;
  dual.first = {"alpha", first};
  dual.second = {"beta", second};
  return dual;
}

}  // namespace

TEST_CASE("combined dummy follows the later of the two adoption years") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, 10);
  const PanelDataset data = make_panel({"A", "B"}, year_span(2011, 2020), {{"y", y}});
  const DualTreatment dual = two_policy({{"A", 2013}}, {{"A", 2015}});
  const PanelDataset out = build_treatment_dummies(data, dual);
  for (Eigen::Index c = 0; c < 10; ++c) {
    const int year = 2011 + static_cast<int>(c);
    CHECK(out.var("alpha_treat")(0, c) == (year >= 2013 ? 1.0 : 0.0));
    CHECK(out.var("beta_treat")(0, c) == (year >= 2015 ? 1.0 : 0.0));
    CHECK(out.var("dual_treat")(0, c) == (year >= 2015 ? 1.0 : 0.0));
    CHECK(out.var("dual_treat")(1, c) == 0.0);
  }
}

TEST_CASE("a single policy never makes a dual treatment") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 4);
  const PanelDataset data = make_panel({"A"}, year_span(2011, 2014), {{"y", y}});
  const PanelDataset out =
      build_treatment_dummies(data, two_policy({{"A", 2012}}, {}));
  CHECK(out.var("dual_treat").cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.var("alpha_treat").sum() == 3.0);
}

TEST_CASE("adoption in the first panel year treats every observation") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 4);
  const PanelDataset data = make_panel({"A"}, year_span(2011, 2014), {{"y", y}});
  const PanelDataset out =
      build_treatment_dummies(data, two_policy({{"A", 2011}}, {{"A", 2011}}));
  CHECK(out.var("dual_treat").minCoeff() == 1.0);
}

TEST_CASE("schedules referencing unknown entities or late years are rejected") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 4);
  const PanelDataset data = make_panel({"A"}, year_span(2011, 2014), {{"y", y}});
  CHECK_THROWS_WITH_AS(
      build_treatment_dummies(data, two_policy({{"Z", 2012}}, {})),
      doctest::Contains("unknown entity \"Z\""), ValidationError);
  CHECK_THROWS_WITH_AS(
      build_treatment_dummies(data, two_policy({{"A", 2019}}, {})),
      doctest::Contains("after the panel ends"), ValidationError);
}

TEST_CASE("treatment dummies are monotone non-decreasing in time") {
  Rng rng(404);
  std::vector<std::string> entities;
  for (int i = 0; i < 12; ++i)
    entities.push_back("E" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(12, 8);
  const PanelDataset data = make_panel(entities, year_span(2011, 2018), {{"y", y}});
  std::map<std::string, int> first, second;
  for (const std::string& e : entities) {
    if (rng.uniform() < 0.7) first[e] = static_cast<int>(rng.uniform_int(2011, 2018));
    if (rng.uniform() < 0.7) second[e] = static_cast<int>(rng.uniform_int(2011, 2018));
  }
  const PanelDataset out = build_treatment_dummies(data, two_policy(first, second));
  for (const std::string& var : {"alpha_treat", "beta_treat", "dual_treat"}) {
    const Eigen::MatrixXd& m = out.var(var);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 1; c < m.cols(); ++c) CHECK(m(r, c) >= m(r, c - 1));
  }
}

TEST_CASE("did baseline recovers a constant effect exactly on noiseless data") {
  const DualTreatment dual =
      two_policy({{"A", 2014}, {"B", 2016}}, {{"A", 2014}, {"B", 2016}});
  const PanelDataset data =
      dynamic_panel(dual, {"A", "B", "C", "D"}, 2011, 2020,
                    [](int rel) { return rel >= 0 ? 2.0 : 0.0; });
  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  const RegressionResult result = did_baseline(data, dual, {}, options);
  CHECK(result.coef("dual_treat").estimate == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(result.n_obs == 40);
}

TEST_CASE("event study recovers planted dynamics exactly on noiseless data") {
  const DualTreatment dual =
      two_policy({{"A", 2015}, {"B", 2017}}, {{"A", 2015}, {"B", 2017}});
  const PanelDataset data = dynamic_panel(dual, {"A", "B", "C", "D"}, 2011, 2020,
                                          [](int rel) {
                                            return rel >= 0 ? static_cast<double>(rel + 1)
                                                            : 0.0;
                                          });
  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  const EventStudyResult result =
      event_study(data, dual, EventWindow{2, 6}, {}, options);

  CHECK(result.reference_label == "Before_0");
  long covered = 0;
  for (const EventBin& bin : result.bins) {
    covered += bin.n_obs;
    if (bin.reference) {
      CHECK(bin.coefficient == 0.0);
      continue;
    }
    if (bin.dropped) continue;
    if (bin.rel < 0) CHECK(std::fabs(bin.coefficient) < 1e-8);
    if (bin.rel >= 0 && bin.rel <= 5)
      CHECK(bin.coefficient == doctest::Approx(static_cast<double>(bin.rel + 1)).epsilon(1e-8));
    CHECK(bin.ci_low <= bin.coefficient);
    CHECK(bin.ci_high >= bin.coefficient);
  }
  // Bins partition the treated observations exactly once.
  CHECK(covered == 20);

  // Outer post bins get no data here: A reaches rel 5, B reaches rel 3.
  for (const EventBin& bin : result.bins)
    if (bin.label == "After_5" || bin.label == "After_6") CHECK(bin.dropped);
}

TEST_CASE("event study pools distant leads into the endpoint bin") {
  const DualTreatment dual = two_policy({{"A", 2018}}, {{"A", 2018}});
  const PanelDataset data = dynamic_panel(dual, {"A", "B"}, 2011, 2020,
                                          [](int rel) { return rel >= 0 ? 1.0 : 0.0; });
  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  const EventStudyResult result =
      event_study(data, dual, EventWindow{2, 6}, {}, options);
  for (const EventBin& bin : result.bins) {
    if (bin.label == "Before_2") CHECK(bin.n_obs == 5);  // rel -7..-3 pooled
    if (bin.label == "Before_1") CHECK(bin.n_obs == 1);
    if (bin.label == "Current") CHECK(bin.n_obs == 1);
  }
}

TEST_CASE("event study requires at least one treated entity") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Random(2, 6);
  const PanelDataset data = make_panel({"A", "B"}, year_span(2011, 2016), {{"y", y}});
  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  CHECK_THROWS_WITH_AS(
      event_study(data, two_policy({}, {}), EventWindow{2, 6}, {}, options),
      doctest::Contains("no treated entities"), ValidationError);
}

TEST_CASE("estimates are invariant to shifting all years by a constant") {
  const DualTreatment dual =
      two_policy({{"A", 2014}, {"B", 2016}}, {{"A", 2014}, {"B", 2016}});
  const PanelDataset data =
      dynamic_panel(dual, {"A", "B", "C", "D"}, 2011, 2020,
                    [](int rel) { return rel >= 0 ? 1.5 + 0.3 * rel : 0.0; });

  DualTreatment shifted = dual;
  for (auto& [entity, year] : shifted.first.adoption) year += 7;
  for (auto& [entity, year] : shifted.second.adoption) year += 7;
  PanelDataset data_shifted = data;
  for (int& year : data_shifted.years) year += 7;

  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  const RegressionResult a = did_baseline(data, dual, {}, options);
  const RegressionResult b = did_baseline(data_shifted, shifted, {}, options);
  CHECK(a.coef("dual_treat").estimate ==
        doctest::Approx(b.coef("dual_treat").estimate).epsilon(1e-12));

  const EventStudyResult ea = event_study(data, dual, EventWindow{2, 6}, {}, options);
  const EventStudyResult eb =
      event_study(data_shifted, shifted, EventWindow{2, 6}, {}, options);
  REQUIRE(ea.bins.size() == eb.bins.size());
  for (std::size_t i = 0; i < ea.bins.size(); ++i)
    CHECK(ea.bins[i].coefficient == doctest::Approx(eb.bins[i].coefficient).epsilon(1e-12));
}

TEST_CASE("a pure year shock leaves FE-absorbed coefficients unchanged") {
  const DualTreatment dual =
      two_policy({{"A", 2014}, {"B", 2016}}, {{"A", 2014}, {"B", 2016}});
  PanelDataset data = dynamic_panel(dual, {"A", "B", "C", "D"}, 2011, 2020,
                                    [](int rel) { return rel >= 0 ? 2.0 : 0.0; });
  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  const double before = did_baseline(data, dual, {}, options).coef("dual_treat").estimate;
  data.values.at("y").col(5).array() += 5.0;  // same shock to every entity in 2016
  const double after = did_baseline(data, dual, {}, options).coef("dual_treat").estimate;
  CHECK(std::fabs(after - before) < 1e-8);
}

TEST_CASE("trim_sample drops a prefix of years and keeps balance") {
  Eigen::MatrixXd y(1, 10);
  y << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const PanelDataset data = make_panel({"A"}, year_span(2011, 2020), {{"y", y}});
  const PanelDataset trimmed = trim_sample(data, {2011, 2012, 2013});
  CHECK(trimmed.years == year_span(2014, 2020));
  CHECK(trimmed.var("y")(0, 0) == 3.0);
  CHECK(trimmed.var("y")(0, 6) == 9.0);

  const PanelDataset untouched = trim_sample(data, {});
  CHECK(untouched.years == data.years);

  CHECK_THROWS_WITH_AS(trim_sample(data, {2015}),
                       doctest::Contains("not consecutive"), ValidationError);
  CHECK_THROWS_WITH_AS(trim_sample(data, year_span(2011, 2020)),
                       doctest::Contains("dropping every year"), ValidationError);
}

TEST_CASE("did estimate survives year trimming on noiseless data") {
  const DualTreatment dual =
      two_policy({{"A", 2015}, {"B", 2017}}, {{"A", 2015}, {"B", 2017}});
  const PanelDataset data =
      dynamic_panel(dual, {"A", "B", "C", "D"}, 2011, 2020,
                    [](int rel) { return rel >= 0 ? 2.0 : 0.0; });
  const PanelDataset trimmed = trim_sample(data, {2011, 2012, 2013});
  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  const RegressionResult result = did_baseline(trimmed, dual, {}, options);
  CHECK(result.coef("dual_treat").estimate == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(result.n_obs == 28);
}
