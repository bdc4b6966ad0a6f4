#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <set>
#include <unistd.h>

#include "paneldid/dgp.hpp"
#include "paneldid/errors.hpp"
#include "paneldid/mediation.hpp"

using namespace paneldid;

TEST_CASE("noiseless generation recovers the planted effect exactly") {
  DgpConfig config;
  config.n_entities = 30;
  config.n_years = 8;
  config.noise_sd = 0.0;
  config.treatment.treated_count = 12;
  config.effect.constant = 2.0;
  config.seed = 5;
  const DgpResult dgp = generate(config);

  DidOptions options;
  options.outcome = "y";
  const RegressionResult fit = did_baseline(dgp.data, dgp.dual, {}, options);
  CHECK(fit.coef("dual_treat").estimate == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(static_cast<int>(dgp.treated.size()) == 12);
}

TEST_CASE("the same seed generates bit-identical panels") {
  DgpConfig config;
  config.n_entities = 25;
  config.n_years = 6;
  config.treatment.treated_count = 10;
  config.effect.constant = 1.0;
  ControlSpec x;
  x.name = "x";
  x.mean = 1.0;
  x.gamma = 0.7;
  config.controls.push_back(x);
  config.seed = 99;
  const DgpResult a = generate(config);
  const DgpResult b = generate(config);
  CHECK(a.data.values.at("y") == b.data.values.at("y"));
  CHECK(a.data.values.at("x") == b.data.values.at("x"));
  CHECK(a.adoption == b.adoption);
}

TEST_CASE("selection on covariates raises treated covariate means") {
  DgpConfig config;
  config.n_entities = 200;
  config.n_years = 6;
  config.treatment.rule = TreatmentRule::selection_on_covariates;
  config.treatment.selection_intercept = -0.5;
  ControlSpec x;
  x.name = "x";
  x.selection_beta = 1.2;
  config.controls.push_back(x);
  config.seed = 12;
  const DgpResult dgp = generate(config);
  REQUIRE(dgp.treated.size() >= 20);
  REQUIRE(dgp.treated.size() <= 180);

  double treated_mean = 0.0, control_mean = 0.0;
  long nt = 0, nc = 0;
  std::set<std::string> treated(dgp.treated.begin(), dgp.treated.end());
  const Eigen::MatrixXd& cells = dgp.data.var("x");
  for (Eigen::Index r = 0; r < cells.rows(); ++r) {
    const bool is_treated = treated.count(dgp.data.entities[static_cast<std::size_t>(r)]) > 0;
    for (Eigen::Index c = 0; c < cells.cols(); ++c) {
      if (is_treated) {
        treated_mean += cells(r, c);
        ++nt;
      } else {
        control_mean += cells(r, c);
        ++nc;
      }
    }
  }
  treated_mean /= static_cast<double>(nt);
  control_mean /= static_cast<double>(nc);
  CHECK(treated_mean - control_mean > 0.3);
}

TEST_CASE("generated panels survive a CSV round trip") {
  DgpConfig config;
  config.n_entities = 12;
  config.n_years = 5;
  config.treatment.treated_count = 5;
  config.effect.constant = 0.8;
  ControlSpec x;
  x.name = "x";
  x.gamma = 0.4;
  config.controls.push_back(x);
  config.seed = 3;
  const DgpResult dgp = generate(config);

  char path[] = "/tmp/dgp_roundtrip_XXXXXX";
  const int fd = mkstemp(path);
  REQUIRE(fd >= 0);
  close(fd);
  write_csv(dgp.data, path, "city", "year");
  const PanelDataset back = load_csv(path, "city", "year");
  unlink(path);
  CHECK(back.entities == dgp.data.entities);
  CHECK(back.years == dgp.data.years);
  CHECK(back.values.at("y") == dgp.data.values.at("y"));
  CHECK(back.values.at("x") == dgp.data.values.at("x"));
}

TEST_CASE("dynamic paths and pre-trends shape the event study as planted") {
  DgpConfig config;
  config.n_entities = 40;
  config.n_years = 10;
  config.noise_sd = 0.0;
  config.treatment.treated_count = 16;
  config.treatment.adopt_from = 2014;
  config.treatment.adopt_to = 2016;
  config.effect.dynamic_path = {1.0, 2.0, 3.0};
  config.seed = 8;
  const DgpResult dgp = generate(config);

  DidOptions options;
  options.outcome = "y";
  options.se_type = SeType::classical;
  const EventStudyResult es = event_study(dgp.data, dgp.dual, EventWindow{2, 6}, {}, options);
  for (const EventBin& bin : es.bins) {
    if (bin.reference || bin.dropped) continue;
    if (bin.rel < 0) CHECK(std::fabs(bin.coefficient) < 1e-8);
    if (bin.rel == 0) CHECK(bin.coefficient == doctest::Approx(1.0).epsilon(1e-8));
    if (bin.rel == 1) CHECK(bin.coefficient == doctest::Approx(2.0).epsilon(1e-8));
    if (bin.rel >= 2 && bin.rel <= 5)
      CHECK(bin.coefficient == doctest::Approx(3.0).epsilon(1e-8));
  }

  // A single adoption year keeps the pooled lead bin homogeneous, so the
  // planted linear pre-trend is identified exactly.
  DgpConfig trending = config;
  trending.effect.pre_trend_slope = 0.5;
  trending.treatment.adopt_from = 2014;
  trending.treatment.adopt_to = 2014;
  const DgpResult dgp2 = generate(trending);
  const EventStudyResult es2 =
      event_study(dgp2.data, dgp2.dual, EventWindow{2, 6}, {}, options);
  for (const EventBin& bin : es2.bins) {
    if (bin.reference || bin.dropped || bin.rel >= 0) continue;
    // Planted level 0.5*rel, measured against the reference at rel=-1.
    const double expected = 0.5 * bin.rel - 0.5 * (-1.0);
    CHECK(bin.coefficient == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("the mediator channel feeds the mediation pipeline") {
  DgpConfig config;
  config.n_entities = 60;
  config.n_years = 8;
  config.noise_sd = 0.05;
  config.entity_fe_sd = 1.0;
  config.treatment.treated_count = 25;
  config.mediator.enabled = true;
  config.mediator.phi = 0.8;
  config.mediator.delta = 2.0;
  config.mediator.theta = 1.5;
  config.mediator.noise_sd = 0.05;
  config.seed = 44;
  const DgpResult dgp = generate(config);

  MediationOptions options;
  options.outcome = "y";
  const MediationResult result =
      mediation_analysis(dgp.data, dgp.dual, "m", {}, options);
  CHECK(result.phi.estimate == doctest::Approx(0.8).epsilon(0.05));
  CHECK(result.delta.estimate == doctest::Approx(2.0).epsilon(0.05));
  CHECK(result.theta.estimate == doctest::Approx(1.5).epsilon(0.05));
  CHECK(result.verdict == "partial mediation");
}

TEST_CASE("bad configurations are rejected") {
  DgpConfig config;
  config.n_entities = 1;
  CHECK_THROWS_AS(generate(config), ValidationError);
  config.n_entities = 10;
  config.noise_sd = -1.0;
  CHECK_THROWS_AS(generate(config), ValidationError);
  config.noise_sd = 1.0;
  config.treatment.treated_count = 11;
  CHECK_THROWS_AS(generate(config), ValidationError);
  config.treatment.treated_count = 3;
  config.treatment.adopt_from = 1999;
  config.treatment.adopt_to = 2000;
  CHECK_THROWS_AS(generate(config), ValidationError);
}
