#include "paneldid/report.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "paneldid/errors.hpp"

using namespace paneldid;

namespace {

RegressionResult toy_result() {
  RegressionResult result;
  result.coefficients = {{"dual_treat", 2.2347, 0.5, 4.4694, 0.0001},
                         {"x1", -0.25, 0.1, -2.5, 0.02},
                         {"const", 1.0, 0.3, 3.3333, 0.001}};
  result.dropped = {"x2"};
  result.r2_within = 0.42;
  result.r2_overall = 0.9;
  result.n_obs = 120;
  result.n_entities = 12;
  result.n_clusters = 12;
  result.se_type = SeType::cluster_by_entity;
  result.effects = {true, true};
  return result;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("format_number emits the shortest round-trip form") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(2.2347) == "2.2347");
  CHECK(format_number(-3.0) == "-3");
  CHECK(format_number(0.0) == "0");
  const double third = 1.0 / 3.0;
  CHECK(std::strtod(format_number(third).c_str(), nullptr) == third);
  const double awkward = 0.1 + 0.2;
  CHECK(std::strtod(format_number(awkward).c_str(), nullptr) == awkward);
  CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("significance stars follow the 10/5/1 percent thresholds") {
  CHECK(significance_stars(0.005) == "***");
  CHECK(significance_stars(0.03) == "**");
  CHECK(significance_stars(0.07) == "*");
  CHECK(significance_stars(0.2) == "");
  CHECK(significance_stars(0.05) == "*");  // boundary falls to the weaker level
  CHECK(significance_stars(std::numeric_limits<double>::quiet_NaN()) == "");
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(content_hash("") == "fnv1a64:cbf29ce484222325");
}

TEST_CASE("regression csv lists terms with full-precision values and stars") {
  const std::string csv = render_regression_csv(toy_result());
  const auto lines = split_lines(csv);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "term,estimate,se,t_stat,p_value,stars");
  CHECK(lines[1] == "dual_treat,2.2347,0.5,4.4694,0.0001,***");
  CHECK(lines[2] == "x1,-0.25,0.1,-2.5,0.02,**");
}

TEST_CASE("regression table carries fit statistics and the dropped list") {
  const std::string table = render_regression_table(toy_result(), "baseline");
  CHECK(table.find("baseline") == 0);
  CHECK(table.find("dual_treat") != std::string::npos);
  CHECK(table.find("observations: 120  entities: 12") != std::string::npos);
  CHECK(table.find("se: cluster (12 clusters)") != std::string::npos);
  CHECK(table.find("dropped as collinear: x2") != std::string::npos);
  CHECK(table.find("* p<0.10") != std::string::npos);
}

TEST_CASE("event study csv flags the reference and dropped bins") {
  EventStudyResult result;
  result.bins.push_back({"Before_1", -2, 0.1, 0.2, -0.3, 0.5, 0.6, 5, false, false});
  result.bins.push_back({"Before_0", -1, 0.0, 0.0, 0.0, 0.0, 1.0, 7, true, false});
  result.bins.push_back({"After_6", 7, 0.0, 0.0, 0.0, 0.0, 1.0, 0, false, true});
  const auto lines = split_lines(render_event_study_csv(result));
  REQUIRE(lines.size() == 4);
  CHECK(lines[1] == "Before_1,-2,0.1,0.2,-0.3,0.5,0.6,5,0,0");
  CHECK(lines[2] == "Before_0,-1,0,0,0,0,1,7,1,0");
  CHECK(lines[3] == "After_6,7,0,0,0,0,1,0,0,1");
}

TEST_CASE("csv fields with commas or quotes are quoted") {
  MatchedSample matched;
  matched.pairs.push_back({{"city, big", 2012}, {"plain", 2012}, 0.5, 0.4, 0.1});
  const auto lines = split_lines(render_matched_sample_csv(matched));
  REQUIRE(lines.size() == 2);
  CHECK(lines[1] == "\"city, big\",2012,plain,2012,0.5,0.4,0.1");
}

TEST_CASE("placebo csv marks flagged replications") {
  PlaceboResult result;
  result.betas = {0.5, std::numeric_limits<double>::quiet_NaN(), -0.25};
  result.p_values = {0.3, std::numeric_limits<double>::quiet_NaN(), 0.8};
  result.flagged = {1};
  const auto lines = split_lines(render_placebo_csv(result));
  REQUIRE(lines.size() == 4);
  CHECK(lines[1] == "0,0.5,0.3,0");
  CHECK(lines[2] == "1,nan,nan,1");
  CHECK(lines[3] == "2,-0.25,0.8,0");
}

TEST_CASE("manifest renders entries sorted by path with stable hashes") {
  Manifest manifest;
  manifest.add("b.csv", "x,y\n1,2\n");
  manifest.add("a.csv", "hello");
  const std::string rendered = render_manifest_json(manifest);
  CHECK(rendered.find("\"a.csv\"") < rendered.find("\"b.csv\""));
  CHECK(rendered.find("\"artifact_count\": 2") != std::string::npos);
  CHECK(rendered.find(content_hash("hello")) != std::string::npos);
  // Insertion order must not leak into the rendered bytes.
  Manifest reversed;
  reversed.add("a.csv", "hello");
  reversed.add("b.csv", "x,y\n1,2\n");
  CHECK(render_manifest_json(reversed) == rendered);
}

TEST_CASE("write_text_file round-trips bytes and rejects bad paths") {
  char path_template[] = "/tmp/report_test_XXXXXX";
  const int fd = mkstemp(path_template);
  REQUIRE(fd >= 0);
  close(fd);
  const std::string path(path_template);
  write_text_file(path, "line one\nline two\n");
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  CHECK(buffer.str() == "line one\nline two\n");
  std::remove(path.c_str());
  CHECK_THROWS_AS(write_text_file("/nonexistent_dir/out.txt", "x"), ValidationError);
}

TEST_CASE("mediation table reports the share only when identified") {
  MediationResult result;
  result.phi = {"placeholder", 0.8, 0.1, 8.0, 0.0001};
  result.theta = {"placeholder", 1.5, 0.2, 7.5, 0.0001};
  result.delta = {"placeholder", 2.0, 0.3, 6.7, 0.0001};
  result.share = 1.6 / 3.1;
  result.share_valid = true;
  result.verdict = "partial mediation";
  result.significance_level = 0.10;
  const std::string table = render_mediation_table(result, "vcpe");
  CHECK(table.find("mediation through vcpe") == 0);
  CHECK(table.find("mediated share: 51.6129%") != std::string::npos);
  CHECK(table.find("verdict: partial mediation") != std::string::npos);

  result.share_valid = false;
  result.share = std::numeric_limits<double>::quiet_NaN();
  result.verdict = "no mediation";
  CHECK(render_mediation_table(result, "vcpe").find("mediated share: not identified") !=
        std::string::npos);
}
