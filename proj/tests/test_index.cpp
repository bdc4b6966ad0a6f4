#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "paneldid/errors.hpp"
#include "paneldid/index.hpp"
#include "test_helpers.hpp"

using namespace paneldid;
using testutil::make_panel;

namespace {

Eigen::MatrixXd row3(double a, double b, double c) {
  Eigen::MatrixXd m(1, 3);
  m << a, b, c;
  return m;
}

IndexSpec two_indicator_spec(WeightMethod method) {
  IndexSpec spec;
  spec.indicators = {{"A", Direction::positive}, {"B", Direction::positive}};
  spec.method = method;
  spec.output_name = "idx";
  return spec;
}

// Cyclic Jacobi eigensolver, written independently of Eigen so the PCA
// weights have a second opinion to agree with.
void jacobi_eigen(Eigen::MatrixXd a, Eigen::VectorXd* values, Eigen::MatrixXd* vectors) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::fabs(a(p, q)) < 1e-30) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(n, n);
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        v = v * rot;
      }
    }
  }
  *values = a.diagonal();
  *vectors = v;
}

}  // namespace

TEST_CASE("min-max standardization maps linearly in both directions") {
  const PanelDataset data = make_panel({"E"}, {2011, 2012, 2013}, {{"x", row3(0, 5, 10)}});
  const PanelDataset pos = standardize_minmax(data, "x", Direction::positive);
  CHECK(pos.var("x")(0, 0) == 0.0);
  CHECK(pos.var("x")(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(pos.var("x")(0, 2) == 1.0);

  const PanelDataset neg = standardize_minmax(data, "x", Direction::negative);
  CHECK(neg.var("x")(0, 0) == 1.0);
  CHECK(neg.var("x")(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(neg.var("x")(0, 2) == 0.0);
}

TEST_CASE("min-max standardization rejects a constant column") {
  const PanelDataset data = make_panel({"E"}, {2011, 2012}, {{"x", row3(7, 7, 7).leftCols(2)}});
  CHECK_THROWS_WITH_AS(standardize_minmax(data, "x", Direction::positive),
                       doctest::Contains("zero range"), ValidationError);
}

TEST_CASE("min-max output is invariant to positive affine transforms of the input") {
  Eigen::MatrixXd raw(2, 3);
  raw << 1.2, -0.7, 3.4, 0.0, 2.2, -1.9;
  const PanelDataset a =
      standardize_minmax(make_panel({"E", "F"}, {2011, 2012, 2013}, {{"x", raw}}), "x",
                         Direction::positive);
  const Eigen::MatrixXd shifted = 3.5 * raw.array() + 11.0;
  const PanelDataset b =
      standardize_minmax(make_panel({"E", "F"}, {2011, 2012, 2013}, {{"x", shifted}}),
                         "x", Direction::positive);
  CHECK((a.var("x") - b.var("x")).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("z-score standardization uses the sample standard deviation") {
  const PanelDataset data = make_panel({"E"}, {2011, 2012, 2013}, {{"x", row3(1, 2, 3)}});
  const PanelDataset z = standardize_zscore(data, "x");
  // Sample sd of {1,2,3} is exactly 1, so the output is {-1, 0, 1}.
  CHECK(z.var("x")(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(z.var("x")(0, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(z.var("x")(0, 2) == doctest::Approx(1.0).epsilon(1e-14));

  const PanelDataset again = standardize_zscore(z, "x");
  CHECK((again.var("x") - z.var("x")).cwiseAbs().maxCoeff() < 1e-12);

  const PanelDataset flat = make_panel({"E"}, {2011, 2012}, {{"x", row3(3, 3, 3).leftCols(2)}});
  CHECK_THROWS_WITH_AS(standardize_zscore(flat, "x"),
                       doctest::Contains("zero standard deviation"), ValidationError);
}

TEST_CASE("entropy weights split evenly across identical distributions") {
  Eigen::MatrixXd cells(2, 2);
  cells << 0.1, 0.9, 0.4, 0.6;
  const PanelDataset data =
      make_panel({"E", "F"}, {2011, 2012}, {{"A", cells}, {"B", cells}});
  const IndexWeights w = entropy_weights(data, two_indicator_spec(WeightMethod::entropy));
  CHECK(w.weights(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w.weights(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("entropy toy panel matches the brute-force oracle") {
  // Independent brute-force computation of the same formula with shift 1e-4:
  //   A = {0,0,0,1}:          e_A = 0.0022087317138715966, d_A = 0.99779126828612841
  //   B = {.25,.25,.25,.25}:  e_B = 1 exactly,             d_B = 0 exactly
  // so the weights are exactly {1, 0}.
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.0, 0.0, 0.0, 1.0;
  b << 0.25, 0.25, 0.25, 0.25;
  const PanelDataset data = make_panel({"E", "F"}, {2011, 2012}, {{"A", a}, {"B", b}});
  const IndexWeights w = entropy_weights(data, two_indicator_spec(WeightMethod::entropy));
  CHECK(w.entropies(0) == doctest::Approx(0.0022087317138715966).epsilon(1e-12));
  CHECK(w.divergences(0) == doctest::Approx(0.99779126828612841).epsilon(1e-12));
  CHECK(w.entropies(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::fabs(w.divergences(1)) < 1e-15);
  CHECK(w.weights(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::fabs(w.weights(1)) < 1e-15);
}

TEST_CASE("a uniform indicator gets weight near zero") {
  Eigen::MatrixXd uniform(2, 2), varying(2, 2);
  uniform << 0.5, 0.5, 0.5, 0.5;
  varying << 0.0, 1.0, 0.2, 0.9;
  const PanelDataset data =
      make_panel({"E", "F"}, {2011, 2012}, {{"A", uniform}, {"B", varying}});
  const IndexWeights w = entropy_weights(data, two_indicator_spec(WeightMethod::entropy));
  CHECK(std::fabs(w.weights(0)) < 1e-3);
  CHECK(w.weights(1) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("entropy weighting rejects a panel with no information content") {
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 0.5, 0.5;
  b << 0.3, 0.3;
  const PanelDataset data = make_panel({"E"}, {2011, 2012}, {{"A", a}, {"B", b}});
  CHECK_THROWS_WITH_AS(entropy_weights(data, two_indicator_spec(WeightMethod::entropy)),
                       doctest::Contains("no information content"), ValidationError);
}

TEST_CASE("entropy weights are invariant to duplicating every panel row") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.0, 1.0, 0.3, 0.8;
  b << 0.6, 0.1, 0.9, 0.2;
  const PanelDataset base = make_panel({"E", "F"}, {2011, 2012}, {{"A", a}, {"B", b}});

  Eigen::MatrixXd a2(4, 2), b2(4, 2);
  a2 << a, a;
  b2 << b, b;
  const PanelDataset doubled =
      make_panel({"E", "F", "G", "H"}, {2011, 2012}, {{"A", a2}, {"B", b2}});

  const IndexSpec spec = two_indicator_spec(WeightMethod::entropy);
  const IndexWeights w1 = entropy_weights(base, spec);
  const IndexWeights w2 = entropy_weights(doubled, spec);
  CHECK((w1.weights - w2.weights).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("entropy weights are permutation-equivariant") {
  Eigen::MatrixXd a(2, 2), b(2, 2), c(2, 2);
  a << 0.0, 1.0, 0.3, 0.8;
  b << 0.6, 0.1, 0.9, 0.2;
  c << 0.2, 0.2, 0.7, 1.0;
  const PanelDataset data =
      make_panel({"E", "F"}, {2011, 2012}, {{"A", a}, {"B", b}, {"C", c}});

  IndexSpec fwd;
  fwd.indicators = {{"A", Direction::positive},
                    {"B", Direction::positive},
                    {"C", Direction::positive}};
  fwd.output_name = "idx";
  IndexSpec rev = fwd;
  rev.indicators = {fwd.indicators[2], fwd.indicators[0], fwd.indicators[1]};

  const IndexWeights wf = entropy_weights(data, fwd);
  const IndexWeights wr = entropy_weights(data, rev);
  CHECK(wr.weights(0) == doctest::Approx(wf.weights(2)).epsilon(1e-14));
  CHECK(wr.weights(1) == doctest::Approx(wf.weights(0)).epsilon(1e-14));
  CHECK(wr.weights(2) == doctest::Approx(wf.weights(1)).epsilon(1e-14));

  const IndexWeights pf = pca_weights(data, fwd);
  const IndexWeights pr = pca_weights(data, rev);
  CHECK(pr.weights(0) == doctest::Approx(pf.weights(2)).epsilon(1e-10));
  CHECK(pr.weights(1) == doctest::Approx(pf.weights(0)).epsilon(1e-10));
  CHECK(pr.weights(2) == doctest::Approx(pf.weights(1)).epsilon(1e-10));
}

TEST_CASE("pca weights split evenly for perfectly correlated indicators") {
  Eigen::MatrixXd a(2, 2);
  a << 0.0, 1.0, 0.25, 0.75;
  const Eigen::MatrixXd b = 0.5 * a.array() + 0.2;
  const PanelDataset data = make_panel({"E", "F"}, {2011, 2012}, {{"A", a}, {"B", b}});
  const IndexWeights w = pca_weights(data, two_indicator_spec(WeightMethod::pca));
  CHECK(w.weights(0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(w.weights(1) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(w.retained == 1);
  CHECK(w.eigenvalues(0) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("pca weights split evenly for uncorrelated equal-variance indicators") {
  // Chosen so the pooled correlation is exactly zero.
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 1.0, -1.0, 1.0, -1.0;
  b << 1.0, 1.0, -1.0, -1.0;
  const PanelDataset data = make_panel({"E", "F"}, {2011, 2012}, {{"A", a}, {"B", b}});
  const IndexWeights w = pca_weights(data, two_indicator_spec(WeightMethod::pca));
  CHECK(w.weights(0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(w.weights(1) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(w.retained == 2);
}

TEST_CASE("pca weights agree with an independent Jacobi eigensolver") {
  // Three indicators, two strongly correlated and one mostly separate.
  Eigen::MatrixXd a(4, 3), b(4, 3), c(4, 3);
  a << 0.0, 0.2, 0.9, 0.5, 0.7, 0.1, 0.3, 0.8, 0.4, 0.6, 0.05, 0.95;
  b = 0.9 * a.array() + 0.05;
  b(0, 0) += 0.3;
  b(2, 1) -= 0.2;
  c << 0.9, 0.1, 0.3, 0.7, 0.2, 0.8, 0.5, 0.4, 0.6, 0.0, 1.0, 0.35;
  const PanelDataset data = make_panel({"E", "F", "G", "H"}, {2011, 2012, 2013},
                                       {{"A", a}, {"B", b}, {"C", c}});
  IndexSpec spec;
  spec.indicators = {{"A", Direction::positive},
                     {"B", Direction::positive},
                     {"C", Direction::positive}};
  spec.method = WeightMethod::pca;
  spec.output_name = "idx";
  const IndexWeights w = pca_weights(data, spec);

  // Rebuild the correlation matrix by hand and push it through Jacobi.
  Eigen::MatrixXd pooled(12, 3);
  const Eigen::MatrixXd mats[3] = {a, b, c};
  for (int j = 0; j < 3; ++j) {
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < 4; ++r)
      for (Eigen::Index col = 0; col < 3; ++col) pooled(k++, j) = mats[j](r, col);
  }
  const Eigen::RowVectorXd means = pooled.colwise().mean();
  const Eigen::MatrixXd centered = pooled.rowwise() - means;
  const Eigen::VectorXd sds =
      (centered.array().square().colwise().sum() / 11.0).sqrt();
  Eigen::MatrixXd corr = (centered.transpose() * centered) / 11.0;
  corr = sds.cwiseInverse().asDiagonal() * corr * sds.cwiseInverse().asDiagonal();

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  jacobi_eigen(corr, &values, &vectors);
  std::vector<int> order = {0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return values(x) > values(y); });

  double retained_sum = 0.0;
  std::vector<int> retained;
  for (const int k : order)
    if (values(k) >= 1.0 - 1e-9) {
      retained.push_back(k);
      retained_sum += values(k);
    }
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(3);
  for (const int k : retained)
    expect += (values(k) / retained_sum) * vectors.col(k).cwiseAbs();
  expect /= expect.sum();

  CHECK(static_cast<std::size_t>(w.retained) == retained.size());
  CHECK((w.weights - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("composite index reduces to the indicator for a unit weight") {
  Eigen::MatrixXd a(1, 3);
  a << 0.2, 0.7, 0.4;
  const PanelDataset data = make_panel({"E"}, {2011, 2012, 2013}, {{"A", a}});
  IndexWeights w;
  w.indicators = {{"A", Direction::positive}};
  w.output_name = "idx";
  w.weights = Eigen::VectorXd::Ones(1);
  const PanelDataset out = composite_index(data, w, 1.0);
  CHECK((out.var("idx") - a).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("composite index applies weights and scale") {
  Eigen::MatrixXd a(1, 1), b(1, 1);
  a << 0.2;
  b << 0.6;
  const PanelDataset data = make_panel({"E"}, {2011}, {{"A", a}, {"B", b}});
  IndexWeights w;
  w.indicators = {{"A", Direction::positive}, {"B", Direction::positive}};
  w.output_name = "idx";
  w.weights = Eigen::VectorXd::Constant(2, 0.5);
  const PanelDataset out = composite_index(data, w, 100.0);
  CHECK(out.var("idx")(0, 0) == doctest::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("composite index is monotone in positive-direction indicators") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.1, 0.4, 0.6, 0.2;
  b << 0.8, 0.3, 0.5, 0.9;
  const PanelDataset data = make_panel({"E", "F"}, {2011, 2012}, {{"A", a}, {"B", b}});
  const IndexWeights w = entropy_weights(data, two_indicator_spec(WeightMethod::entropy));
  const PanelDataset base = composite_index(data, w, 100.0);

  Eigen::MatrixXd bumped = a;
  bumped(1, 0) += 0.05;
  const PanelDataset data2 =
      make_panel({"E", "F"}, {2011, 2012}, {{"A", bumped}, {"B", b}});
  const PanelDataset raised = composite_index(data2, w, 100.0);
  CHECK(raised.var("idx")(1, 0) >= base.var("idx")(1, 0));
  CHECK(raised.var("idx")(0, 0) == doctest::Approx(base.var("idx")(0, 0)).epsilon(1e-14));
}

TEST_CASE("industrial structure index weights sector shares by rank") {
  Eigen::MatrixXd s1(1, 3), s2(1, 3), s3(1, 3);
  s1 << 1.0, 0.0, 0.20;
  s2 << 0.0, 0.0, 0.40;
  s3 << 0.0, 1.0, 0.40;
  const PanelDataset data = make_panel(
      {"E"}, {2011, 2012, 2013}, {{"primary", s1}, {"secondary", s2}, {"tertiary", s3}});
  std::vector<std::string> warnings;
  const PanelDataset out = industrial_structure_index(
      data, {"primary", "secondary", "tertiary"}, "indus", &warnings);
  CHECK(out.var("indus")(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(out.var("indus")(0, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(out.var("indus")(0, 2) == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(warnings.empty());
}

TEST_CASE("industrial structure index in percentage units and share warning") {
  Eigen::MatrixXd s1(1, 2), s2(1, 2), s3(1, 2);
  s1 << 20.0, 10.0;
  s2 << 40.0, 10.0;
  s3 << 40.0, 10.0;
  const PanelDataset data = make_panel(
      {"E"}, {2011, 2012}, {{"primary", s1}, {"secondary", s2}, {"tertiary", s3}});
  std::vector<std::string> warnings;
  const PanelDataset out = industrial_structure_index(
      data, {"primary", "secondary", "tertiary"}, "indus", &warnings);
  CHECK(out.var("indus")(0, 0) == doctest::Approx(220.0).epsilon(1e-12));
  // Second cell sums to 30, neither ~1 nor ~100: flagged but still computed.
  CHECK(warnings.size() == 1);
  CHECK(out.var("indus")(0, 1) == doctest::Approx(60.0).epsilon(1e-12));
}
