#include "bglmm/posthoc.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace bglmm;

namespace {

Eigen::MatrixXd correlated_predictors(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shared = n01(rng);
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = (1.0 + j) * (0.6 * shared + n01(rng)) + j;
  }
  return X;
}

Eigen::VectorXd residuals_on(const Eigen::MatrixXd& X, const Eigen::VectorXd& v) {
  return v - X * testing::normal_equations(X, v);
}

/// Columns of `predictors` other than k, with a leading ones column.
Eigen::MatrixXd others_with_ones(const Eigen::MatrixXd& predictors, Eigen::Index k) {
  Eigen::MatrixXd out(predictors.rows(), predictors.cols() - 1);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < predictors.cols(); ++j)
    if (j != k) out.col(c++) = predictors.col(j);
  return testing::with_ones(out);
}

}  // namespace

TEST_CASE("ols: exact fit, orthogonal design and normal equations") {
  Eigen::MatrixXd X(5, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4;
  Eigen::VectorXd y(5);
  y << 2, 5, 8, 11, 14;
  const OlsFit exact = ols_fit(X, y);
  CHECK(exact.coefficients(0) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(exact.coefficients(1) == doctest::Approx(3.0).epsilon(1e-13));
  CHECK(exact.rsquared == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(exact.residuals.cwiseAbs().maxCoeff() < 1e-12);

  // Orthogonal centered columns: each slope is a simple projection.
  Eigen::MatrixXd O(4, 3);
  O << 1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1;
  Eigen::VectorXd z(4);
  z << 3, 1, 4, 1;
  const OlsFit ortho = ols_fit(O, z);
  for (int j = 0; j < 3; ++j) CHECK(ortho.coefficients(j) == doctest::Approx(O.col(j).dot(z) / 4.0).epsilon(1e-13));

  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd P = testing::with_ones(correlated_predictors(rng, 50, 3));
    const Eigen::VectorXd v = testing::to_vector(testing::normal_values(rng, 50, 1.0, 2.0));
    const OlsFit f = ols_fit(P, v);
    CHECK(testing::max_relative_error(f.coefficients, testing::normal_equations(P, v)) < 1e-10);
    const double sst = (v.array() - v.mean()).square().sum();
    CHECK(f.rsquared == doctest::Approx(1.0 - f.residuals.squaredNorm() / sst).epsilon(1e-12));
  }

  CHECK_THROWS_AS(ols_fit(X.topRows(2), y.head(2)), PosthocError);
  Eigen::MatrixXd dup(5, 3);
  dup << X, X.col(1);
  CHECK_THROWS_AS(ols_fit(dup, y), PosthocError);
}

TEST_CASE("property: scaled OLS slopes equal residual correlations") {
  std::mt19937_64 rng(2);
  for (Eigen::Index p = 2; p <= 4; ++p) {
    for (int rep = 0; rep < 10; ++rep) {
      CAPTURE(p);
      const Eigen::Index n = 80;
      const Eigen::MatrixXd P = correlated_predictors(rng, n, p);
      Eigen::VectorXd y = testing::to_vector(testing::normal_values(rng, static_cast<std::size_t>(n), 0.0, 1.0));
      for (Eigen::Index j = 0; j < p; ++j) y += (0.5 - 0.3 * j) * P.col(j);
      const Eigen::VectorXd beta = testing::normal_equations(testing::with_ones(P), y);
      for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::MatrixXd rest = others_with_ones(P, k);
        const double partial = testing::pearson(residuals_on(rest, y), residuals_on(rest, P.col(k)));
        const double mapped = beta(k + 1) * partial_corr_constant(P, y, k);
        CHECK(std::abs(mapped - partial) < 1e-10);
      }
    }
  }
}

TEST_CASE("single predictor constant is the sd ratio") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd x = testing::to_vector(testing::normal_values(rng, 40, 3.0, 2.0));
    const Eigen::VectorXd y = testing::to_vector(testing::normal_values(rng, 40, -1.0, 0.5)) + 0.3 * x;
    const double c = partial_corr_constant(x, y, 0);
    CHECK(std::abs(c - testing::sd_of(x) / testing::sd_of(y)) < 1e-12);
    // With one predictor the mapped slope is the Pearson correlation.
    const Eigen::VectorXd beta = testing::normal_equations(testing::with_ones(x), y);
    CHECK(beta(1) * c == doctest::Approx(testing::pearson(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("transform is linear in the slope draws") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd P = correlated_predictors(rng, 60, 2);
  const Eigen::VectorXd y = P.col(0) - 0.5 * P.col(1) + testing::to_vector(testing::normal_values(rng, 60, 0.0, 1.0));
  PosteriorDraws d;
  d.names = {"Intercept", "a", "b", "y_sigma"};
  d.chains = {Eigen::MatrixXd::Random(30, 4), Eigen::MatrixXd::Random(30, 4)};
  d.chains[0](3, 1) = 50.0;
  const auto out = partial_corr_transform(d, P, {"a", "b"}, y, {"b", "a"});
  REQUIRE(out.size() == 2);
  CHECK(out[0].predictor == "b");
  CHECK(out[0].constant == doctest::Approx(partial_corr_constant(P, y, 1)).epsilon(1e-14));
  for (const auto& r : out) {
    const Eigen::MatrixXd slope = d.parameter(r.predictor);
    CHECK((r.rho - r.constant * slope).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((r.rho_squared - r.rho.cwiseAbs2()).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK(out[1].out_of_range >= 1);
  CHECK_THROWS_AS(partial_corr_transform(d, P, {"a", "b"}, y, {"c"}), PosthocError);
  CHECK_THROWS_AS(partial_corr_transform(d, P, {"a", "b"}, y, {}), PosthocError);
}

TEST_CASE("model-level transform uses the uncentered common columns") {
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd P = correlated_predictors(rng, 70, 2);
  DataTable t;
  const Eigen::VectorXd y = (P.col(0).array() + 2.0).matrix() + testing::to_vector(testing::normal_values(rng, 70, 0.0, 1.0));
  t.add_column(DataTable::numeric_column("y", std::vector<double>(y.data(), y.data() + y.size())));
  t.add_column(DataTable::numeric_column("u", std::vector<double>(P.col(0).data(), P.col(0).data() + 70)));
  t.add_column(DataTable::numeric_column("w", std::vector<double>(P.col(1).data(), P.col(1).data() + 70)));
  const auto m = testing::make_model("y ~ u + w", t);
  PosteriorDraws d;
  d.names = m.parameter_names();
  d.chains = {Eigen::MatrixXd::Random(10, 4)};
  const auto out = partial_corr_transform(m, d, {"w"});
  CHECK(out[0].constant == doctest::Approx(partial_corr_constant(P, y, 1)).epsilon(1e-13));
  CHECK_THROWS_AS(partial_corr_transform(m, d, {"Intercept"}), PosthocError);
}

TEST_CASE("exceedance probability") {
  Eigen::VectorXd a(4), b(4);
  a << 1, -2, 3, 0.5;
  CHECK(exceedance_probability(a, a) == 0.0);
  CHECK(exceedance_probability(Eigen::VectorXd::Ones(10), Eigen::VectorXd::Zero(10)) == 1.0);
  CHECK(exceedance_probability(Eigen::VectorXd::Zero(10), Eigen::VectorXd::Ones(10)) == 0.0);
  b << 0.5, 1, -4, 1;
  // Squares compared: 1 > 0.25, 4 > 1, 9 < 16, 0.25 < 1.
  CHECK(exceedance_probability(a, b) == 0.5);

  std::mt19937_64 rng(6);
  const Eigen::VectorXd x = testing::to_vector(testing::normal_values(rng, 100000, 0.0, 1.0));
  const Eigen::VectorXd z = testing::to_vector(testing::normal_values(rng, 100000, 0.0, 1.0));
  CHECK(std::abs(exceedance_probability(x, z) - 0.5) < 0.01);
  CHECK_THROWS_AS(exceedance_probability(x, z.head(3)), PosthocError);
}
