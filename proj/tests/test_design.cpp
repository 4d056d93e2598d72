#include "bglmm/design.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace bglmm;
using testing::to_vector;

namespace {

DesignBuild build(const std::string& formula, const DataTable& data, const std::string& family = "gaussian") {
  return build_design(parse_terms(formula), data, get_family(family));
}

DataTable small_table() {
  DataTable t;
  t.add_column(DataTable::numeric_column("y", {1.0, 2.0, 4.0, 3.0, 7.0, 6.0}));
  t.add_column(DataTable::numeric_column("x", {0.5, 1.5, 2.0, 4.0, 3.0, 1.0}));
  t.add_column(DataTable::categorical_column("c", {"a", "b", "c", "a", "b", "c"}));
  t.add_column(DataTable::categorical_column("g", {"A", "B", "A", "C", "B", "C"}));
  return t;
}

}  // namespace

TEST_CASE("intercept plus numeric predictor is centered") {
  DataTable t;
  t.add_column(DataTable::numeric_column("y", {1, 2, 3, 4, 5}));
  t.add_column(DataTable::numeric_column("x", {2, 4, 6, 8, 15}));
  const auto d = build("y ~ x", t).design;
  REQUIRE(d.X.rows() == 5);
  REQUIRE(d.X.cols() == 2);
  CHECK(d.X.col(0).isOnes());
  CHECK(d.column_means(1) == doctest::Approx(7.0));
  for (int i = 0; i < 5; ++i) CHECK(d.X(i, 1) == doctest::Approx(t.column("x").numeric[i] - 7.0));
  CHECK(d.x_names == std::vector<std::string>{"Intercept", "x"});
  CHECK((d.uncentered_X().col(1) - to_vector(t.column("x").numeric)).norm() < 1e-14);
}

TEST_CASE("categorical coding") {
  const auto t = small_table();
  const auto reduced = build("y ~ c", t).design;
  CHECK(reduced.X.cols() == 3);
  CHECK(reduced.x_names == std::vector<std::string>{"Intercept", "c[b]", "c[c]"});
  CHECK(reduced.x_terms == std::vector<std::string>{"Intercept", "c", "c"});

  const auto full = build("y ~ 0 + c", t).design;
  CHECK(full.X.cols() == 3);
  CHECK(full.x_names == std::vector<std::string>{"c[a]", "c[b]", "c[c]"});
  CHECK(numerical_rank(full.X) == 3);
  CHECK_FALSE(full.centered);
  CHECK(full.X.rowwise().sum().isOnes());
}

TEST_CASE("nested categorical interaction is full rank with minimal columns") {
  DataTable t;
  t.add_column(DataTable::numeric_column("y", {1, 2, 3, 4, 5, 6, 7, 8}));
  t.add_column(DataTable::categorical_column("a", {"p", "p", "q", "q", "p", "p", "q", "q"}));
  t.add_column(DataTable::categorical_column("b", {"u", "v", "u", "v", "u", "v", "u", "v"}));
  const auto terms = parse_terms("y ~ a + a:b");
  const auto d = build_design(terms, t, get_family("gaussian")).design;
  CHECK(d.X.cols() == 4);
  CHECK(numerical_rank(d.X) == 4);
  CHECK(testing::svd_rank(testing::full_dummy_matrix(terms, t)) == 4);
}

TEST_CASE("encode_term: spanned bookkeeping") {
  std::map<std::string, FactorValues> factors;
  FactorValues c;
  c.categorical = true;
  c.codes = {0, 1, 2, 0};
  c.levels = {"a", "b", "c"};
  factors["c"] = c;

  SpannedSet spanned;
  const auto intercept = encode_term(Term{}, factors, spanned);
  CHECK(intercept.values.cols() == 1);
  const auto reduced = encode_term(parse_terms("y ~ c").common[0], factors, spanned);
  CHECK(reduced.values.cols() == 2);

  SpannedSet empty;
  const auto full = encode_term(parse_terms("y ~ c").common[0], factors, empty);
  CHECK(full.values.cols() == 3);
}

TEST_CASE("group blocks") {
  DataTable t;
  t.add_column(DataTable::numeric_column("y", {1, 2, 3, 4}));
  t.add_column(DataTable::numeric_column("x", {10, 20, 30, 40}));
  t.add_column(DataTable::categorical_column("g", {"A", "B", "A", "C"}));
  const auto d1 = build("y ~ (1|g)", t).design;
  const Eigen::MatrixXd Z1 = d1.Z;
  Eigen::MatrixXd expected(4, 3);
  expected << 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1;
  CHECK(Z1 == expected);
  CHECK(d1.z_names == std::vector<std::string>{"1|g[A]", "1|g[B]", "1|g[C]"});

  DataTable t2;
  t2.add_column(DataTable::numeric_column("y", {1, 2, 3, 4}));
  t2.add_column(DataTable::numeric_column("x", {10, 20, 30, 40}));
  t2.add_column(DataTable::categorical_column("g", {"A", "B", "B", "A"}));
  const auto d2 = build("y ~ (x|g)", t2).design;
  const Eigen::MatrixXd Z2 = d2.Z;
  Eigen::MatrixXd e2(4, 4);
  e2 << 1, 0, 10, 0,  //
      0, 1, 0, 20,    //
      0, 1, 0, 30,    //
      1, 0, 40, 0;
  CHECK(Z2 == e2);
  CHECK(d2.z_names == std::vector<std::string>{"1|g[A]", "1|g[B]", "x|g[A]", "x|g[B]"});

  const auto merged = build("y ~ (1|g) + (x|g)", t2).design;
  CHECK(merged.groups.size() == 1);
  CHECK(merged.Z.cols() == 4);
  CHECK(build("y ~ (x|g)", t2).design.Z.cols() == merged.Z.cols());

  DataTable one;
  one.add_column(DataTable::numeric_column("y", {1, 2}));
  one.add_column(DataTable::categorical_column("g", {"A", "A"}));
  CHECK_THROWS_WITH_AS(build("y ~ (1|g)", one), doctest::Contains("single level"), DesignError);
}

TEST_CASE("distributed group terms concatenate blocks") {
  auto t = small_table();
  t.add_column(DataTable::categorical_column("h", {"p", "q", "q", "p", "q", "p"}));
  const auto d = build("y ~ x + (x|g + h)", t).design;
  CHECK(d.groups.size() == 2);
  CHECK(d.Z.cols() == 2 * 3 + 2 * 2);
  CHECK(d.groups[1].offset == 6);
}

TEST_CASE("Z rows touch only their own level") {
  std::mt19937_64 rng(4);
  const std::size_t n = 60;
  DataTable t;
  t.add_column(DataTable::numeric_column("y", testing::normal_values(rng, n)));
  t.add_column(DataTable::numeric_column("x", testing::normal_values(rng, n)));
  t.add_column(DataTable::categorical_column("c", testing::categorical_values(rng, n, 3)));
  t.add_column(DataTable::categorical_column("g", testing::categorical_values(rng, n, 7, "G")));
  const auto d = build("y ~ x + (1|g) + (x + c|g)", t).design;
  REQUIRE(d.groups.size() == 1);
  const auto& blk = d.groups[0];
  CHECK(blk.expr_names == std::vector<std::string>{"1", "x", "c[L1]", "c[L2]"});
  const Eigen::MatrixXd Z = d.Z;
  const auto J = blk.n_levels();
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const int lv = blk.codes[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      if ((j % J) != lv) CHECK(Z(i, j) == 0.0);
    CHECK(Z.row(i).head(J).sum() == 1.0);
  }
}

TEST_CASE("stateful transforms replay stored statistics") {
  DataTable train;
  train.add_column(DataTable::numeric_column("y", {1, 2, 3, 4}));
  train.add_column(DataTable::numeric_column("age", {8, 10, 12, 10}));
  const auto terms = parse_terms("y ~ scale(age)");
  const auto b = build_design(terms, train, get_family("gaussian"));
  const auto& tr = b.state.transforms.at("scale(age)");
  CHECK(tr.mean == doctest::Approx(10.0));
  CHECK(tr.sd == doctest::Approx(std::sqrt(8.0 / 3.0)));

  TransformState manual;
  Transform m;
  m.kind = Transform::Kind::Scale;
  m.argument = parse("y ~ age").rhs;
  m.mean = 10.0;
  m.sd = 2.0;
  manual.transforms["scale(age)"] = m;
  DataTable fresh;
  fresh.add_column(DataTable::numeric_column("age", {14.0, 30.0, -2.0}));
  const auto out = apply_transforms(fresh, manual);
  CHECK(out.at("scale(age)")(0) == 2.0);
  CHECK(out.at("scale(age)")(1) == 10.0);

  // Replay on the training data reproduces the training columns.
  const auto replay = apply_transforms(train, b.state).at("scale(age)");
  const Eigen::VectorXd expect = (to_vector(train.column("age").numeric).array() - 10.0) / tr.sd;
  CHECK((replay - expect).norm() < 1e-14);

  // Re-fitting on new data would differ; the stored statistics must be used.
  const auto stored = apply_transforms(fresh, b.state).at("scale(age)");
  const Eigen::VectorXd a = to_vector(fresh.column("age").numeric);
  const Eigen::VectorXd refit = (a.array() - testing::mean_of(a)) / testing::sd_of(a);
  CHECK((stored - refit).norm() > 1e-3);
  CHECK(std::abs(stored(0) - (14.0 - 10.0) / tr.sd) < 1e-14);

  DataTable flat;
  flat.add_column(DataTable::numeric_column("y", {1, 2, 3}));
  flat.add_column(DataTable::numeric_column("age", {5, 5, 5}));
  CHECK_THROWS_AS(build_design(terms, flat, get_family("gaussian")), DesignError);
  CHECK_THROWS_AS(apply_transforms(DataTable{}, b.state), std::exception);
}

TEST_CASE("center() and brace arithmetic") {
  DataTable t;
  t.add_column(DataTable::numeric_column("y", {1, 2, 3}));
  t.add_column(DataTable::numeric_column("x", {1, 2, 6}));
  t.add_column(DataTable::numeric_column("z", {2, 2, 2}));
  const auto d = build("y ~ 0 + center(x) + {x * z + 1}", t).design;
  CHECK(d.X(0, 0) == doctest::Approx(-2.0));
  CHECK(d.X(2, 1) == doctest::Approx(13.0));
}

TEST_CASE("build_for_prediction") {
  const auto t = small_table();
  const auto terms = parse_terms("y ~ x + c + (1|g)");
  const auto b = build_design(terms, t, get_family("gaussian"));
  const auto same = build_for_prediction(terms, t, b.state, b.design);
  CHECK(same.X == b.design.X);
  CHECK(Eigen::MatrixXd(same.Z) == Eigen::MatrixXd(b.design.Z));

  // A subset of rows still uses the training means and level sets.
  const auto sub = t.select_rows({0, 3});
  const auto p = build_for_prediction(terms, sub, b.state, b.design);
  CHECK(p.X.cols() == b.design.X.cols());
  CHECK(p.X.row(0) == b.design.X.row(0));
  CHECK(p.X.row(1) == b.design.X.row(3));

  DataTable green;
  green.add_column(DataTable::numeric_column("x", {1.0}));
  green.add_column(DataTable::categorical_column("c", {"green"}));
  green.add_column(DataTable::categorical_column("g", {"A"}));
  CHECK_THROWS_WITH_AS(build_for_prediction(terms, green, b.state, b.design), doctest::Contains("green"), DesignError);

  DataTable missing;
  missing.add_column(DataTable::numeric_column("x", {1.0}));
  CHECK_THROWS(build_for_prediction(terms, missing, b.state, b.design));
}

TEST_CASE("responses") {
  DataTable t;
  t.add_column(DataTable::categorical_column("vote", {"clinton", "trump", "clinton", "trump"}));
  t.add_column(DataTable::numeric_column("x", {1, 2, 3, 4}));
  t.add_column(DataTable::numeric_column("s", {1, 0, 3, 2}));
  t.add_column(DataTable::numeric_column("n", {3, 2, 3, 5}));
  const auto d = build("vote[trump] ~ x", t, "bernoulli").design;
  CHECK(d.response.values == Eigen::Vector4d(0, 1, 0, 1));
  CHECK(d.response.success_level == std::optional<std::string>("trump"));
  CHECK(build("vote ~ x", t, "bernoulli").design.response.values == Eigen::Vector4d(1, 0, 1, 0));
  CHECK_THROWS_AS(build("vote[nobody] ~ x", t, "bernoulli"), DesignError);
  CHECK_THROWS_AS(build("vote ~ x", t, "gaussian"), DesignError);

  const auto b = build("prop(s, n) ~ x", t, "binomial").design;
  CHECK(b.response.values == Eigen::Vector4d(1, 0, 3, 2));
  CHECK(*b.response.trials == Eigen::Vector4d(3, 2, 3, 5));
  CHECK_THROWS_AS(build("s ~ x", t, "binomial"), DesignError);
  CHECK_THROWS_AS(build("prop(s, n) ~ x", t, "poisson"), DesignError);
}

TEST_CASE("missing variables and missing cells") {
  auto t = small_table();
  CHECK_THROWS(build("y ~ nope", t));
  DataTable m;
  m.add_column(DataTable::numeric_column("y", {1, 2, std::nan("")}));
  m.add_column(DataTable::numeric_column("x", {1, 2, 3}));
  CHECK_THROWS_AS(build("y ~ x", m), DesignError);
}

TEST_CASE("property: random formulas are full rank with the oracle's column count") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 60; ++rep) {
    const auto c = testing::random_design_case(rng);
    CAPTURE(c.formula);
    const auto terms = parse_terms(c.formula);
    const auto d = build_design(terms, c.data, get_family("gaussian")).design;
    CHECK(testing::svd_rank(d.X) == d.X.cols());
    CHECK(d.X.cols() == testing::svd_rank(testing::full_dummy_matrix(terms, c.data)));
    if (d.has_intercept) {
      CHECK(d.X.col(0).isOnes());
      for (Eigen::Index j = 1; j < d.X.cols(); ++j) CHECK(std::abs(d.X.col(j).mean()) < 1e-12);
    }
  }
}

TEST_CASE("property: builds are deterministic") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const auto c = testing::random_design_case(rng);
    const auto terms = parse_terms(c.formula);
    const auto a = build_design(terms, c.data, get_family("gaussian")).design;
    const auto b = build_design(terms, c.data, get_family("gaussian")).design;
    CHECK(a.X == b.X);
    CHECK(a.x_names == b.x_names);
  }
}
