#pragma once

#include "bglmm/formula.hpp"
#include "bglmm/model.hpp"
#include "bglmm/tabular.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testing {

using bglmm::Column;
using bglmm::DataTable;

inline std::vector<double> normal_values(std::mt19937_64& rng, std::size_t n, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// Levels "L0".."L{k-1}", each used at least once when n >= k.
inline std::vector<std::string> categorical_values(std::mt19937_64& rng, std::size_t n, int k,
                                                   const std::string& prefix = "L") {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<std::string> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = prefix + std::to_string(i < static_cast<std::size_t>(k) ? static_cast<int>(i) : d(rng));
  return v;
}

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Sample mean and n - 1 standard deviation computed directly.
inline double mean_of(const Eigen::VectorXd& v) { return v.sum() / static_cast<double>(v.size()); }
inline double sd_of(const Eigen::VectorXd& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Least squares through the normal equations.
inline Eigen::VectorXd normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

inline Eigen::MatrixXd with_ones(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(m.cols()) = m;
  return out;
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  return (da * db).sum() / std::sqrt(da.square().sum() * db.square().sum());
}

/// Five-point central differences of f at x, fourth-order accurate.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 2e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    auto at = [&](double step) {
      Eigen::VectorXd p = x;
      p(i) += step;
      return f(p);
    };
    g(i) = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
  }
  return g;
}

/// Unconstrained point near the bulk of a typical posterior: intercept at its
/// prior center, small slopes, group SDs around exp(-1), u tilde standard
/// normal, log auxiliaries near 0.
/// `spread` shrinks slopes and group effects for links whose mean has a bounded domain.
inline Eigen::VectorXd moderate_point(const bglmm::Model& m, std::mt19937_64& rng, double spread = 1.0) {
  const auto& L = m.layout();
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd q(m.dim());
  for (Eigen::Index i = 0; i < L.n_beta; ++i) q(i) = 0.3 * spread * n01(rng);
  if (m.priors().intercept) q(0) = m.priors().intercept->spec.center() + 0.1 * n01(rng);
  for (Eigen::Index i = 0; i < L.n_sd; ++i) q(L.sd_offset() + i) = -1.0 + std::log(spread) + 0.5 * n01(rng);
  for (Eigen::Index i = 0; i < L.n_u; ++i) q(L.u_offset() + i) = n01(rng);
  for (Eigen::Index i = 0; i < L.n_aux; ++i) q(L.aux_offset() + i) = 0.3 * n01(rng) + (i == 1 ? 1.5 : 0.0);
  return q;
}

/// Largest |a - b| / max(1, |b|).
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
  return worst;
}

inline bglmm::Model make_model(const std::string& formula, const DataTable& data, const std::string& family = "gaussian",
                               std::optional<std::string> link = std::nullopt,
                               bglmm::PriorOverrides priors = {}) {
  bglmm::ModelSpec spec;
  spec.formula = formula;
  spec.data = data;
  spec.family = family;
  spec.link = std::move(link);
  spec.priors = std::move(priors);
  return bglmm::Model::build(spec);
}

/// Mixed table whose categorical factors form a replicated full factorial, so
/// every cell of every categorical interaction is observed.
/// Synthetic data whose response is valid for `family`.
inline DataTable family_table(const bglmm::Family& family, std::mt19937_64& rng, std::size_t n = 40) {
  using bglmm::FamilyName;
  DataTable t;
  const auto x = normal_values(rng, n, 0.0, 0.5);
  std::vector<double> y(n);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::poisson_distribution<int> pois(3.0);
  std::gamma_distribution<double> gam(3.0, 0.5);
  std::normal_distribution<double> nd(1.0, 1.0);
  for (auto& v : y) {
    switch (family.id) {
      case FamilyName::Gaussian:
      case FamilyName::StudentT: v = nd(rng); break;
      case FamilyName::Bernoulli: v = u(rng) < 0.4 ? 1.0 : 0.0; break;
      case FamilyName::Binomial: v = static_cast<double>(std::min(pois(rng), 6)); break;
      case FamilyName::Poisson:
      case FamilyName::NegativeBinomial: v = pois(rng); break;
      case FamilyName::Gamma:
      case FamilyName::Wald: v = gam(rng); break;
      case FamilyName::Beta: v = u(rng); break;
    }
  }
  t.add_column(DataTable::numeric_column("y", y));
  t.add_column(DataTable::numeric_column("n", std::vector<double>(n, 6.0)));
  t.add_column(DataTable::numeric_column("x", x));
  t.add_column(DataTable::categorical_column("c", categorical_values(rng, n, 3)));
  t.add_column(DataTable::categorical_column("g", categorical_values(rng, n, 4, "G")));
  return t;
}

/// Common and group terms of every kind, on the family_table columns.
inline std::string family_formula(const bglmm::Family& family) {
  const std::string rhs = " ~ x + c + (1|g) + (0 + x|g)";
  return family.id == bglmm::FamilyName::Binomial ? "prop(y, n)" + rhs : "y" + rhs;
}

struct GradientCheck {
  int checked = 0;
  double worst_gradient = 0.0;  // max relative error against the oracle
  double worst_value = 0.0;     // value returned with the gradient vs the plain evaluation
};

/// Compares the analytic gradient with a five-point oracle at up to `points`
/// moderate points. Points where the oracle disagrees with itself at half the
/// step are skipped: it cannot resolve the derivative there.
inline GradientCheck gradient_check(const bglmm::Model& m, std::mt19937_64& rng, int points = 20) {
  using bglmm::FamilyName;
  const auto id = m.family().id;
  const bool bounded = m.link() == bglmm::LinkName::Identity &&
                       (id == FamilyName::Bernoulli || id == FamilyName::Binomial || id == FamilyName::Beta);
  const auto f = [&](const Eigen::VectorXd& q) { return m.log_posterior(q); };
  GradientCheck out;
  for (int attempt = 0; attempt < 20 * points && out.checked < points; ++attempt) {
    const Eigen::VectorXd theta = moderate_point(m, rng, bounded ? 0.2 : 1.0);
    Eigen::VectorXd grad;
    const double lp = m.log_posterior_gradient(theta, grad);
    if (!std::isfinite(lp)) continue;
    const auto fd = fd_gradient(f, theta);
    if (!fd.allFinite()) continue;
    if (max_relative_error(fd_gradient(f, theta, 1e-5), fd) > 1e-7) continue;
    out.worst_gradient = std::max(out.worst_gradient, max_relative_error(grad, fd));
    out.worst_value = std::max(out.worst_value, std::abs(lp - f(theta)) / std::max(1.0, std::abs(lp)));
    ++out.checked;
  }
  return out;
}

struct RandomDesignCase {
  DataTable data;
  std::string formula;
};

inline RandomDesignCase random_design_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_cat_d(1, 4), levels_d(2, 5), n_num_d(0, 3), n_terms_d(1, 4), order_d(1, 3);
  std::bernoulli_distribution coin(0.5), drop_intercept(0.25);
  const int n_cat = n_cat_d(rng);
  const int n_num = n_num_d(rng);
  std::vector<int> levels(static_cast<std::size_t>(n_cat));
  std::size_t cells = 1;
  for (auto& l : levels) {
    l = levels_d(rng);
    cells *= static_cast<std::size_t>(l);
  }
  const std::size_t reps = std::max<std::size_t>(2, (40 + cells - 1) / cells);
  const std::size_t n = cells * reps;

  RandomDesignCase out;
  std::vector<std::string> vars;
  std::size_t stride = 1;
  for (int c = 0; c < n_cat; ++c) {
    std::vector<std::string> v(n);
    const auto l = static_cast<std::size_t>(levels[static_cast<std::size_t>(c)]);
    for (std::size_t i = 0; i < n; ++i) v[i] = "v" + std::to_string((i / stride) % l);
    stride *= l;
    const std::string name = "c" + std::to_string(c + 1);
    out.data.add_column(DataTable::categorical_column(name, v));
    vars.push_back(name);
  }
  for (int k = 0; k < n_num; ++k) {
    const std::string name = "x" + std::to_string(k + 1);
    out.data.add_column(DataTable::numeric_column(name, normal_values(rng, n, k, 1.0 + k)));
    vars.push_back(name);
  }
  out.data.add_column(DataTable::numeric_column("y", normal_values(rng, n)));

  std::uniform_int_distribution<std::size_t> pick(0, vars.size() - 1);
  std::string rhs = drop_intercept(rng) ? "0" : "1";
  const int n_terms = n_terms_d(rng);
  for (int t = 0; t < n_terms; ++t) {
    const int order = order_d(rng);
    std::string term;
    for (int f = 0; f < order; ++f) {
      if (f > 0) term += coin(rng) ? ":" : "*";
      term += vars[pick(rng)];
    }
    rhs += " + " + term;
  }
  out.formula = "y ~ " + rhs;
  return out;
}

/// Every term expanded with one indicator per level of each categorical
/// factor, plus a ones column when the model has an intercept. Its rank is
/// the dimension any full-rank coding of the same terms must reach.
inline Eigen::MatrixXd full_dummy_matrix(const bglmm::TermSet& terms, const DataTable& data) {
  const auto n = static_cast<Eigen::Index>(data.n_rows());
  std::vector<Eigen::VectorXd> cols;
  if (terms.has_intercept) cols.push_back(Eigen::VectorXd::Ones(n));
  for (const auto& term : terms.common) {
    std::vector<Eigen::VectorXd> acc{Eigen::VectorXd::Ones(n)};
    for (const auto& f : term.factors) {
      const auto& c = data.column(f.name);
      std::vector<Eigen::VectorXd> next;
      for (const auto& base : acc) {
        if (c.is_numeric()) {
          next.push_back(base.cwiseProduct(to_vector(c.numeric)));
          continue;
        }
        for (std::size_t l = 0; l < c.levels.size(); ++l) {
          Eigen::VectorXd col = base;
          for (Eigen::Index r = 0; r < n; ++r)
            if (c.codes[static_cast<std::size_t>(r)] != static_cast<int>(l)) col(r) = 0.0;
          next.push_back(col);
        }
      }
      acc = std::move(next);
    }
    for (auto& col : acc) cols.push_back(std::move(col));
  }
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = cols[j];
  return m;
}

/// Singular values at or below tol * sigma_max count as zero.
inline Eigen::Index svd_rank(const Eigen::MatrixXd& m, double tol = 1e-8) {
  if (m.cols() == 0) return 0;
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  return (s.array() > tol * s(0)).count();
}

}  // namespace testing
