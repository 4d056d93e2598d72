#pragma once

#include "bglmm/design.hpp"
#include "bglmm/families.hpp"
#include "bglmm/formula.hpp"
#include "bglmm/priors.hpp"
#include "bglmm/tabular.hpp"

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bglmm {

class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Everything that defines one analysis.
struct ModelSpec {
  std::string formula;
  DataTable data;
  std::string family = "gaussian";
  std::optional<std::string> link;  // family default when empty
  PriorOverrides priors;
  bool dropna = false;
  DesignOptions design;
};

/// Positions of each block in the unconstrained vector
///   [beta (X columns, intercept first)] [log group SDs] [u tilde] [aux, log when positive]
/// with u = sd * u_tilde. Reported vectors use the same order on the natural
/// scale, with the intercept mapped back to uncentered predictors.
struct ParameterLayout {
  Eigen::Index n_beta = 0;
  Eigen::Index n_sd = 0;
  Eigen::Index n_u = 0;
  Eigen::Index n_aux = 0;
  std::vector<Eigen::Index> u_sd;   // SD index of each u
  std::vector<bool> aux_positive;

  Eigen::Index sd_offset() const { return n_beta; }
  Eigen::Index u_offset() const { return n_beta + n_sd; }
  Eigen::Index aux_offset() const { return n_beta + n_sd + n_u; }
  Eigen::Index size() const { return n_beta + n_sd + n_u + n_aux; }
};

class Model {
public:
  static Model build(const ModelSpec& spec);
  /// Assembles a model from parts, e.g. when replaying a saved fit.
  Model(TermSet terms, const Family& family, LinkName link, DesignBuild design, PriorSet priors, DataTable data,
        std::string formula);

  const std::string& formula() const { return formula_; }
  const TermSet& terms() const { return terms_; }
  const Family& family() const { return *family_; }
  LinkName link() const { return link_; }
  const DesignMatrices& design() const { return design_.design; }
  const TransformState& transforms() const { return design_.state; }
  const PriorSet& priors() const { return priors_; }
  const DataTable& data() const { return data_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t dropped_rows() const { return dropped_; }

  Eigen::Index dim() const { return layout_.size(); }
  /// Reported names: Intercept, slopes, "<expr>|<g>_sigma", "<expr>|<g>[level]", "<response>_<aux>".
  const std::vector<std::string>& parameter_names() const { return names_; }

  /// Log posterior on the unconstrained scale, Jacobians included. -inf when
  /// any term is non-finite.
  double log_posterior(const Eigen::VectorXd& theta) const;
  /// Same value; writes the gradient (zeros when the value is -inf).
  double log_posterior_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;

  /// Likelihood part alone.
  double log_likelihood(const Eigen::VectorXd& theta) const;
  /// Prior part with Jacobians, on the unconstrained scale.
  double log_prior_unconstrained(const Eigen::VectorXd& theta) const;

  /// Unconstrained -> reported scale.
  Eigen::VectorXd to_reported(const Eigen::VectorXd& theta) const;
  /// Reported -> unconstrained scale.
  Eigen::VectorXd from_reported(const Eigen::VectorXd& reported) const;

  /// Jittered prior centers, retried while the log posterior is not finite.
  Eigen::VectorXd initialize(std::mt19937_64& rng, int max_tries = 100) const;

  /// Constrained prior point of an unconstrained vector (u on its natural scale).
  PriorPoint prior_point(const Eigen::VectorXd& theta) const;

private:
  struct Split;
  Split split(const Eigen::VectorXd& theta) const;
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, bool likelihood, bool prior) const;

  std::string formula_;
  TermSet terms_;
  const Family* family_;
  LinkName link_;
  DesignBuild design_;
  PriorSet priors_;
  DataTable data_;
  std::size_t dropped_ = 0;
  ParameterLayout layout_;
  std::vector<std::string> names_;
  Eigen::Index first_slope_ = 0;
};

}  // namespace bglmm
