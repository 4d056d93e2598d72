#pragma once

#include "bglmm/model.hpp"
#include "bglmm/sampler.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace bglmm {

class PosthocError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct OlsFit {
  Eigen::VectorXd coefficients;
  double rsquared = 0.0;
  Eigen::VectorXd residuals;
};

/// Least squares by column-pivoted QR. `X` must carry its own intercept
/// column; R^2 = 1 - SSR/SST.
OlsFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// sd(X_k)/sd(Y) * sqrt((1 - R^2_{X_k|X_-k}) / (1 - R^2_{Y|X_-k})), with each
/// R^2 from an intercept regression on the other columns of `predictors`.
double partial_corr_constant(const Eigen::MatrixXd& predictors, const Eigen::VectorXd& y, Eigen::Index k);

struct PartialCorrelation {
  std::string predictor;
  double constant = 0.0;
  Eigen::MatrixXd rho;          // chains x draws
  Eigen::MatrixXd rho_squared;  // chains x draws
  Eigen::Index out_of_range = 0;  // |rho| > 1
};

/// Slope draws of each requested predictor mapped to the partial-correlation scale.
std::vector<PartialCorrelation> partial_corr_transform(const PosteriorDraws& draws, const Eigen::MatrixXd& predictors,
                                                       const std::vector<std::string>& predictor_names,
                                                       const Eigen::VectorXd& y,
                                                       const std::vector<std::string>& requested);

/// Uses the model's non-intercept common columns and its response.
std::vector<PartialCorrelation> partial_corr_transform(const Model& model, const PosteriorDraws& draws,
                                                       const std::vector<std::string>& requested);

/// Fraction of paired draws with a^2 > b^2.
double exceedance_probability(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace bglmm
