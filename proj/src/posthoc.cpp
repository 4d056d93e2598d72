#include "bglmm/posthoc.hpp"

#include "bglmm/tabular.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace bglmm {

OlsFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw PosthocError("X and y have different numbers of rows");
  if (X.rows() <= X.cols()) throw PosthocError("OLS needs more observations than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) throw PosthocError("design is rank deficient");
  OlsFit fit;
  fit.coefficients = qr.solve(y);
  fit.residuals = y - X * fit.coefficients;
  const double sst = (y.array() - y.mean()).square().sum();
  const double ssr = fit.residuals.squaredNorm();
  fit.rsquared = sst > 0 ? 1.0 - ssr / sst : 0.0;
  return fit;
}

namespace {

Eigen::MatrixXd with_intercept_without(const Eigen::MatrixXd& predictors, Eigen::Index k) {
  Eigen::MatrixXd X(predictors.rows(), predictors.cols());
  X.col(0).setOnes();
  Eigen::Index c = 1;
  for (Eigen::Index j = 0; j < predictors.cols(); ++j)
    if (j != k) X.col(c++) = predictors.col(j);
  return X;
}

}  // namespace

double partial_corr_constant(const Eigen::MatrixXd& predictors, const Eigen::VectorXd& y, Eigen::Index k) {
  if (k < 0 || k >= predictors.cols()) throw PosthocError("predictor index out of range");
  const Eigen::MatrixXd others = with_intercept_without(predictors, k);
  const double r2_x = ols_fit(others, predictors.col(k)).rsquared;
  const double r2_y = ols_fit(others, y).rsquared;
  if (r2_y >= 1.0) throw PosthocError("response is perfectly explained by the other predictors");
  const double sd_x = column_stats(predictors.col(k)).sd;
  const double sd_y = column_stats(y).sd;
  return sd_x / sd_y * std::sqrt((1.0 - r2_x) / (1.0 - r2_y));
}

std::vector<PartialCorrelation> partial_corr_transform(const PosteriorDraws& draws, const Eigen::MatrixXd& predictors,
                                                       const std::vector<std::string>& predictor_names,
                                                       const Eigen::VectorXd& y,
                                                       const std::vector<std::string>& requested) {
  if (requested.empty()) throw PosthocError("no predictors requested");
  std::vector<PartialCorrelation> out;
  for (const auto& name : requested) {
    const auto it = std::find(predictor_names.begin(), predictor_names.end(), name);
    if (it == predictor_names.end()) throw PosthocError("'" + name + "' is not a common predictor of the model");
    PartialCorrelation pc;
    pc.predictor = name;
    pc.constant = partial_corr_constant(predictors, y, it - predictor_names.begin());
    pc.rho = draws.parameter(name) * pc.constant;
    pc.rho_squared = pc.rho.array().square().matrix();
    pc.out_of_range = (pc.rho.array().abs() > 1.0).count();
    out.push_back(std::move(pc));
  }
  return out;
}

std::vector<PartialCorrelation> partial_corr_transform(const Model& model, const PosteriorDraws& draws,
                                                       const std::vector<std::string>& requested) {
  const DesignMatrices& d = model.design();
  const Eigen::Index first = d.has_intercept ? 1 : 0;
  const Eigen::MatrixXd X = d.uncentered_X().rightCols(d.X.cols() - first);
  const std::vector<std::string> names(d.x_names.begin() + first, d.x_names.end());
  Eigen::VectorXd y = d.response.values;
  if (d.response.trials) y = y.cwiseQuotient(*d.response.trials);
  return partial_corr_transform(draws, X, names, y, requested);
}

double exceedance_probability(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw PosthocError("draw arrays differ in length");
  if (a.size() == 0) throw PosthocError("no draws");
  return static_cast<double>((a.array().square() > b.array().square()).count()) / static_cast<double>(a.size());
}

}  // namespace bglmm
