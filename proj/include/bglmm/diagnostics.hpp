#pragma once

#include "bglmm/sampler.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace bglmm {

class DiagnosticsError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// All chain arguments are chains x draws.

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Shortest interval over the sorted draws holding ceil(prob * n) of them.
Interval hdi(const Eigen::Ref<const Eigen::VectorXd>& draws, double prob = 0.94);

/// Average ranks (1-based) of all entries, ties sharing their mean rank.
Eigen::MatrixXd average_ranks(const Eigen::MatrixXd& values);
/// Each chain cut in two halves; the middle draw is dropped when the count is odd.
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& chains);
/// Normal scores of the joint ranks: Phi^-1((r - 3/8) / (S + 1/4)).
Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& chains);

/// Rank-normalized split R-hat; max of the bulk and folded statistics.
/// 1.0 for constant input.
double r_hat(const Eigen::MatrixXd& chains);

/// ESS of the chains as given (no splitting or ranking), Geyer initial
/// monotone sequence. chains x draws for constant input.
double ess_raw(const Eigen::MatrixXd& chains);
double ess_bulk(const Eigen::MatrixXd& chains);
/// Minimum ESS of the 5% and 95% quantile indicators.
double ess_tail(const Eigen::MatrixXd& chains);

double mcse_mean(const Eigen::MatrixXd& chains);
double mcse_sd(const Eigen::MatrixXd& chains);

/// Linear-interpolation sample quantile.
double quantile(const Eigen::Ref<const Eigen::VectorXd>& values, double q);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double hdi_low = 0.0;
  double hdi_high = 0.0;
  double mcse_mean = 0.0;
  double mcse_sd = 0.0;
  double ess_bulk = 0.0;
  double ess_tail = 0.0;
  double r_hat = 1.0;
};

/// Column headers: name, mean, sd, hdi_3%, hdi_97%, mcse_mean, mcse_sd, ess_bulk, ess_tail, r_hat.
const std::vector<std::string>& summary_columns();

SummaryRow summarize_parameter(const std::string& name, const Eigen::MatrixXd& chains, double hdi_prob = 0.94);
std::vector<SummaryRow> summarize(const PosteriorDraws& draws, double hdi_prob = 0.94);

/// Full-precision CSV.
std::string summary_csv(const std::vector<SummaryRow>& rows);
/// Aligned text table with values rounded to `decimals`.
std::string summary_text(const std::vector<SummaryRow>& rows, int decimals = 3);

/// Joint ranks binned per chain: chains x bins counts.
Eigen::MatrixXi rank_histogram_data(const Eigen::MatrixXd& chains, int bins = 20);

}  // namespace bglmm
