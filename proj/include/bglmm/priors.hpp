#pragma once

#include "bglmm/design.hpp"
#include "bglmm/families.hpp"
#include "bglmm/tabular.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bglmm {

class PriorError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Distribution { Normal, HalfNormal, HalfStudentT, HalfCauchy, Gamma, Uniform };

/// A named distribution with its parameters:
///   Normal(mu, sigma), HalfNormal(sigma), HalfStudentT(nu, sigma),
///   HalfCauchy(beta), Gamma(alpha, beta) with beta a rate, Uniform(lower, upper).
/// The half distributions are the location-0 distribution truncated to [0, inf).
class PriorSpec {
public:
  PriorSpec() = default;
  /// Validates parameter names and ranges.
  PriorSpec(Distribution dist, std::map<std::string, double> params);

  static PriorSpec normal(double mu, double sigma) { return {Distribution::Normal, {{"mu", mu}, {"sigma", sigma}}}; }
  static PriorSpec half_normal(double sigma) { return {Distribution::HalfNormal, {{"sigma", sigma}}}; }
  static PriorSpec half_student_t(double nu, double sigma) {
    return {Distribution::HalfStudentT, {{"nu", nu}, {"sigma", sigma}}};
  }
  static PriorSpec half_cauchy(double beta) { return {Distribution::HalfCauchy, {{"beta", beta}}}; }
  static PriorSpec gamma(double alpha, double beta) { return {Distribution::Gamma, {{"alpha", alpha}, {"beta", beta}}}; }
  static PriorSpec uniform(double lower, double upper) {
    return {Distribution::Uniform, {{"lower", lower}, {"upper", upper}}};
  }

  Distribution distribution() const { return dist_; }
  std::string distribution_name() const;
  double param(const std::string& name) const;
  /// Parameters in canonical order.
  std::vector<std::pair<std::string, double>> params() const;

  /// True when the support lies in [0, inf).
  bool nonnegative_support() const;
  double log_density(double x) const;
  /// d log_density / dx inside the support.
  double dlog_density(double x) const;
  double sample(std::mt19937_64& rng) const;
  /// Location used to initialize the sampler.
  double center() const;
  /// Standard deviation for Normal, the scale parameter for the half families.
  double scale() const;

  /// "Normal(mu: 0.0000, sigma: 1.0000)".
  std::string to_string(int decimals = 4) const;

  bool operator==(const PriorSpec& other) const { return dist_ == other.dist_ && params_ == other.params_; }

private:
  Distribution dist_ = Distribution::Normal;
  std::map<std::string, double> params_{{"mu", 0.0}, {"sigma", 1.0}};
};

Distribution parse_distribution(const std::string& name);
std::string distribution_name(Distribution dist);

enum class Provenance { Default, Override };

struct PriorEntry {
  std::string name;  // reported name: "x", "c[B]", "1|g", "sigma"
  std::string term;  // owning term for override lookup: "x", "c", "1|g", "c|g"
  PriorSpec spec;
  Provenance provenance = Provenance::Default;
  Eigen::Index n_levels = 0;  // group SDs only: coefficients sharing this SD
};

/// Priors for every sampled quantity. The intercept prior applies to the
/// intercept of the centered design.
struct PriorSet {
  std::optional<PriorEntry> intercept;
  std::vector<PriorEntry> common;      // one per non-intercept X column
  std::vector<PriorEntry> group_sd;    // one per expr column per grouping factor
  std::vector<PriorEntry> auxiliary;   // family order

  Eigen::Index n_group_coefficients() const;
};

// ---------------------------------------------------------------------------
// Default priors.

/// Response moments on the scale used by the default priors: sd(Y) and var(Y)
/// are 1 for families other than gaussian and t, and the mean is taken of the
/// observed proportions for binomial.
struct ResponseScale {
  double mean = 0.0;
  double sd = 1.0;
};
ResponseScale response_scale(const ResponseInfo& response, const Family& family);

/// Normal(0, 2.5 sd(Y) / sd(X)).
PriorSpec default_slope_prior(const ResponseScale& y, const ColumnStats& x, const std::string& name);

/// Normal(m, sqrt(var(Y) + sum xbar_j^2 var(beta_j))) with m the mean response,
/// passed through the link when it is not the identity.
PriorSpec default_intercept_prior(const ResponseScale& y, LinkName link, const Eigen::VectorXd& column_means,
                                  const std::vector<PriorSpec>& slopes);

std::vector<PriorEntry> default_auxiliary_priors(const Family& family, const ResponseScale& y);

/// Defaults for a built design: slopes, intercept, group SDs, auxiliaries.
PriorSet default_priors(const DesignMatrices& design, const Family& family, LinkName link);

// ---------------------------------------------------------------------------
// Overrides.

/// Three channels: all common slopes, all group SDs, and individual names.
/// Group entries are priors on the standard deviation.
struct PriorOverrides {
  std::optional<PriorSpec> common;
  std::optional<PriorSpec> group_specific;
  std::map<std::string, PriorSpec> terms;

  bool empty() const { return !common && !group_specific && terms.empty(); }
};

/// Per-name entries win over class entries, which win over defaults.
/// `response` lets auxiliary names be given as "<response>_sigma".
PriorSet apply_overrides(const PriorSet& defaults, const PriorOverrides& overrides, const std::string& response = "");

// ---------------------------------------------------------------------------
// Densities and simulation.

/// Constrained values of every prior-carrying quantity, in PriorSet order.
struct PriorPoint {
  double intercept = 0.0;
  Eigen::VectorXd slopes;
  Eigen::VectorXd group_sds;
  Eigen::VectorXd group_coefficients;  // u, expr-major within each SD block
  Eigen::VectorXd aux;
};

/// Sum of prior log densities including u ~ Normal(0, sd). Fills `grad` with
/// partials wrt each constrained value when given.
double log_prior(const PriorSet& priors, const PriorPoint& point, PriorPoint* grad = nullptr);

struct DrawTable {
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // draws x parameters
};

/// Independent prior draws; group coefficients are drawn given a drawn SD.
/// Columns: Intercept, slopes, "<sd>_sigma", "<sd>[level]", "<response>_<aux>".
DrawTable sample_priors(const PriorSet& priors, const DesignMatrices& design, Eigen::Index n, std::uint64_t seed);

/// Indented block with "Common-level effects", "Group-level effects" and
/// "Auxiliary parameters" sections.
std::string format_priors(const PriorSet& priors, int indent = 2);

}  // namespace bglmm
