#pragma once

#include "bglmm/special.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bglmm {

class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

enum class LinkName { Identity, Log, Logit, Probit, Cloglog, Inverse, InverseSquared };
enum class FamilyName { Bernoulli, Beta, Binomial, Gamma, Gaussian, NegativeBinomial, Poisson, StudentT, Wald };

struct AuxParam {
  std::string name;
  bool positive = true;
};

struct Family {
  FamilyName id;
  std::string name;           // registry key, e.g. "negativebinomial"
  std::string distribution;   // response distribution, e.g. "NegativeBinomial"
  LinkName default_link;
  std::vector<LinkName> allowed_links;
  std::vector<AuxParam> auxiliary;

  bool allows(LinkName link) const;
  /// sd(Y) enters the default priors only for these families; otherwise 1.
  bool uses_response_scale() const { return id == FamilyName::Gaussian || id == FamilyName::StudentT; }
  bool probability_mean() const {
    return id == FamilyName::Bernoulli || id == FamilyName::Binomial || id == FamilyName::Beta;
  }
};

const Family& get_family(std::string_view name);
const std::vector<Family>& all_families();

LinkName parse_link(std::string_view name);
std::string_view link_name(LinkName link);

/// Observed response after level mapping: 0/1 for bernoulli, successes with
/// `trials` for binomial, raw values otherwise.
struct ResponseInfo {
  std::string name;
  Eigen::VectorXd values;
  std::optional<std::string> success_level;
  std::optional<Eigen::VectorXd> trials;

  double trials_at(Eigen::Index i) const { return trials ? (*trials)(i) : 1.0; }
};

// ---------------------------------------------------------------------------
// Links. The `_unchecked` forms return NaN/inf outside the domain instead of
// throwing and are what the sampler's inner loop uses.

namespace detail {

template <typename Scalar>
Scalar link_inverse_unchecked(LinkName link, Scalar eta) {
  using std::exp;
  using std::sqrt;
  switch (link) {
    case LinkName::Identity: return eta;
    case LinkName::Log: return exp(eta);
    case LinkName::Logit: return eta >= 0 ? 1 / (1 + exp(-eta)) : exp(eta) / (1 + exp(eta));
    case LinkName::Probit: return normal_cdf(eta);
    case LinkName::Cloglog: return -std::expm1(-exp(eta));
    case LinkName::Inverse: return 1 / eta;
    case LinkName::InverseSquared:
      return eta > 0 ? 1 / sqrt(eta) : std::numeric_limits<Scalar>::quiet_NaN();
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

/// 1 - g^-1(eta), computed without cancellation where the link allows it.
template <typename Scalar>
Scalar link_inverse_complement_unchecked(LinkName link, Scalar eta) {
  using std::exp;
  switch (link) {
    case LinkName::Identity: return 1 - eta;
    case LinkName::Logit: return link_inverse_unchecked(link, -eta);
    case LinkName::Probit: return normal_cdf(-eta);
    case LinkName::Cloglog: return exp(-exp(eta));
    default: return 1 - link_inverse_unchecked(link, eta);
  }
}

template <typename Scalar>
Scalar link_inverse_derivative_unchecked(LinkName link, Scalar eta) {
  using std::exp;
  using std::pow;
  switch (link) {
    case LinkName::Identity: return 1;
    case LinkName::Log: return exp(eta);
    case LinkName::Logit: return link_inverse_unchecked(link, eta) * link_inverse_complement_unchecked(link, eta);
    case LinkName::Probit: return normal_pdf(eta);
    case LinkName::Cloglog: return exp(eta - exp(eta));
    case LinkName::Inverse: return -1 / (eta * eta);
    case LinkName::InverseSquared:
      return eta > 0 ? Scalar(-0.5) * pow(eta, Scalar(-1.5)) : std::numeric_limits<Scalar>::quiet_NaN();
  }
  return std::numeric_limits<Scalar>::quiet_NaN();
}

}  // namespace detail

/// g(mu).
template <typename Scalar>
Scalar link_apply(LinkName link, Scalar mu) {
  using std::log;
  switch (link) {
    case LinkName::Identity: return mu;
    case LinkName::Log:
      if (!(mu > 0)) throw DomainError("log link needs mu > 0");
      return log(mu);
    case LinkName::Logit:
      if (!(mu > 0 && mu < 1)) throw DomainError("logit link needs 0 < mu < 1");
      return log(mu / (1 - mu));
    case LinkName::Probit:
      if (!(mu > 0 && mu < 1)) throw DomainError("probit link needs 0 < mu < 1");
      return normal_quantile(mu);
    case LinkName::Cloglog:
      if (!(mu > 0 && mu < 1)) throw DomainError("cloglog link needs 0 < mu < 1");
      return log(-std::log1p(-mu));
    case LinkName::Inverse:
      if (!(mu > 0)) throw DomainError("inverse link needs mu > 0");
      return 1 / mu;
    case LinkName::InverseSquared:
      if (!(mu > 0)) throw DomainError("inverse_squared link needs mu > 0");
      return 1 / (mu * mu);
  }
  throw DomainError("unknown link");
}

/// g^-1(eta).
template <typename Scalar>
Scalar link_inverse(LinkName link, Scalar eta) {
  if (link == LinkName::InverseSquared && !(eta > 0)) throw DomainError("inverse_squared link needs eta > 0");
  if (link == LinkName::Inverse && eta == 0) throw DomainError("inverse link needs eta != 0");
  return detail::link_inverse_unchecked(link, eta);
}

/// d g^-1(eta) / d eta.
template <typename Scalar>
Scalar link_inverse_derivative(LinkName link, Scalar eta) {
  if (link == LinkName::InverseSquared && !(eta > 0)) throw DomainError("inverse_squared link needs eta > 0");
  if (link == LinkName::Inverse && eta == 0) throw DomainError("inverse link needs eta != 0");
  return detail::link_inverse_derivative_unchecked(link, eta);
}

template <typename Derived>
Eigen::ArrayXd link_inverse(LinkName link, const Eigen::DenseBase<Derived>& eta) {
  return eta.derived().array().unaryExpr([link](double e) { return detail::link_inverse_unchecked(link, e); });
}

// ---------------------------------------------------------------------------
// Likelihoods, mean parameterized.

/// Bound applied to mu before taking logs in the probability-mean families.
inline constexpr double kMuClamp = 1e-12;

struct ObsDerivatives {
  double value = 0.0;
  double dmu = 0.0;
  double daux[2] = {0.0, 0.0};
};

/// Log density of one observation; -inf when mu or aux is outside the family's domain.
double log_density(const Family& family, double y, double trials, double mu, std::span<const double> aux);
/// Value and analytic partials wrt mu and each auxiliary parameter.
ObsDerivatives log_density_derivatives(const Family& family, double y, double trials, double mu,
                                       std::span<const double> aux);
/// Same, with 1 - mu supplied separately so probability means near 1 keep
/// their precision. Where the clamp is active the density is flat in mu and
/// dmu is 0.
ObsDerivatives log_density_derivatives(const Family& family, double y, double trials, double mu, double mu_complement,
                                       std::span<const double> aux);

/// Throws DomainError for responses outside the family's support.
void validate_response(const Family& family, const ResponseInfo& response);

double log_likelihood(const Family& family, const ResponseInfo& y, const Eigen::VectorXd& mu,
                      std::span<const double> aux);
Eigen::VectorXd dloglik_dmu(const Family& family, const ResponseInfo& y, const Eigen::VectorXd& mu,
                            std::span<const double> aux);
/// n x n_aux matrix of per-observation partials.
Eigen::MatrixXd dloglik_daux(const Family& family, const ResponseInfo& y, const Eigen::VectorXd& mu,
                             std::span<const double> aux);

/// One draw from D(mu, aux).
double sample_response(const Family& family, double mu, double trials, std::span<const double> aux,
                       std::mt19937_64& rng);

}  // namespace bglmm
