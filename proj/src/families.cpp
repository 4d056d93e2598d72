#include "bglmm/families.hpp"

#include <algorithm>
#include <numbers>

namespace bglmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::vector<Family> make_registry() {
  using L = LinkName;
  using F = FamilyName;
  return {
      {F::Bernoulli, "bernoulli", "Bernoulli", L::Logit, {L::Logit, L::Probit, L::Cloglog, L::Identity}, {}},
      {F::Beta, "beta", "Beta", L::Logit, {L::Logit, L::Probit, L::Cloglog, L::Identity}, {{"kappa", true}}},
      {F::Binomial, "binomial", "Binomial", L::Logit, {L::Logit, L::Probit, L::Cloglog, L::Identity}, {}},
      {F::Gamma, "gamma", "Gamma", L::Inverse, {L::Inverse, L::Identity, L::Log}, {{"alpha", true}}},
      {F::Gaussian, "gaussian", "Normal", L::Identity, {L::Identity, L::Log, L::Inverse}, {{"sigma", true}}},
      {F::NegativeBinomial, "negativebinomial", "NegativeBinomial", L::Log, {L::Log, L::Identity, L::Cloglog},
       {{"alpha", true}}},
      {F::Poisson, "poisson", "Poisson", L::Log, {L::Log, L::Identity}, {}},
      {F::StudentT, "t", "StudentT", L::Identity, {L::Identity, L::Log, L::Inverse}, {{"sigma", true}, {"nu", true}}},
      {F::Wald, "wald", "InverseGaussian", L::InverseSquared, {L::InverseSquared, L::Inverse, L::Identity, L::Log},
       {{"lam", true}}},
  };
}

double clamp_prob(double mu) { return std::clamp(mu, kMuClamp, 1.0 - kMuClamp); }

/// Probability mean and its complement held inside [kMuClamp, 1 - kMuClamp].
struct ClampedProb {
  double m, q;
  bool clamped;
};

ClampedProb clamp_pair(double mu, double complement) {
  if (!(mu >= 0.0 && complement >= 0.0)) return {0.0, 0.0, true};
  if (mu < kMuClamp) return {kMuClamp, 1.0 - kMuClamp, true};
  if (complement < kMuClamp) return {1.0 - kMuClamp, kMuClamp, true};
  return {mu, complement, false};
}

bool is_count(double y) { return y >= 0 && std::floor(y) == y; }

}  // namespace

bool Family::allows(LinkName link) const {
  return std::find(allowed_links.begin(), allowed_links.end(), link) != allowed_links.end();
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> registry = make_registry();
  return registry;
}

const Family& get_family(std::string_view name) {
  for (const auto& f : all_families())
    if (f.name == name) return f;
  throw std::invalid_argument("unknown family '" + std::string(name) + "'");
}

LinkName parse_link(std::string_view name) {
  if (name == "identity") return LinkName::Identity;
  if (name == "log") return LinkName::Log;
  if (name == "logit") return LinkName::Logit;
  if (name == "probit") return LinkName::Probit;
  if (name == "cloglog") return LinkName::Cloglog;
  if (name == "inverse") return LinkName::Inverse;
  if (name == "inverse_squared") return LinkName::InverseSquared;
  throw std::invalid_argument("unknown link '" + std::string(name) + "'");
}

std::string_view link_name(LinkName link) {
  switch (link) {
    case LinkName::Identity: return "identity";
    case LinkName::Log: return "log";
    case LinkName::Logit: return "logit";
    case LinkName::Probit: return "probit";
    case LinkName::Cloglog: return "cloglog";
    case LinkName::Inverse: return "inverse";
    case LinkName::InverseSquared: return "inverse_squared";
  }
  return "?";
}

ObsDerivatives log_density_derivatives(const Family& family, double y, double trials, double mu,
                                       std::span<const double> aux) {
  return log_density_derivatives(family, y, trials, mu, 1.0 - mu, aux);
}

ObsDerivatives log_density_derivatives(const Family& family, double y, double trials, double mu, double mu_complement,
                                       std::span<const double> aux) {
  ObsDerivatives d;
  if (!std::isfinite(mu)) {
    d.value = kNegInf;
    return d;
  }
  switch (family.id) {
    case FamilyName::Gaussian: {
      const double s = aux[0];
      if (!(s > 0)) break;
      const double r = y - mu;
      d.value = -kHalfLog2Pi - std::log(s) - r * r / (2 * s * s);
      d.dmu = r / (s * s);
      d.daux[0] = -1 / s + r * r / (s * s * s);
      return d;
    }
    case FamilyName::StudentT: {
      const double s = aux[0];
      const double nu = aux[1];
      if (!(s > 0 && nu > 0)) break;
      const double r = y - mu;
      const double z2 = r * r / (s * s);
      d.value = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * std::numbers::pi) -
                std::log(s) - (nu + 1) / 2 * std::log1p(z2 / nu);
      d.dmu = (nu + 1) * r / (nu * s * s + r * r);
      d.daux[0] = -1 / s + (nu + 1) * z2 / (s * (nu + z2));
      d.daux[1] = 0.5 * digamma((nu + 1) / 2) - 0.5 * digamma(nu / 2) - 1 / (2 * nu) -
                  0.5 * std::log1p(z2 / nu) + (nu + 1) * z2 / (2 * nu * (nu + z2));
      return d;
    }
    case FamilyName::Bernoulli: {
      const auto [m, q, clamped] = clamp_pair(mu, mu_complement);
      if (m == 0.0) break;
      d.value = y * std::log(m) + (1 - y) * std::log(q);
      d.dmu = clamped ? 0.0 : y / m - (1 - y) / q;
      return d;
    }
    case FamilyName::Binomial: {
      const auto [m, q, clamped] = clamp_pair(mu, mu_complement);
      if (m == 0.0) break;
      d.value = std::lgamma(trials + 1) - std::lgamma(y + 1) - std::lgamma(trials - y + 1) + y * std::log(m) +
                (trials - y) * std::log(q);
      d.dmu = clamped ? 0.0 : y / m - (trials - y) / q;
      return d;
    }
    case FamilyName::Poisson: {
      if (!(mu > 0)) break;
      d.value = y * std::log(mu) - mu - std::lgamma(y + 1);
      d.dmu = y / mu - 1;
      return d;
    }
    case FamilyName::NegativeBinomial: {
      const double a = aux[0];
      if (!(mu > 0 && a > 0)) break;
      const double log_am = std::log(a + mu);
      d.value = std::lgamma(y + a) - std::lgamma(a) - std::lgamma(y + 1) + a * (std::log(a) - log_am) +
                y * (std::log(mu) - log_am);
      d.dmu = y / mu - (a + y) / (a + mu);
      d.daux[0] = digamma(y + a) - digamma(a) + std::log(a) + 1 - log_am - (a + y) / (a + mu);
      return d;
    }
    case FamilyName::Gamma: {
      const double a = aux[0];
      if (!(mu > 0 && a > 0)) break;
      d.value = a * (std::log(a) - std::log(mu)) - std::lgamma(a) + (a - 1) * std::log(y) - a * y / mu;
      d.dmu = a * (y - mu) / (mu * mu);
      d.daux[0] = std::log(a) + 1 - std::log(mu) - digamma(a) + std::log(y) - y / mu;
      return d;
    }
    case FamilyName::Beta: {
      const double k = aux[0];
      if (!(k > 0)) break;
      const auto [m, q, clamped] = clamp_pair(mu, mu_complement);
      if (m == 0.0) break;
      const double a = m * k;
      const double b = q * k;
      const double ly = std::log(y);
      const double l1y = std::log1p(-y);
      d.value = std::lgamma(k) - std::lgamma(a) - std::lgamma(b) + (a - 1) * ly + (b - 1) * l1y;
      d.dmu = clamped ? 0.0 : k * (digamma(b) - digamma(a) + ly - l1y);
      d.daux[0] = digamma(k) - m * digamma(a) - q * digamma(b) + m * ly + q * l1y;
      return d;
    }
    case FamilyName::Wald: {
      const double lam = aux[0];
      if (!(mu > 0 && lam > 0)) break;
      const double r = y - mu;
      const double q = r * r / (2 * mu * mu * y);
      d.value = 0.5 * std::log(lam) - 0.5 * std::log(2 * std::numbers::pi * y * y * y) - lam * q;
      d.dmu = lam * r / (mu * mu * mu);
      d.daux[0] = 1 / (2 * lam) - q;
      return d;
    }
  }
  d.value = kNegInf;
  d.dmu = 0;
  return d;
}

double log_density(const Family& family, double y, double trials, double mu, std::span<const double> aux) {
  return log_density_derivatives(family, y, trials, mu, aux).value;
}

void validate_response(const Family& family, const ResponseInfo& response) {
  const auto& y = response.values;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y(i);
    const auto fail = [&](const std::string& why) {
      throw DomainError(family.name + " response " + why + " (row " + std::to_string(i + 1) + ", value " +
                        std::to_string(v) + ")");
    };
    if (!std::isfinite(v)) fail("must be finite");
    switch (family.id) {
      case FamilyName::Bernoulli:
        if (v != 0 && v != 1) fail("must be 0 or 1");
        break;
      case FamilyName::Binomial: {
        const double n = response.trials_at(i);
        if (!is_count(v) || !is_count(n) || v > n) fail("must satisfy 0 <= successes <= trials");
        break;
      }
      case FamilyName::Poisson:
      case FamilyName::NegativeBinomial:
        if (!is_count(v)) fail("must be a non-negative integer");
        break;
      case FamilyName::Gamma:
      case FamilyName::Wald:
        if (!(v > 0)) fail("must be positive");
        break;
      case FamilyName::Beta:
        if (!(v > 0 && v < 1)) fail("must lie in (0, 1)");
        break;
      case FamilyName::Gaussian:
      case FamilyName::StudentT:
        break;
    }
  }
}

double log_likelihood(const Family& family, const ResponseInfo& y, const Eigen::VectorXd& mu,
                      std::span<const double> aux) {
  validate_response(family, y);
  double total = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) total += log_density(family, y.values(i), y.trials_at(i), mu(i), aux);
  return total;
}

Eigen::VectorXd dloglik_dmu(const Family& family, const ResponseInfo& y, const Eigen::VectorXd& mu,
                            std::span<const double> aux) {
  validate_response(family, y);
  Eigen::VectorXd out(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    out(i) = log_density_derivatives(family, y.values(i), y.trials_at(i), mu(i), aux).dmu;
  return out;
}

Eigen::MatrixXd dloglik_daux(const Family& family, const ResponseInfo& y, const Eigen::VectorXd& mu,
                             std::span<const double> aux) {
  validate_response(family, y);
  const auto k = static_cast<Eigen::Index>(family.auxiliary.size());
  Eigen::MatrixXd out(mu.size(), k);
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const auto d = log_density_derivatives(family, y.values(i), y.trials_at(i), mu(i), aux);
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = d.daux[j];
  }
  return out;
}

double sample_response(const Family& family, double mu, double trials, std::span<const double> aux,
                       std::mt19937_64& rng) {
  switch (family.id) {
    case FamilyName::Gaussian:
      return std::normal_distribution<double>(mu, aux[0])(rng);
    case FamilyName::StudentT:
      return mu + aux[0] * std::student_t_distribution<double>(aux[1])(rng);
    case FamilyName::Bernoulli:
      return std::bernoulli_distribution(clamp_prob(mu))(rng) ? 1.0 : 0.0;
    case FamilyName::Binomial:
      return static_cast<double>(
          std::binomial_distribution<long long>(static_cast<long long>(trials), clamp_prob(mu))(rng));
    case FamilyName::Poisson:
      return static_cast<double>(std::poisson_distribution<long long>(mu)(rng));
    case FamilyName::NegativeBinomial: {
      // Gamma-Poisson mixture: rate ~ Gamma(alpha, scale mu / alpha).
      const double a = aux[0];
      const double rate = std::gamma_distribution<double>(a, mu / a)(rng);
      return rate > 0 ? static_cast<double>(std::poisson_distribution<long long>(rate)(rng)) : 0.0;
    }
    case FamilyName::Gamma:
      return std::gamma_distribution<double>(aux[0], mu / aux[0])(rng);
    case FamilyName::Beta: {
      const double m = clamp_prob(mu);
      const double a = std::gamma_distribution<double>(m * aux[0], 1.0)(rng);
      const double b = std::gamma_distribution<double>((1 - m) * aux[0], 1.0)(rng);
      return a / (a + b);
    }
    case FamilyName::Wald: {
      // Michael, Schucany & Haas transformation method.
      const double lam = aux[0];
      const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
      const double v = z * z;
      const double x = mu + mu * mu * v / (2 * lam) - mu / (2 * lam) * std::sqrt(4 * mu * lam * v + mu * mu * v * v);
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      return u <= mu / (mu + x) ? x : mu * mu / x;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace bglmm
