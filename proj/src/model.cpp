#include "bglmm/model.hpp"

#include <cmath>
#include <numbers>

namespace bglmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

struct Model::Split {
  Eigen::VectorXd beta, sd, u_tilde, u, aux;
};

Model Model::build(const ModelSpec& spec) {
  TermSet terms = parse_terms(spec.formula);
  const Family& family = get_family(spec.family);
  const LinkName link = spec.link ? parse_link(*spec.link) : family.default_link;
  if (!family.allows(link))
    throw ModelError("link '" + std::string(link_name(link)) + "' is not available for family '" + family.name + "'");

  const auto vars = terms.variables();
  for (const auto& v : vars) spec.data.column(v);
  DataTable data = spec.data.select_columns(vars);
  std::size_t dropped = 0;
  if (spec.dropna) {
    auto res = drop_incomplete(data, vars);
    data = std::move(res.table);
    dropped = res.dropped;
  }
  DesignBuild design = build_design(terms, data, family, spec.design);
  PriorSet priors = apply_overrides(default_priors(design.design, family, link), spec.priors,
                                    design.design.response.name);
  Model m(std::move(terms), family, link, std::move(design), std::move(priors), std::move(data), spec.formula);
  m.dropped_ = dropped;
  return m;
}

Model::Model(TermSet terms, const Family& family, LinkName link, DesignBuild design, PriorSet priors, DataTable data,
             std::string formula)
    : formula_(std::move(formula)),
      terms_(std::move(terms)),
      family_(&family),
      link_(link),
      design_(std::move(design)),
      priors_(std::move(priors)),
      data_(std::move(data)) {
  const DesignMatrices& d = design_.design;
  first_slope_ = d.has_intercept ? 1 : 0;
  if (static_cast<std::size_t>(d.X.cols() - first_slope_) != priors_.common.size() ||
      d.has_intercept != priors_.intercept.has_value())
    throw ModelError("prior set does not match the common design");
  layout_.n_beta = d.X.cols();
  layout_.n_sd = static_cast<Eigen::Index>(priors_.group_sd.size());
  layout_.n_u = d.Z.cols();
  layout_.n_aux = static_cast<Eigen::Index>(family.auxiliary.size());
  for (Eigen::Index s = 0; s < layout_.n_sd; ++s)
    for (Eigen::Index l = 0; l < priors_.group_sd[static_cast<std::size_t>(s)].n_levels; ++l) layout_.u_sd.push_back(s);
  if (static_cast<Eigen::Index>(layout_.u_sd.size()) != layout_.n_u)
    throw ModelError("prior set does not match the group-specific design");
  for (const auto& a : family.auxiliary) layout_.aux_positive.push_back(a.positive);

  names_ = d.x_names;
  for (const auto& e : priors_.group_sd) names_.push_back(e.name + "_sigma");
  names_.insert(names_.end(), d.z_names.begin(), d.z_names.end());
  for (const auto& a : family.auxiliary) names_.push_back(d.response.name + "_" + a.name);
}

Model::Split Model::split(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim()) throw ModelError("parameter vector has the wrong length");
  Split s;
  s.beta = theta.head(layout_.n_beta);
  s.sd = theta.segment(layout_.sd_offset(), layout_.n_sd).array().exp();
  s.u_tilde = theta.segment(layout_.u_offset(), layout_.n_u);
  s.u.resize(layout_.n_u);
  for (Eigen::Index j = 0; j < layout_.n_u; ++j) s.u(j) = s.sd(layout_.u_sd[static_cast<std::size_t>(j)]) * s.u_tilde(j);
  s.aux = theta.tail(layout_.n_aux);
  for (Eigen::Index k = 0; k < layout_.n_aux; ++k)
    if (layout_.aux_positive[static_cast<std::size_t>(k)]) s.aux(k) = std::exp(s.aux(k));
  return s;
}

double Model::evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, bool likelihood, bool prior) const {
  const DesignMatrices& d = design_.design;
  const Split s = split(theta);
  double lp = 0.0;
  Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(layout_.n_beta);
  Eigen::VectorXd g_u = Eigen::VectorXd::Zero(layout_.n_u);      // wrt u
  Eigen::VectorXd g_sd = Eigen::VectorXd::Zero(layout_.n_sd);     // wrt log sd
  Eigen::VectorXd g_ut = Eigen::VectorXd::Zero(layout_.n_u);     // wrt u tilde
  Eigen::VectorXd g_aux = Eigen::VectorXd::Zero(layout_.n_aux);  // wrt constrained aux

  if (likelihood && d.n_obs() > 0) {
    Eigen::VectorXd eta = d.X * s.beta;
    if (layout_.n_u > 0) eta += d.Z * s.u;
    Eigen::VectorXd g_eta(eta.size());
    const std::span<const double> aux(s.aux.data(), static_cast<std::size_t>(s.aux.size()));
    const auto& y = d.response;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double mu = detail::link_inverse_unchecked(link_, eta(i));
      const double mu_c = detail::link_inverse_complement_unchecked(link_, eta(i));
      const ObsDerivatives od = log_density_derivatives(*family_, y.values(i), y.trials_at(i), mu, mu_c, aux);
      lp += od.value;
      if (grad) {
        g_eta(i) = od.dmu * detail::link_inverse_derivative_unchecked(link_, eta(i));
        for (Eigen::Index k = 0; k < layout_.n_aux; ++k) g_aux(k) += od.daux[k];
      }
    }
    if (grad && std::isfinite(lp)) {
      g_beta.noalias() += d.X.transpose() * g_eta;
      if (layout_.n_u > 0) g_u = d.Z.transpose() * g_eta;
    }
  }

  if (prior) {
    if (priors_.intercept) {
      lp += priors_.intercept->spec.log_density(s.beta(0));
      g_beta(0) += priors_.intercept->spec.dlog_density(s.beta(0));
    }
    for (std::size_t j = 0; j < priors_.common.size(); ++j) {
      const auto k = first_slope_ + static_cast<Eigen::Index>(j);
      lp += priors_.common[j].spec.log_density(s.beta(k));
      g_beta(k) += priors_.common[j].spec.dlog_density(s.beta(k));
    }
    for (Eigen::Index k = 0; k < layout_.n_sd; ++k) {
      const PriorSpec& p = priors_.group_sd[static_cast<std::size_t>(k)].spec;
      lp += p.log_density(s.sd(k)) + theta(layout_.sd_offset() + k);
      g_sd(k) += p.dlog_density(s.sd(k)) * s.sd(k) + 1.0;
    }
    for (Eigen::Index j = 0; j < layout_.n_u; ++j) {
      lp += -kHalfLog2Pi - 0.5 * s.u_tilde(j) * s.u_tilde(j);
      g_ut(j) -= s.u_tilde(j);
    }
    for (Eigen::Index k = 0; k < layout_.n_aux; ++k) {
      const PriorSpec& p = priors_.auxiliary[static_cast<std::size_t>(k)].spec;
      lp += p.log_density(s.aux(k));
      g_aux(k) += p.dlog_density(s.aux(k));
    }
  }

  if (!std::isfinite(lp)) {
    if (grad) grad->setZero(dim());
    return kNegInf;
  }
  if (grad) {
    grad->resize(dim());
    grad->head(layout_.n_beta) = g_beta;
    for (Eigen::Index j = 0; j < layout_.n_u; ++j) {
      const auto k = layout_.u_sd[static_cast<std::size_t>(j)];
      g_ut(j) += g_u(j) * s.sd(k);
      g_sd(k) += g_u(j) * s.u(j);
    }
    grad->segment(layout_.sd_offset(), layout_.n_sd) = g_sd;
    grad->segment(layout_.u_offset(), layout_.n_u) = g_ut;
    for (Eigen::Index k = 0; k < layout_.n_aux; ++k) {
      if (layout_.aux_positive[static_cast<std::size_t>(k)]) {
        (*grad)(layout_.aux_offset() + k) = g_aux(k) * s.aux(k) + (prior ? 1.0 : 0.0);
      } else {
        (*grad)(layout_.aux_offset() + k) = g_aux(k);
      }
    }
    if (!grad->allFinite()) {
      grad->setZero();
      return kNegInf;
    }
  }
  if (prior) {
    for (Eigen::Index k = 0; k < layout_.n_aux; ++k)
      if (layout_.aux_positive[static_cast<std::size_t>(k)]) lp += theta(layout_.aux_offset() + k);
  }
  return std::isfinite(lp) ? lp : kNegInf;
}

double Model::log_posterior(const Eigen::VectorXd& theta) const { return evaluate(theta, nullptr, true, true); }

double Model::log_posterior_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  return evaluate(theta, &grad, true, true);
}

double Model::log_likelihood(const Eigen::VectorXd& theta) const { return evaluate(theta, nullptr, true, false); }

double Model::log_prior_unconstrained(const Eigen::VectorXd& theta) const {
  return evaluate(theta, nullptr, false, true);
}

PriorPoint Model::prior_point(const Eigen::VectorXd& theta) const {
  const Split s = split(theta);
  PriorPoint p;
  p.intercept = priors_.intercept ? s.beta(0) : 0.0;
  p.slopes = s.beta.tail(layout_.n_beta - first_slope_);
  p.group_sds = s.sd;
  p.group_coefficients = s.u;
  p.aux = s.aux;
  return p;
}

Eigen::VectorXd Model::to_reported(const Eigen::VectorXd& theta) const {
  const DesignMatrices& d = design_.design;
  const Split s = split(theta);
  Eigen::VectorXd out(dim());
  Eigen::VectorXd beta = s.beta;
  if (d.centered && d.has_intercept && beta.size() > 1)
    beta(0) -= beta.tail(beta.size() - 1).dot(d.column_means.tail(beta.size() - 1));
  out << beta, s.sd, s.u, s.aux;
  return out;
}

Eigen::VectorXd Model::from_reported(const Eigen::VectorXd& reported) const {
  const DesignMatrices& d = design_.design;
  if (reported.size() != dim()) throw ModelError("parameter vector has the wrong length");
  Eigen::VectorXd theta = reported;
  const Eigen::Index nb = layout_.n_beta;
  if (d.centered && d.has_intercept && nb > 1)
    theta(0) += reported.segment(1, nb - 1).dot(d.column_means.tail(nb - 1));
  for (Eigen::Index k = 0; k < layout_.n_sd; ++k) theta(layout_.sd_offset() + k) = std::log(reported(nb + k));
  for (Eigen::Index j = 0; j < layout_.n_u; ++j)
    theta(layout_.u_offset() + j) = reported(layout_.u_offset() + j) / reported(nb + layout_.u_sd[static_cast<std::size_t>(j)]);
  for (Eigen::Index k = 0; k < layout_.n_aux; ++k)
    if (layout_.aux_positive[static_cast<std::size_t>(k)])
      theta(layout_.aux_offset() + k) = std::log(reported(layout_.aux_offset() + k));
  return theta;
}

Eigen::VectorXd Model::initialize(std::mt19937_64& rng, int max_tries) const {
  Eigen::VectorXd center = Eigen::VectorXd::Zero(dim());
  if (priors_.intercept) center(0) = priors_.intercept->spec.center();
  for (std::size_t j = 0; j < priors_.common.size(); ++j)
    center(first_slope_ + static_cast<Eigen::Index>(j)) = priors_.common[j].spec.center();
  for (Eigen::Index k = 0; k < layout_.n_sd; ++k)
    center(layout_.sd_offset() + k) = std::log(priors_.group_sd[static_cast<std::size_t>(k)].spec.center());
  for (Eigen::Index k = 0; k < layout_.n_aux; ++k) {
    const double c = priors_.auxiliary[static_cast<std::size_t>(k)].spec.center();
    center(layout_.aux_offset() + k) = layout_.aux_positive[static_cast<std::size_t>(k)] ? std::log(c) : c;
  }
  double radius = 1.0;
  Eigen::VectorXd grad;
  for (int attempt = 0; attempt < max_tries; ++attempt, radius *= 0.9) {
    std::uniform_real_distribution<double> jitter(-radius, radius);
    Eigen::VectorXd theta = center;
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) += jitter(rng);
    if (std::isfinite(log_posterior_gradient(theta, grad))) return theta;
  }
  throw ModelError("could not find a starting point with finite log posterior after " + std::to_string(max_tries) +
                   " tries");
}

}  // namespace bglmm
