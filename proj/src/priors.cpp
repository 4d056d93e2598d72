#include "bglmm/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace bglmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2 = std::log(2.0);
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Mean responses are kept this far inside (0, 1) or above 0 before the link.
constexpr double kLinkMargin = 1e-6;

const std::vector<std::string>& param_names(Distribution d) {
  static const std::map<Distribution, std::vector<std::string>> names{
      {Distribution::Normal, {"mu", "sigma"}},   {Distribution::HalfNormal, {"sigma"}},
      {Distribution::HalfStudentT, {"nu", "sigma"}}, {Distribution::HalfCauchy, {"beta"}},
      {Distribution::Gamma, {"alpha", "beta"}},  {Distribution::Uniform, {"lower", "upper"}},
  };
  return names.at(d);
}

double clamp_mean_for_link(double m, LinkName link) {
  switch (link) {
    case LinkName::Identity: return m;
    case LinkName::Logit:
    case LinkName::Probit:
    case LinkName::Cloglog: return std::clamp(m, kLinkMargin, 1.0 - kLinkMargin);
    case LinkName::Log:
    case LinkName::Inverse:
    case LinkName::InverseSquared: return std::max(m, kLinkMargin);
  }
  return m;
}

}  // namespace

PriorSpec::PriorSpec(Distribution dist, std::map<std::string, double> params) : dist_(dist), params_(std::move(params)) {
  const auto& names = param_names(dist_);
  for (const auto& [k, v] : params_) {
    if (std::find(names.begin(), names.end(), k) == names.end())
      throw PriorError("unknown parameter '" + k + "' for " + distribution_name());
    if (!std::isfinite(v)) throw PriorError(distribution_name() + " parameter '" + k + "' must be finite");
  }
  for (const auto& n : names)
    if (!params_.count(n)) throw PriorError(distribution_name() + " needs parameter '" + n + "'");
  for (const char* positive : {"sigma", "nu", "beta", "alpha"})
    if (params_.count(positive) && !(params_.at(positive) > 0))
      throw PriorError(distribution_name() + " parameter '" + positive + "' must be > 0");
  if (dist_ == Distribution::Uniform && !(params_.at("lower") < params_.at("upper")))
    throw PriorError("Uniform needs lower < upper");
}

std::string distribution_name(Distribution dist) {
  switch (dist) {
    case Distribution::Normal: return "Normal";
    case Distribution::HalfNormal: return "HalfNormal";
    case Distribution::HalfStudentT: return "HalfStudentT";
    case Distribution::HalfCauchy: return "HalfCauchy";
    case Distribution::Gamma: return "Gamma";
    case Distribution::Uniform: return "Uniform";
  }
  return "?";
}

Distribution parse_distribution(const std::string& name) {
  for (auto d : {Distribution::Normal, Distribution::HalfNormal, Distribution::HalfStudentT, Distribution::HalfCauchy,
                 Distribution::Gamma, Distribution::Uniform})
    if (distribution_name(d) == name) return d;
  throw PriorError("unknown distribution '" + name + "'");
}

std::string PriorSpec::distribution_name() const { return bglmm::distribution_name(dist_); }

double PriorSpec::param(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw PriorError(distribution_name() + " has no parameter '" + name + "'");
  return it->second;
}

std::vector<std::pair<std::string, double>> PriorSpec::params() const {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& n : param_names(dist_)) out.emplace_back(n, params_.at(n));
  return out;
}

bool PriorSpec::nonnegative_support() const {
  return dist_ != Distribution::Normal && (dist_ != Distribution::Uniform || params_.at("lower") >= 0);
}

double PriorSpec::log_density(double x) const {
  if (std::isnan(x)) return kNegInf;
  switch (dist_) {
    case Distribution::Normal: {
      const double s = params_.at("sigma");
      const double z = (x - params_.at("mu")) / s;
      return -kHalfLog2Pi - std::log(s) - 0.5 * z * z;
    }
    case Distribution::HalfNormal: {
      if (x < 0) return kNegInf;
      const double s = params_.at("sigma");
      const double z = x / s;
      return kLog2 - kHalfLog2Pi - std::log(s) - 0.5 * z * z;
    }
    case Distribution::HalfStudentT: {
      if (x < 0) return kNegInf;
      const double nu = params_.at("nu");
      const double s = params_.at("sigma");
      const double z = x / s;
      return kLog2 + std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * std::numbers::pi) -
             std::log(s) - (nu + 1) / 2 * std::log1p(z * z / nu);
    }
    case Distribution::HalfCauchy: {
      if (x < 0) return kNegInf;
      const double b = params_.at("beta");
      const double z = x / b;
      return kLog2 - std::log(std::numbers::pi) - std::log(b) - std::log1p(z * z);
    }
    case Distribution::Gamma: {
      if (x <= 0) return kNegInf;
      const double a = params_.at("alpha");
      const double b = params_.at("beta");
      return a * std::log(b) - std::lgamma(a) + (a - 1) * std::log(x) - b * x;
    }
    case Distribution::Uniform: {
      const double lo = params_.at("lower");
      const double hi = params_.at("upper");
      if (x < lo || x > hi) return kNegInf;
      return -std::log(hi - lo);
    }
  }
  return kNegInf;
}

double PriorSpec::dlog_density(double x) const {
  switch (dist_) {
    case Distribution::Normal: {
      const double s = params_.at("sigma");
      return -(x - params_.at("mu")) / (s * s);
    }
    case Distribution::HalfNormal: {
      const double s = params_.at("sigma");
      return -x / (s * s);
    }
    case Distribution::HalfStudentT: {
      const double nu = params_.at("nu");
      const double s2 = params_.at("sigma") * params_.at("sigma");
      return -(nu + 1) * x / (nu * s2 + x * x);
    }
    case Distribution::HalfCauchy: {
      const double b = params_.at("beta");
      return -2 * x / (b * b + x * x);
    }
    case Distribution::Gamma: return (params_.at("alpha") - 1) / x - params_.at("beta");
    case Distribution::Uniform: return 0.0;
  }
  return 0.0;
}

double PriorSpec::sample(std::mt19937_64& rng) const {
  switch (dist_) {
    case Distribution::Normal:
      return std::normal_distribution<double>(params_.at("mu"), params_.at("sigma"))(rng);
    case Distribution::HalfNormal:
      return std::abs(std::normal_distribution<double>(0.0, params_.at("sigma"))(rng));
    case Distribution::HalfStudentT:
      return std::abs(params_.at("sigma") * std::student_t_distribution<double>(params_.at("nu"))(rng));
    case Distribution::HalfCauchy:
      return std::abs(std::cauchy_distribution<double>(0.0, params_.at("beta"))(rng));
    case Distribution::Gamma:
      return std::gamma_distribution<double>(params_.at("alpha"), 1.0 / params_.at("beta"))(rng);
    case Distribution::Uniform:
      return std::uniform_real_distribution<double>(params_.at("lower"), params_.at("upper"))(rng);
  }
  return 0.0;
}

double PriorSpec::center() const {
  switch (dist_) {
    case Distribution::Normal: return params_.at("mu");
    case Distribution::HalfNormal:
    case Distribution::HalfStudentT: return params_.at("sigma");
    case Distribution::HalfCauchy: return params_.at("beta");
    case Distribution::Gamma: return params_.at("alpha") / params_.at("beta");
    case Distribution::Uniform: return 0.5 * (params_.at("lower") + params_.at("upper"));
  }
  return 0.0;
}

double PriorSpec::scale() const {
  switch (dist_) {
    case Distribution::Normal:
    case Distribution::HalfNormal:
    case Distribution::HalfStudentT: return params_.at("sigma");
    case Distribution::HalfCauchy: return params_.at("beta");
    case Distribution::Gamma: return std::sqrt(params_.at("alpha")) / params_.at("beta");
    case Distribution::Uniform: return (params_.at("upper") - params_.at("lower")) / std::sqrt(12.0);
  }
  return 1.0;
}

std::string PriorSpec::to_string(int decimals) const {
  std::string out = distribution_name() + "(";
  bool first = true;
  for (const auto& [k, v] : params()) {
    if (!first) out += ", ";
    first = false;
    out += k + ": " + format_fixed(v, decimals);
  }
  return out + ")";
}

Eigen::Index PriorSet::n_group_coefficients() const {
  Eigen::Index n = 0;
  for (const auto& e : group_sd) n += e.n_levels;
  return n;
}

// ---------------------------------------------------------------------------

ResponseScale response_scale(const ResponseInfo& response, const Family& family) {
  Eigen::VectorXd y = response.values;
  if (response.trials) y = y.cwiseQuotient(*response.trials);
  ResponseScale out;
  out.mean = y.mean();
  if (family.uses_response_scale()) {
    out.sd = column_stats(y).sd;
    if (!(out.sd > 0)) throw PriorError("response '" + response.name + "' has zero variance");
  }
  return out;
}

PriorSpec default_slope_prior(const ResponseScale& y, const ColumnStats& x, const std::string& name) {
  if (!(x.sd > 0))
    throw PriorError("predictor '" + name + "' has zero variance; remove it from the model");
  return PriorSpec::normal(0.0, 2.5 * y.sd / x.sd);
}

PriorSpec default_intercept_prior(const ResponseScale& y, LinkName link, const Eigen::VectorXd& column_means,
                                  const std::vector<PriorSpec>& slopes) {
  double mean = clamp_mean_for_link(y.mean, link);
  if (link != LinkName::Identity) mean = link_apply(link, mean);
  double var = y.sd * y.sd;
  for (std::size_t j = 0; j < slopes.size(); ++j) {
    const double xbar = column_means(static_cast<Eigen::Index>(j));
    const double s = slopes[j].scale();
    mean -= slopes[j].center() * xbar;
    var += xbar * xbar * s * s;
  }
  return PriorSpec::normal(mean, std::sqrt(var));
}

std::vector<PriorEntry> default_auxiliary_priors(const Family& family, const ResponseScale& y) {
  std::vector<PriorEntry> out;
  for (const auto& a : family.auxiliary) {
    PriorEntry e;
    e.name = e.term = a.name;
    if (a.name == "sigma") e.spec = PriorSpec::half_student_t(4.0, y.sd);
    else if (a.name == "nu") e.spec = PriorSpec::gamma(2.0, 0.1);
    else e.spec = PriorSpec::half_cauchy(1.0);
    out.push_back(std::move(e));
  }
  return out;
}

PriorSet default_priors(const DesignMatrices& design, const Family& family, LinkName link) {
  PriorSet set;
  const ResponseScale y = response_scale(design.response, family);
  const Eigen::MatrixXd raw = design.uncentered_X();
  const Eigen::Index first = design.has_intercept ? 1 : 0;

  std::vector<PriorSpec> slopes;
  for (Eigen::Index j = first; j < raw.cols(); ++j) {
    const auto name = design.x_names[static_cast<std::size_t>(j)];
    PriorEntry e{name, design.x_terms[static_cast<std::size_t>(j)],
                 default_slope_prior(y, column_stats(raw.col(j)), name), Provenance::Default, 0};
    slopes.push_back(e.spec);
    set.common.push_back(std::move(e));
  }
  const Eigen::VectorXd slope_means = design.column_means.tail(raw.cols() - first);
  const PriorSpec intercept = default_intercept_prior(y, link, slope_means, slopes);
  if (design.has_intercept) set.intercept = PriorEntry{"Intercept", "Intercept", intercept, Provenance::Default, 0};

  for (const auto& g : design.groups) {
    for (std::size_t c = 0; c < g.expr_names.size(); ++c) {
      const std::string& en = g.expr_names[c];
      double sd;
      if (en == "1") {
        sd = intercept.scale();
      } else {
        const auto it = std::find(design.x_names.begin(), design.x_names.end(), en);
        if (it != design.x_names.end() && it - design.x_names.begin() >= first) {
          sd = slopes[static_cast<std::size_t>(it - design.x_names.begin() - first)].scale();
        } else {
          // Not a common column: the prior it would get in an augmented model.
          sd = default_slope_prior(y, column_stats(g.expr.col(static_cast<Eigen::Index>(c))), en).scale();
        }
      }
      const std::string term = g.expr_terms[c] + "|" + g.factor;
      set.group_sd.push_back({g.sd_name(c), term, PriorSpec::half_normal(sd), Provenance::Default, g.n_levels()});
    }
  }
  set.auxiliary = default_auxiliary_priors(family, y);
  return set;
}

// ---------------------------------------------------------------------------

PriorSet apply_overrides(const PriorSet& defaults, const PriorOverrides& overrides, const std::string& response) {
  PriorSet out = defaults;
  const auto check_coefficient = [](const PriorSpec& p, const std::string& key) {
    if (p.distribution() != Distribution::Normal)
      throw PriorError("prior for '" + key + "' must be Normal (coefficients are unbounded)");
  };
  const auto check_positive = [](const PriorSpec& p, const std::string& key) {
    if (!p.nonnegative_support())
      throw PriorError("prior for '" + key + "' must have support on [0, inf)");
  };
  const auto set = [](PriorEntry& e, const PriorSpec& p) {
    e.spec = p;
    e.provenance = Provenance::Override;
  };

  if (overrides.common) {
    check_coefficient(*overrides.common, "common");
    for (auto& e : out.common) set(e, *overrides.common);
  }
  if (overrides.group_specific) {
    check_positive(*overrides.group_specific, "group_specific");
    for (auto& e : out.group_sd) set(e, *overrides.group_specific);
  }
  for (const auto& [key, spec] : overrides.terms) {
    bool matched = false;
    if (out.intercept && key == "Intercept") {
      check_coefficient(spec, key);
      set(*out.intercept, spec);
      matched = true;
    }
    for (auto& e : out.common) {
      if (e.term == key || e.name == key) {
        check_coefficient(spec, key);
        set(e, spec);
        matched = true;
      }
    }
    for (auto& e : out.group_sd) {
      if (e.term == key || e.name == key || e.name + "_sigma" == key) {
        check_positive(spec, key);
        set(e, spec);
        matched = true;
      }
    }
    for (auto& e : out.auxiliary) {
      if (e.name == key || (!response.empty() && response + "_" + e.name == key)) {
        check_positive(spec, key);
        set(e, spec);
        matched = true;
      }
    }
    if (!matched) throw PriorError("prior override names unknown term '" + key + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------

double log_prior(const PriorSet& priors, const PriorPoint& point, PriorPoint* grad) {
  double lp = 0.0;
  if (grad) {
    grad->intercept = 0.0;
    grad->slopes = Eigen::VectorXd::Zero(point.slopes.size());
    grad->group_sds = Eigen::VectorXd::Zero(point.group_sds.size());
    grad->group_coefficients = Eigen::VectorXd::Zero(point.group_coefficients.size());
    grad->aux = Eigen::VectorXd::Zero(point.aux.size());
  }
  if (priors.intercept) {
    lp += priors.intercept->spec.log_density(point.intercept);
    if (grad) grad->intercept = priors.intercept->spec.dlog_density(point.intercept);
  }
  for (std::size_t j = 0; j < priors.common.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    lp += priors.common[j].spec.log_density(point.slopes(k));
    if (grad) grad->slopes(k) = priors.common[j].spec.dlog_density(point.slopes(k));
  }
  Eigen::Index u = 0;
  for (std::size_t s = 0; s < priors.group_sd.size(); ++s) {
    const auto k = static_cast<Eigen::Index>(s);
    const double sd = point.group_sds(k);
    lp += priors.group_sd[s].spec.log_density(sd);
    if (grad) grad->group_sds(k) = priors.group_sd[s].spec.dlog_density(sd);
    for (Eigen::Index l = 0; l < priors.group_sd[s].n_levels; ++l, ++u) {
      const double v = point.group_coefficients(u);
      const double z = v / sd;
      lp += -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
      if (grad) {
        grad->group_coefficients(u) = -v / (sd * sd);
        grad->group_sds(k) += -1.0 / sd + v * v / (sd * sd * sd);
      }
    }
  }
  for (std::size_t a = 0; a < priors.auxiliary.size(); ++a) {
    const auto k = static_cast<Eigen::Index>(a);
    lp += priors.auxiliary[a].spec.log_density(point.aux(k));
    if (grad) grad->aux(k) = priors.auxiliary[a].spec.dlog_density(point.aux(k));
  }
  return lp;
}

DrawTable sample_priors(const PriorSet& priors, const DesignMatrices& design, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw PriorError("number of prior draws must be at least 1");
  DrawTable out;
  if (priors.intercept) out.names.push_back("Intercept");
  for (const auto& e : priors.common) out.names.push_back(e.name);
  for (const auto& e : priors.group_sd) out.names.push_back(e.name + "_sigma");
  for (const auto& g : design.groups)
    for (std::size_t c = 0; c < g.expr_names.size(); ++c)
      for (const auto& lv : g.levels) out.names.push_back(g.sd_name(c) + "[" + lv + "]");
  for (const auto& e : priors.auxiliary) out.names.push_back(design.response.name + "_" + e.name);

  out.values.resize(n, static_cast<Eigen::Index>(out.names.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal;
  const Eigen::Index n_sd = static_cast<Eigen::Index>(priors.group_sd.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index c = 0;
    if (priors.intercept) out.values(i, c++) = priors.intercept->spec.sample(rng);
    for (const auto& e : priors.common) out.values(i, c++) = e.spec.sample(rng);
    const Eigen::Index sd_col = c;
    for (const auto& e : priors.group_sd) out.values(i, c++) = e.spec.sample(rng);
    for (Eigen::Index s = 0; s < n_sd; ++s)
      for (Eigen::Index l = 0; l < priors.group_sd[static_cast<std::size_t>(s)].n_levels; ++l)
        out.values(i, c++) = out.values(i, sd_col + s) * std_normal(rng);
    for (const auto& e : priors.auxiliary) out.values(i, c++) = e.spec.sample(rng);
  }
  return out;
}

std::string format_priors(const PriorSet& priors, int indent) {
  std::ostringstream os;
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  const std::string pad2(static_cast<std::size_t>(2 * indent), ' ');
  if (priors.intercept || !priors.common.empty()) {
    os << pad << "Common-level effects\n";
    if (priors.intercept) os << pad2 << "Intercept ~ " << priors.intercept->spec.to_string() << '\n';
    for (const auto& e : priors.common) os << pad2 << e.name << " ~ " << e.spec.to_string() << '\n';
  }
  if (!priors.group_sd.empty()) {
    os << pad << "Group-level effects\n";
    for (const auto& e : priors.group_sd)
      os << pad2 << e.name << " ~ Normal(mu: " << format_fixed(0.0, 4) << ", sigma: " << e.spec.to_string() << ")\n";
  }
  if (!priors.auxiliary.empty()) {
    os << pad << "Auxiliary parameters\n";
    for (const auto& e : priors.auxiliary) os << pad2 << e.name << " ~ " << e.spec.to_string() << '\n';
  }
  return os.str();
}

}  // namespace bglmm
