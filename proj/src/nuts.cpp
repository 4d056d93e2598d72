#include "bglmm/nuts.hpp"

#include "bglmm/special.hpp"

#include <cmath>
#include <limits>

namespace bglmm {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double DualAveraging::learn(double accept_stat) {
  counter_ += 1.0;
  accept_stat = std::min(1.0, accept_stat);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

// ---------------------------------------------------------------------------

WindowedVariance::WindowedVariance(int n_warmup, int init_buffer, int base_window, int term_buffer, Eigen::Index dim)
    : n_warmup_(n_warmup),
      init_buffer_(init_buffer),
      base_window_(base_window),
      term_buffer_(term_buffer),
      mean_(Eigen::VectorXd::Zero(dim)),
      m2_(Eigen::VectorXd::Zero(dim)) {
  if (n_warmup_ < 20) {
    enabled_ = false;
  } else if (init_buffer_ + base_window_ + term_buffer_ > n_warmup_) {
    // Short warmup: 15% / 75% / 10%.
    init_buffer_ = static_cast<int>(0.15 * n_warmup_);
    term_buffer_ = static_cast<int>(0.1 * n_warmup_);
    base_window_ = n_warmup_ - (init_buffer_ + term_buffer_);
  }
  window_size_ = base_window_;
  next_end_ = init_buffer_ + window_size_ - 1;
}

bool WindowedVariance::in_window() const {
  return counter_ >= init_buffer_ && counter_ < n_warmup_ - term_buffer_ && counter_ != n_warmup_;
}

bool WindowedVariance::window_end() const { return counter_ == next_end_ && counter_ != n_warmup_; }

void WindowedVariance::next_window() {
  if (next_end_ == n_warmup_ - term_buffer_ - 1) return;
  window_size_ *= 2;
  next_end_ = counter_ + window_size_;
  if (next_end_ != n_warmup_ - term_buffer_ - 1) {
    const int boundary = next_end_ + 2 * window_size_;
    if (boundary >= n_warmup_ - term_buffer_) next_end_ = n_warmup_ - term_buffer_ - 1;
  }
}

bool WindowedVariance::learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric) {
  if (!enabled_) {
    ++counter_;
    return false;
  }
  if (in_window()) {
    ++n_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  if (window_end()) {
    next_window();
    const double n = static_cast<double>(n_);
    const Eigen::VectorXd var = m2_ / (n - 1.0);
    inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
    ++counter_;
    return true;
  }
  ++counter_;
  return false;
}

std::vector<int> WindowedVariance::window_ends() const {
  WindowedVariance copy = *this;
  std::vector<int> ends;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(mean_.size());
  Eigen::VectorXd m = Eigen::VectorXd::Ones(mean_.size());
  for (int i = copy.counter_; i < n_warmup_; ++i) {
    q.setConstant(static_cast<double>(i % 2));
    if (copy.learn(q, m)) ends.push_back(i);
  }
  return ends;
}

// ---------------------------------------------------------------------------

Nuts::Nuts(LogDensityFn fn, Eigen::VectorXd q0, NutsOptions options, std::mt19937_64& rng)
    : fn_(std::move(fn)), opt_(options), rng_(rng), inv_metric_(Eigen::VectorXd::Ones(q0.size())) {
  z_.q = std::move(q0);
  z_.p = Eigen::VectorXd::Zero(z_.q.size());
  evaluate(z_);
  if (!std::isfinite(z_.logp)) throw SamplerError("initial point has non-finite log density");
}

void Nuts::evaluate(Point& z) const {
  z.logp = fn_(z.q, z.g);
  if (std::isnan(z.logp)) z.logp = -kInf;
}

double Nuts::hamiltonian(const Point& z) const {
  const double h = -z.logp + 0.5 * z.p.dot(inv_metric_.cwiseProduct(z.p));
  return std::isnan(h) ? kInf : h;
}

void Nuts::sample_momentum(Point& z) {
  for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p(i) = normal_(rng_) / std::sqrt(inv_metric_(i));
}

void Nuts::leapfrog(Point& z, double eps) const {
  z.p += 0.5 * eps * z.g;
  z.q += eps * inv_metric_.cwiseProduct(z.p);
  evaluate(z);
  z.p += 0.5 * eps * z.g;
}

void Nuts::init_step_size() {
  const Point z_init = z_;
  sample_momentum(z_);
  double h0 = hamiltonian(z_);
  leapfrog(z_, eps_);
  double delta_h = h0 - hamiltonian(z_);
  const double log_target = std::log(0.8);
  const int direction = delta_h > log_target ? 1 : -1;
  while (true) {
    z_ = z_init;
    sample_momentum(z_);
    h0 = hamiltonian(z_);
    leapfrog(z_, eps_);
    delta_h = h0 - hamiltonian(z_);
    if (direction == 1 && !(delta_h > log_target)) break;
    if (direction == -1 && !(delta_h < log_target)) break;
    eps_ = direction == 1 ? 2 * eps_ : 0.5 * eps_;
    if (eps_ > 1e7) throw SamplerError("step size diverged during initialization; the posterior may be improper");
    if (eps_ == 0) throw SamplerError("step size collapsed to zero during initialization");
  }
  z_ = z_init;
}

bool Nuts::build_tree(int depth, Point& z, Point& z_propose, Eigen::VectorXd& p_sharp_beg,
                      Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                      Eigen::VectorXd& p_end, double h0, double sign, int& n_leapfrog, double& log_sum_weight,
                      double& sum_metro_prob) {
  if (depth == 0) {
    leapfrog(z, sign * eps_);
    ++n_leapfrog;
    const double h = hamiltonian(z);
    if (h - h0 > opt_.max_delta_h) divergent_ = true;
    log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
    sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
    z_propose = z;
    p_sharp_beg = p_sharp(z);
    p_sharp_end = p_sharp_beg;
    rho += z.p;
    p_beg = z.p;
    p_end = p_beg;
    return !divergent_;
  }

  const Eigen::Index n = z.q.size();
  double log_sum_weight_init = -kInf;
  Eigen::VectorXd p_init_end(n), p_sharp_init_end(n), rho_init = Eigen::VectorXd::Zero(n);
  if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                  n_leapfrog, log_sum_weight_init, sum_metro_prob))
    return false;

  Point z_propose_final = z;
  double log_sum_weight_final = -kInf;
  Eigen::VectorXd p_final_beg(n), p_sharp_final_beg(n), rho_final = Eigen::VectorXd::Zero(n);
  if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                  sign, n_leapfrog, log_sum_weight_final, sum_metro_prob))
    return false;

  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
  if (log_sum_weight_final > log_sum_weight_subtree) {
    z_propose = z_propose_final;
  } else if (unif_(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
    z_propose = z_propose_final;
  }

  const Eigen::VectorXd rho_subtree = rho_init + rho_final;
  rho += rho_subtree;
  bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
  persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
  persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
  return persist;
}

Transition Nuts::transition() {
  sample_momentum(z_);
  divergent_ = false;
  const Eigen::Index n = z_.q.size();

  Point z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;
  Eigen::VectorXd p_sharp_fwd_bck = p_sharp(z_), p_sharp_fwd_fwd = p_sharp_fwd_bck;
  Eigen::VectorXd p_sharp_bck_fwd = p_sharp_fwd_bck, p_sharp_bck_bck = p_sharp_fwd_bck;
  Eigen::VectorXd p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
  Eigen::VectorXd rho = z_.p;
  double log_sum_weight = 0.0;
  const double h0 = hamiltonian(z_);
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  int depth = 0;

  while (depth < opt_.max_depth) {
    Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n), rho_bck = Eigen::VectorXd::Zero(n);
    bool valid_subtree;
    double log_sum_weight_subtree = -kInf;
    if (unif_(rng_) > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid_subtree = build_tree(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                                 p_fwd_fwd, h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid_subtree = build_tree(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                                 p_bck_bck, h0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
    }
    if (!valid_subtree) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (unif_(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  z_ = z_sample;
  Transition t;
  t.tree_depth = depth;
  t.n_leapfrog = n_leapfrog;
  t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
  t.divergent = divergent_;
  t.energy = hamiltonian(z_);
  t.step_size = eps_;
  t.log_density = z_.logp;
  return t;
}

// ---------------------------------------------------------------------------

ChainResult run_chain(const LogDensityFn& fn, const Eigen::VectorXd& q0, int tune, int draws, const NutsOptions& options,
                      std::mt19937_64& rng) {
  if (tune < 0 || draws < 1) throw SamplerError("tune must be >= 0 and draws >= 1");
  if (!(options.target_accept > 0 && options.target_accept < 1)) throw SamplerError("target_accept must be in (0, 1)");
  Nuts nuts(fn, q0, options, rng);
  nuts.init_step_size();
  DualAveraging da(options.target_accept, options.gamma, options.t0, options.kappa);
  da.set_mu(std::log(10 * nuts.step_size()));
  WindowedVariance wv(tune, options.init_buffer, options.base_window, options.term_buffer, q0.size());
  Eigen::VectorXd inv_metric = nuts.inv_metric();

  for (int i = 0; i < tune; ++i) {
    const Transition t = nuts.transition();
    nuts.set_step_size(da.learn(t.accept_stat));
    if (options.adapt_metric && wv.learn(nuts.position(), inv_metric)) {
      nuts.set_inv_metric(inv_metric);
      nuts.init_step_size();
      da.set_mu(std::log(10 * nuts.step_size()));
      da.restart();
    }
  }
  if (tune > 0) nuts.set_step_size(da.final_step_size());

  ChainResult out;
  out.draws.resize(draws, q0.size());
  out.stats.reserve(static_cast<std::size_t>(draws));
  for (int i = 0; i < draws; ++i) {
    out.stats.push_back(nuts.transition());
    out.draws.row(i) = nuts.position().transpose();
  }
  out.step_size = nuts.step_size();
  out.inv_metric = nuts.inv_metric();
  return out;
}

}  // namespace bglmm
