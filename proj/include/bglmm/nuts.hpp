#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace bglmm {

class SamplerError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Log density and its gradient at q. Returns -inf (any gradient) outside the support.
using LogDensityFn = std::function<double(const Eigen::VectorXd& q, Eigen::VectorXd& grad)>;

struct NutsOptions {
  int max_depth = 10;
  double max_delta_h = 1000.0;
  double target_accept = 0.8;
  // Dual averaging.
  double gamma = 0.05;
  double t0 = 10.0;
  double kappa = 0.75;
  // Warmup windows: step size only, doubling metric windows, step size only.
  int init_buffer = 75;
  int base_window = 25;
  int term_buffer = 50;
  bool adapt_metric = true;
};

/// Per-iteration statistics.
struct Transition {
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
  double step_size = 0.0;
  double log_density = 0.0;
};

/// Nesterov dual averaging of log step size.
class DualAveraging {
public:
  DualAveraging(double delta, double gamma, double t0, double kappa)
      : delta_(delta), gamma_(gamma), t0_(t0), kappa_(kappa) {}
  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  /// Returns the next step size given the latest acceptance statistic.
  double learn(double accept_stat);
  /// Final step size after warmup.
  double final_step_size() const { return std::exp(x_bar_); }

private:
  double delta_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

/// Expanding-window schedule and regularized variance estimate for a diagonal metric.
class WindowedVariance {
public:
  WindowedVariance(int n_warmup, int init_buffer, int base_window, int term_buffer, Eigen::Index dim);
  /// Records q; returns true and writes the new inverse metric when a window closes.
  bool learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric);
  /// Iterations at which a window ends, for testing.
  std::vector<int> window_ends() const;

private:
  bool in_window() const;
  bool window_end() const;
  void next_window();

  int n_warmup_, init_buffer_, base_window_, term_buffer_;
  int counter_ = 0;
  int window_size_ = 0;
  int next_end_ = 0;
  bool enabled_ = true;
  // Welford accumulators.
  Eigen::Index n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

/// Multinomial no-U-turn sampler with a diagonal Euclidean metric.
class Nuts {
public:
  Nuts(LogDensityFn fn, Eigen::VectorXd q0, NutsOptions options, std::mt19937_64& rng);

  /// One transition from the current position.
  Transition transition();
  /// Doubles or halves the step size until the one-step acceptance crosses 0.8.
  void init_step_size();

  double step_size() const { return eps_; }
  void set_step_size(double eps) { eps_ = eps; }
  const Eigen::VectorXd& inv_metric() const { return inv_metric_; }
  void set_inv_metric(const Eigen::VectorXd& m) { inv_metric_ = m; }
  const Eigen::VectorXd& position() const { return z_.q; }

private:
  struct Point {
    Eigen::VectorXd q, p, g;  // g: gradient of the log density
    double logp = 0.0;
  };

  double hamiltonian(const Point& z) const;
  void sample_momentum(Point& z);
  void evaluate(Point& z) const;
  void leapfrog(Point& z, double eps) const;
  Eigen::VectorXd p_sharp(const Point& z) const { return inv_metric_.cwiseProduct(z.p); }
  static bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
  }
  bool build_tree(int depth, Point& z, Point& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                  Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob);

  LogDensityFn fn_;
  NutsOptions opt_;
  std::mt19937_64& rng_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  Point z_;
  Eigen::VectorXd inv_metric_;
  double eps_ = 1.0;
  bool divergent_ = false;
};

struct ChainResult {
  Eigen::MatrixXd draws;  // retained iterations x dim, sampler scale
  std::vector<Transition> stats;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
};

/// Warmup with step-size and metric adaptation, then `draws` retained transitions.
ChainResult run_chain(const LogDensityFn& fn, const Eigen::VectorXd& q0, int tune, int draws, const NutsOptions& options,
                      std::mt19937_64& rng);

}  // namespace bglmm
