#include "bglmm/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <thread>

namespace bglmm {

int default_chains() {
  const int cores = static_cast<int>(std::thread::hardware_concurrency());
  return std::min(4, std::max(2, cores));
}

Eigen::Index PosteriorDraws::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it - names.begin();
}

Eigen::MatrixXd PosteriorDraws::parameter(Eigen::Index index) const {
  Eigen::MatrixXd out(n_chains(), n_draws());
  for (Eigen::Index c = 0; c < n_chains(); ++c) out.row(c) = chains[static_cast<std::size_t>(c)].col(index).transpose();
  return out;
}

int PosteriorDraws::divergences() const {
  int n = 0;
  for (const auto& chain : stats)
    for (const auto& t : chain) n += t.divergent ? 1 : 0;
  return n;
}

PosteriorDraws sample_chains(const LogDensityFn& fn, const std::function<Eigen::VectorXd(std::mt19937_64&)>& init,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& report,
                             std::vector<std::string> names, const SamplerOptions& options) {
  if (options.draws < 1) throw SamplerError("draws must be at least 1");
  if (options.tune < 0) throw SamplerError("tune must be non-negative");
  const int n_chains = options.chains > 0 ? options.chains : default_chains();
  NutsOptions nuts = options.nuts;
  nuts.target_accept = options.target_accept;

  const auto start = std::chrono::steady_clock::now();
  std::vector<ChainResult> results(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));
  const auto run = [&](int c) {
    try {
      std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                        static_cast<std::uint32_t>(c)};
      std::mt19937_64 rng(seq);
      const Eigen::VectorXd q0 = init(rng);
      results[static_cast<std::size_t>(c)] = run_chain(fn, q0, options.tune, options.draws, nuts, rng);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (int c = 1; c < n_chains; ++c) threads.emplace_back(run, c);
  run(0);
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  PosteriorDraws out;
  out.names = std::move(names);
  for (auto& r : results) {
    Eigen::MatrixXd reported(r.draws.rows(), static_cast<Eigen::Index>(out.names.size()));
    for (Eigen::Index i = 0; i < r.draws.rows(); ++i) reported.row(i) = report(r.draws.row(i).transpose()).transpose();
    out.chains.push_back(std::move(reported));
    out.stats.push_back(std::move(r.stats));
    out.metadata.step_size.push_back(r.step_size);
  }
  out.metadata.seed = options.seed;
  out.metadata.tune = options.tune;
  out.metadata.target_accept = options.target_accept;
  out.metadata.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

PosteriorDraws fit(const Model& model, const SamplerOptions& options) {
  const LogDensityFn fn = [&model](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    return model.log_posterior_gradient(q, g);
  };
  const auto init = [&model](std::mt19937_64& rng) { return model.initialize(rng); };
  const auto report = [&model](const Eigen::VectorXd& q) { return model.to_reported(q); };
  return sample_chains(fn, init, report, model.parameter_names(), options);
}

}  // namespace bglmm
