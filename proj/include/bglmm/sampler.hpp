#pragma once

#include "bglmm/model.hpp"
#include "bglmm/nuts.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bglmm {

struct SamplerOptions {
  int draws = 1000;
  int tune = 1000;
  int chains = 0;  // 0: default_chains()
  double target_accept = 0.8;
  std::uint64_t seed = 0;
  NutsOptions nuts;
};

/// min(4, max(2, hardware threads)).
int default_chains();

struct SamplerMetadata {
  std::uint64_t seed = 0;
  int tune = 0;
  double target_accept = 0.8;
  double wall_seconds = 0.0;
  std::vector<double> step_size;  // per chain, after warmup
};

/// Draws on the reported scale, one matrix (draws x parameters) per chain.
struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;
  std::vector<std::vector<Transition>> stats;
  SamplerMetadata metadata;

  Eigen::Index n_chains() const { return static_cast<Eigen::Index>(chains.size()); }
  Eigen::Index n_draws() const { return chains.empty() ? 0 : chains.front().rows(); }
  Eigen::Index n_params() const { return static_cast<Eigen::Index>(names.size()); }
  Eigen::Index index_of(const std::string& name) const;
  /// chains x draws for one parameter.
  Eigen::MatrixXd parameter(Eigen::Index index) const;
  Eigen::MatrixXd parameter(const std::string& name) const { return parameter(index_of(name)); }
  /// All draws of one chain/draw pair as a reported vector.
  Eigen::VectorXd draw(Eigen::Index chain, Eigen::Index d) const { return chains[static_cast<std::size_t>(chain)].row(d); }
  int divergences() const;
};

/// Runs independent chains of NUTS on `fn`. `init` gives each chain its start,
/// `report` maps sampler-scale vectors to reported ones.
PosteriorDraws sample_chains(const LogDensityFn& fn, const std::function<Eigen::VectorXd(std::mt19937_64&)>& init,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& report,
                             std::vector<std::string> names, const SamplerOptions& options);

/// Posterior sample of a built model; chain c is seeded from (seed, c).
PosteriorDraws fit(const Model& model, const SamplerOptions& options = {});

}  // namespace bglmm
