#pragma once

#include "bglmm/design.hpp"
#include "bglmm/model.hpp"
#include "bglmm/sampler.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bglmm {

class PredictError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// What prediction on new data needs from a fit: the terms, the family and
/// link, the training design metadata and the stored transform statistics.
struct Predictor {
  TermSet terms;
  const Family* family = nullptr;
  LinkName link = LinkName::Identity;
  DesignMatrices reference;  // matrices may be empty; metadata is what counts
  TransformState state;

  static Predictor from_model(const Model& model);
  Eigen::Index n_sd() const;
  Eigen::Index n_params() const;
};

/// Draws x observations per chain.
struct PredictionDraws {
  std::string name;  // "<response>_mean" or "<response>"
  std::vector<Eigen::MatrixXd> chains;

  Eigen::Index n_chains() const { return static_cast<Eigen::Index>(chains.size()); }
  Eigen::Index n_draws() const { return chains.empty() ? 0 : chains.front().rows(); }
  Eigen::Index n_obs() const { return chains.empty() ? 0 : chains.front().cols(); }
};

/// mu = g^-1(X beta + Z u) per posterior draw; training design when new_data is null.
PredictionDraws predict_mean(const Model& model, const PosteriorDraws& draws, const DataTable* new_data = nullptr);
PredictionDraws predict_mean(const Predictor& predictor, const PosteriorDraws& draws, const DataTable& new_data);

/// One simulated response per retained posterior draw. `ndraws` keeps that
/// many randomly chosen draws per chain, in their original order.
PredictionDraws predict_pps(const Model& model, const PosteriorDraws& draws, const DataTable* new_data = nullptr,
                            std::optional<int> ndraws = std::nullopt, std::uint64_t seed = 0);
PredictionDraws predict_pps(const Predictor& predictor, const PosteriorDraws& draws, const DataTable& new_data,
                            std::optional<int> ndraws = std::nullopt, std::uint64_t seed = 0);

/// Long format: chain, draw, row (0-based), then a value column headed by `name`.
std::string predictions_long_csv(const PredictionDraws& pred);
/// Per row: row, mean, hdi_3%, hdi_97%.
std::string predictions_summary_csv(const PredictionDraws& pred, double hdi_prob = 0.94);

}  // namespace bglmm
