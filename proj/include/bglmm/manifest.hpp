#pragma once

#include "bglmm/predict.hpp"
#include "bglmm/priors.hpp"
#include "bglmm/sampler.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bglmm {

class ManifestError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kManifestSchemaVersion = 1;

/// Prior-override document:
///   {"common": P, "group_specific": G, "terms": {"name": P or G, ...}}
/// with P = {"dist": "Normal", "mu": 0, "sigma": 1} and, for group entries,
/// either a prior on the SD or {"dist": "Normal", "mu": 0, "sigma": P}.
PriorOverrides parse_prior_overrides(std::string_view json_text);
PriorOverrides read_prior_overrides(const std::filesystem::path& path);

/// Everything a saved fit needs for prediction and post-hoc work.
struct FitManifest {
  std::string formula;
  std::string family;
  std::string link;
  bool dropna = false;
  std::size_t dropped_rows = 0;
  Eigen::Index n_obs = 0;
  std::vector<std::string> parameter_names;
  PriorSet priors;
  Predictor predictor;  // reference design metadata and transform state
  SamplerMetadata sampler;
  int chains = 0;
  int draws = 0;
};

std::string manifest_json(const Model& model, const PosteriorDraws& draws, bool dropna);
FitManifest parse_manifest(std::string_view json_text);
FitManifest read_manifest(const std::filesystem::path& path);

/// chain, draw, then one column per parameter.
std::string draws_csv(const PosteriorDraws& draws);
/// Inverse of draws_csv; `names` must match the file's parameter columns.
PosteriorDraws read_draws_csv(const std::filesystem::path& path, const std::vector<std::string>& names);

}  // namespace bglmm
