#include "bglmm/predict.hpp"

#include "bglmm/diagnostics.hpp"
#include "bglmm/tabular.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace bglmm {

namespace {

struct Inputs {
  Eigen::MatrixXd X;  // uncentered
  Eigen::SparseMatrix<double> Z;
  std::optional<Eigen::VectorXd> trials;
};

Inputs inputs_for(const Predictor& p, const DataTable& new_data, bool need_trials) {
  DesignMatrices d = build_for_prediction(p.terms, new_data, p.state, p.reference);
  Inputs in{d.uncentered_X(), std::move(d.Z), std::nullopt};
  if (need_trials && p.terms.response.is_prop()) {
    const Column& t = new_data.column(*p.terms.response.trials);
    if (!t.is_numeric()) throw PredictError("trials column '" + t.name + "' must be numeric");
    in.trials = Eigen::Map<const Eigen::VectorXd>(t.numeric.data(), static_cast<Eigen::Index>(t.size()));
  }
  return in;
}

std::vector<Eigen::Index> kept_draws(Eigen::Index n_draws, std::optional<int> ndraws, std::mt19937_64& rng) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(n_draws));
  std::iota(all.begin(), all.end(), 0);
  if (!ndraws) return all;
  if (*ndraws < 1 || *ndraws > n_draws)
    throw PredictError("ndraws must be between 1 and the number of draws per chain (" + std::to_string(n_draws) + ")");
  std::vector<Eigen::Index> kept;
  std::sample(all.begin(), all.end(), std::back_inserter(kept), *ndraws, rng);
  return kept;
}

PredictionDraws compute(const Predictor& p, const PosteriorDraws& draws, const Inputs& in, bool pps,
                        std::optional<int> ndraws, std::uint64_t seed, const std::string& response) {
  const Eigen::Index nb = in.X.cols();
  const Eigen::Index n_sd = p.n_sd();
  const Eigen::Index nu = in.Z.cols();
  const auto n_aux = static_cast<Eigen::Index>(p.family->auxiliary.size());
  if (nb + n_sd + nu + n_aux != draws.n_params())
    throw PredictError("posterior draws do not match the model's parameters");
  const Eigen::Index u_off = nb + n_sd;
  const Eigen::Index aux_off = u_off + nu;
  const Eigen::SparseMatrix<double> Zt = in.Z.transpose();

  PredictionDraws out;
  out.name = pps ? response : response + "_mean";
  for (Eigen::Index c = 0; c < draws.n_chains(); ++c) {
    const Eigen::MatrixXd& chain = draws.chains[static_cast<std::size_t>(c)];
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(seq);
    const auto kept = kept_draws(chain.rows(), pps ? ndraws : std::nullopt, rng);
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(kept.size()), chain.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = chain.row(kept[i]);

    Eigen::MatrixXd eta = sub.leftCols(nb) * in.X.transpose();
    if (nu > 0) eta += (in.Z * sub.middleCols(u_off, nu).transpose()).transpose();
    Eigen::MatrixXd mu = eta.unaryExpr([&](double e) { return detail::link_inverse_unchecked(p.link, e); });
    if (pps) {
      for (Eigen::Index d = 0; d < mu.rows(); ++d) {
        const Eigen::VectorXd aux = sub.row(d).segment(aux_off, n_aux).transpose();
        const std::span<const double> a(aux.data(), static_cast<std::size_t>(aux.size()));
        for (Eigen::Index i = 0; i < mu.cols(); ++i)
          mu(d, i) = sample_response(*p.family, mu(d, i), in.trials ? (*in.trials)(i) : 1.0, a, rng);
      }
    }
    out.chains.push_back(std::move(mu));
  }
  return out;
}

}  // namespace

Predictor Predictor::from_model(const Model& model) {
  Predictor p;
  p.terms = model.terms();
  p.family = &model.family();
  p.link = model.link();
  p.reference = model.design();
  p.state = model.transforms();
  return p;
}

Eigen::Index Predictor::n_sd() const {
  Eigen::Index n = 0;
  for (const auto& g : reference.groups) n += static_cast<Eigen::Index>(g.expr_names.size());
  return n;
}

Eigen::Index Predictor::n_params() const {
  return static_cast<Eigen::Index>(reference.x_names.size()) + n_sd() +
         static_cast<Eigen::Index>(reference.z_names.size()) + static_cast<Eigen::Index>(family->auxiliary.size());
}

PredictionDraws predict_mean(const Model& model, const PosteriorDraws& draws, const DataTable* new_data) {
  const Predictor p = Predictor::from_model(model);
  if (new_data) return predict_mean(p, draws, *new_data);
  const Inputs in{model.design().uncentered_X(), model.design().Z, std::nullopt};
  return compute(p, draws, in, false, std::nullopt, 0, model.design().response.name);
}

PredictionDraws predict_mean(const Predictor& predictor, const PosteriorDraws& draws, const DataTable& new_data) {
  return compute(predictor, draws, inputs_for(predictor, new_data, false), false, std::nullopt, 0,
                 predictor.reference.response.name);
}

PredictionDraws predict_pps(const Model& model, const PosteriorDraws& draws, const DataTable* new_data,
                            std::optional<int> ndraws, std::uint64_t seed) {
  const Predictor p = Predictor::from_model(model);
  if (new_data) return predict_pps(p, draws, *new_data, ndraws, seed);
  const Inputs in{model.design().uncentered_X(), model.design().Z, model.design().response.trials};
  return compute(p, draws, in, true, ndraws, seed, model.design().response.name);
}

PredictionDraws predict_pps(const Predictor& predictor, const PosteriorDraws& draws, const DataTable& new_data,
                            std::optional<int> ndraws, std::uint64_t seed) {
  return compute(predictor, draws, inputs_for(predictor, new_data, true), true, ndraws, seed,
                 predictor.reference.response.name);
}

std::string predictions_long_csv(const PredictionDraws& pred) {
  std::ostringstream os;
  os << "chain,draw,row," << csv_escape(pred.name) << '\n';
  for (Eigen::Index c = 0; c < pred.n_chains(); ++c) {
    const auto& m = pred.chains[static_cast<std::size_t>(c)];
    for (Eigen::Index d = 0; d < m.rows(); ++d)
      for (Eigen::Index i = 0; i < m.cols(); ++i) os << c << ',' << d << ',' << i << ',' << format_double(m(d, i)) << '\n';
  }
  return os.str();
}

std::string predictions_summary_csv(const PredictionDraws& pred, double hdi_prob) {
  std::ostringstream os;
  os << "row,mean,hdi_3%,hdi_97%\n";
  const Eigen::Index total = pred.n_chains() * pred.n_draws();
  Eigen::VectorXd col(total);
  for (Eigen::Index i = 0; i < pred.n_obs(); ++i) {
    Eigen::Index k = 0;
    for (const auto& m : pred.chains)
      for (Eigen::Index d = 0; d < m.rows(); ++d) col(k++) = m(d, i);
    os << i << ',' << format_double(col.mean());
    if (total >= 10) {
      const Interval h = hdi(col, hdi_prob);
      os << ',' << format_double(h.lower) << ',' << format_double(h.upper);
    } else {
      os << ",NA,NA";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace bglmm
