// Command-line front end: fit, prior-sample, predict, pcorr.

#include "bglmm/design.hpp"
#include "bglmm/diagnostics.hpp"
#include "bglmm/manifest.hpp"
#include "bglmm/model.hpp"
#include "bglmm/posthoc.hpp"
#include "bglmm/predict.hpp"
#include "bglmm/priors.hpp"
#include "bglmm/sampler.hpp"
#include "bglmm/tabular.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace bglmm;

namespace {

struct ModelFlags {
  std::string formula;
  std::string data;
  std::string family = "gaussian";
  std::string link;
  std::string priors;
  bool dropna = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--formula", f.formula, "Model formula, e.g. 'y ~ x + (1|g)'")->required();
  cmd->add_option("--data", f.data, "CSV file with the data")->required()->check(CLI::ExistingFile);
  cmd->add_option("--family", f.family, "Response family")->capture_default_str();
  cmd->add_option("--link", f.link, "Link function (family default when omitted)");
  cmd->add_option("--priors", f.priors, "JSON prior-override document")->check(CLI::ExistingFile);
  cmd->add_flag("--dropna", f.dropna, "Drop rows with missing values in model variables");
}

Model build_model(const ModelFlags& f) {
  ModelSpec spec;
  spec.formula = f.formula;
  spec.data = read_csv(f.data);
  spec.family = f.family;
  if (!f.link.empty()) spec.link = f.link;
  if (!f.priors.empty()) spec.priors = read_prior_overrides(f.priors);
  spec.dropna = f.dropna;
  return Model::build(spec);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string describe(const Model& m) {
  std::ostringstream os;
  os << "Formula: " << m.formula() << '\n';
  os << "Family: " << m.family().name << '\n';
  os << "Link: mu = " << link_name(m.link()) << '\n';
  os << "Observations: " << m.design().n_obs() << '\n';
  if (m.dropped_rows() > 0) os << "Dropped incomplete rows: " << m.dropped_rows() << '\n';
  os << "Priors:\n" << format_priors(m.priors());
  return os.str();
}

std::string sampler_stats_csv(const PosteriorDraws& d) {
  std::ostringstream os;
  os << "chain,draw,divergent,tree_depth,n_leapfrog,accept_stat,energy,step_size\n";
  for (std::size_t c = 0; c < d.stats.size(); ++c)
    for (std::size_t i = 0; i < d.stats[c].size(); ++i) {
      const Transition& t = d.stats[c][i];
      os << c << ',' << i << ',' << (t.divergent ? 1 : 0) << ',' << t.tree_depth << ',' << t.n_leapfrog << ','
         << format_double(t.accept_stat) << ',' << format_double(t.energy) << ',' << format_double(t.step_size)
         << '\n';
    }
  return os.str();
}

std::string rank_histograms_csv(const PosteriorDraws& d, int bins) {
  std::ostringstream os;
  os << "parameter,chain,bin,count\n";
  if (d.n_chains() < 2) return os.str();
  for (Eigen::Index p = 0; p < d.n_params(); ++p) {
    const Eigen::MatrixXi h = rank_histogram_data(d.parameter(p), bins);
    for (Eigen::Index c = 0; c < h.rows(); ++c)
      for (Eigen::Index b = 0; b < h.cols(); ++b)
        os << csv_escape(d.names[static_cast<std::size_t>(p)]) << ',' << c << ',' << b << ',' << h(c, b) << '\n';
  }
  return os.str();
}

int cmd_fit(const ModelFlags& mf, const SamplerOptions& so, const std::string& out_dir) {
  const Model model = build_model(mf);
  const fs::path out(out_dir);
  fs::create_directories(out);
  const std::string description = describe(model);
  write_file(out / "model.txt", description);
  std::cout << description << std::flush;

  const PosteriorDraws draws = fit(model, so);
  const auto rows = summarize(draws);
  write_file(out / "draws.csv", draws_csv(draws));
  write_file(out / "summary.csv", summary_csv(rows));
  write_file(out / "summary.txt", summary_text(rows));
  write_file(out / "sampler_stats.csv", sampler_stats_csv(draws));
  write_file(out / "rank_histograms.csv", rank_histograms_csv(draws, 20));
  write_file(out / "manifest.json", manifest_json(model, draws, mf.dropna));
  write_csv(model.data(), out / "training_data.csv");

  std::cout << '\n' << summary_text(rows);
  std::cout << "\nChains: " << draws.n_chains() << ", draws per chain: " << draws.n_draws()
            << ", divergences: " << draws.divergences() << '\n';
  return 0;
}

int cmd_prior_sample(const ModelFlags& mf, int n, std::uint64_t seed, const std::string& out_dir) {
  const Model model = build_model(mf);
  const DrawTable t = sample_priors(model.priors(), model.design(), n, seed);
  std::ostringstream os;
  os << "draw";
  for (const auto& name : t.names) os << ',' << csv_escape(name);
  os << '\n';
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    os << i;
    for (Eigen::Index j = 0; j < t.values.cols(); ++j) os << ',' << format_double(t.values(i, j));
    os << '\n';
  }
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_file(out / "prior_draws.csv", os.str());
  std::cout << describe(model) << "Wrote " << n << " prior draws to " << (out / "prior_draws.csv").string() << '\n';
  return 0;
}

struct SavedFit {
  FitManifest manifest;
  PosteriorDraws draws;
  DataTable training;
};

SavedFit load_fit(const fs::path& dir) {
  SavedFit s;
  s.manifest = read_manifest(dir / "manifest.json");
  s.draws = read_draws_csv(dir / "draws.csv", s.manifest.parameter_names);
  if (s.draws.n_chains() != s.manifest.chains || s.draws.n_draws() != s.manifest.draws)
    throw ManifestError("draws file does not match the manifest's chain and draw counts");
  s.training = read_csv(dir / "training_data.csv");
  return s;
}

int cmd_predict(const std::string& fit_dir, const std::string& data, const std::string& kind,
                std::optional<int> ndraws, std::uint64_t seed, const std::string& out_dir) {
  const SavedFit s = load_fit(fit_dir);
  const DataTable new_data = data.empty() ? s.training : read_csv(data);
  const PredictionDraws pred = kind == "pps" ? predict_pps(s.manifest.predictor, s.draws, new_data, ndraws, seed)
                                             : predict_mean(s.manifest.predictor, s.draws, new_data);
  const fs::path out(out_dir.empty() ? fit_dir : out_dir);
  fs::create_directories(out);
  const std::string stem = kind == "pps" ? "predictions_pps" : "predictions_mean";
  write_file(out / (stem + ".csv"), predictions_long_csv(pred));
  write_file(out / (stem + "_summary.csv"), predictions_summary_csv(pred));
  std::cout << "Predicted '" << pred.name << "': " << pred.n_chains() << " chains x " << pred.n_draws() << " draws x "
            << pred.n_obs() << " rows -> " << (out / (stem + ".csv")).string() << '\n';
  return 0;
}

int cmd_pcorr(const std::string& fit_dir, const std::vector<std::string>& predictors, const std::string& out_dir) {
  const SavedFit s = load_fit(fit_dir);
  ModelSpec spec;
  spec.formula = s.manifest.formula;
  spec.data = s.training;
  spec.family = s.manifest.family;
  spec.link = s.manifest.link;
  const Model model = Model::build(spec);
  if (model.parameter_names() != s.manifest.parameter_names)
    throw ManifestError("training data no longer reproduces the fitted model");
  const auto results = partial_corr_transform(model, s.draws, predictors);

  std::ostringstream rho, rho2, summary;
  rho << "chain,draw";
  rho2 << "chain,draw";
  for (const auto& r : results) {
    rho << ',' << csv_escape(r.predictor);
    rho2 << ',' << csv_escape(r.predictor);
  }
  rho << '\n';
  rho2 << '\n';
  for (Eigen::Index c = 0; c < s.draws.n_chains(); ++c)
    for (Eigen::Index d = 0; d < s.draws.n_draws(); ++d) {
      rho << c << ',' << d;
      rho2 << c << ',' << d;
      for (const auto& r : results) {
        rho << ',' << format_double(r.rho(c, d));
        rho2 << ',' << format_double(r.rho_squared(c, d));
      }
      rho << '\n';
      rho2 << '\n';
    }
  summary << "predictor,scale,constant,mean,sd,hdi_3%,hdi_97%\n";
  for (const auto& r : results) {
    for (int sq = 0; sq < 2; ++sq) {
      const Eigen::MatrixXd& m = sq ? r.rho_squared : r.rho;
      const SummaryRow row = summarize_parameter(r.predictor, m);
      summary << csv_escape(r.predictor) << ',' << (sq ? "rho_squared" : "rho") << ',' << format_double(r.constant)
              << ',' << format_double(row.mean) << ',' << format_double(row.sd) << ',' << format_double(row.hdi_low)
              << ',' << format_double(row.hdi_high) << '\n';
    }
    if (r.out_of_range > 0)
      std::cerr << "warning: " << r.out_of_range << " partial-correlation draws of '" << r.predictor
                << "' fall outside [-1, 1]\n";
  }
  const fs::path out(out_dir.empty() ? fit_dir : out_dir);
  fs::create_directories(out);
  write_file(out / "pcorr_draws.csv", rho.str());
  write_file(out / "pcorr_squared_draws.csv", rho2.str());
  write_file(out / "pcorr_summary.csv", summary.str());
  std::cout << summary.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian generalized linear multilevel models"};
  app.require_subcommand(1);

  ModelFlags fit_flags;
  SamplerOptions sampler;
  std::string fit_out = "bglmm_out";
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write draws, summaries and a manifest");
  add_model_flags(fit_cmd, fit_flags);
  fit_cmd->add_option("--draws", sampler.draws, "Retained draws per chain")->capture_default_str()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--tune", sampler.tune, "Tuning draws per chain")->capture_default_str()->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--chains", sampler.chains, "Number of chains (default: 2 to 4 by cores)")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--target-accept", sampler.target_accept, "Target acceptance statistic")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_option("--seed", sampler.seed, "Master seed")->capture_default_str();
  fit_cmd->add_option("--out", fit_out, "Output directory")->capture_default_str();

  ModelFlags prior_flags;
  int n_prior = 5000;
  std::uint64_t prior_seed = 0;
  std::string prior_out = "bglmm_out";
  auto* prior_cmd = app.add_subcommand("prior-sample", "Draw from the prior distribution");
  add_model_flags(prior_cmd, prior_flags);
  prior_cmd->add_option("--n", n_prior, "Number of draws")->capture_default_str()->check(CLI::PositiveNumber);
  prior_cmd->add_option("--seed", prior_seed, "Seed")->capture_default_str();
  prior_cmd->add_option("--out", prior_out, "Output directory")->capture_default_str();

  std::string pred_fit, pred_data, pred_kind = "mean", pred_out;
  std::optional<int> pred_ndraws;
  std::uint64_t pred_seed = 0;
  auto* pred_cmd = app.add_subcommand("predict", "Posterior mean or predictive draws from a saved fit");
  pred_cmd->add_option("--fit", pred_fit, "Directory written by 'fit'")->required()->check(CLI::ExistingDirectory);
  pred_cmd->add_option("--data", pred_data, "New data (training data when omitted)")->check(CLI::ExistingFile);
  pred_cmd->add_option("--kind", pred_kind, "mean or pps")->capture_default_str()->check(CLI::IsMember({"mean", "pps"}));
  pred_cmd->add_option("--ndraws", pred_ndraws, "Draws per chain to keep for pps")->check(CLI::PositiveNumber);
  pred_cmd->add_option("--seed", pred_seed, "Seed for pps")->capture_default_str();
  pred_cmd->add_option("--out", pred_out, "Output directory (default: the fit directory)");

  std::string pc_fit, pc_out;
  std::vector<std::string> pc_predictors;
  auto* pc_cmd = app.add_subcommand("pcorr", "Partial-correlation transform of slope draws");
  pc_cmd->add_option("--fit", pc_fit, "Directory written by 'fit'")->required()->check(CLI::ExistingDirectory);
  pc_cmd->add_option("--predictors", pc_predictors, "Comma-separated common predictors")->required()->delimiter(',');
  pc_cmd->add_option("--out", pc_out, "Output directory (default: the fit directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_flags, sampler, fit_out);
    if (*prior_cmd) return cmd_prior_sample(prior_flags, n_prior, prior_seed, prior_out);
    if (*pred_cmd) return cmd_predict(pred_fit, pred_data, pred_kind, pred_ndraws, pred_seed, pred_out);
    if (*pc_cmd) return cmd_pcorr(pc_fit, pc_predictors, pc_out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 2;
}
