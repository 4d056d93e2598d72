#include "bglmm/diagnostics.hpp"

#include "bglmm/special.hpp"
#include "bglmm/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bglmm {

namespace {

void require_chains(const Eigen::MatrixXd& chains) {
  if (chains.rows() < 1 || chains.cols() < 4) throw DiagnosticsError("need at least 4 draws per chain");
  if (!chains.allFinite()) throw DiagnosticsError("draws contain non-finite values");
}

bool is_constant(const Eigen::MatrixXd& m) { return m.size() == 0 || (m.array() == m(0, 0)).all(); }

double sample_var(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

// Classic between/within statistic on already split chains.
double rhat_classic(const Eigen::MatrixXd& chains) {
  const double n = static_cast<double>(chains.cols());
  const Eigen::VectorXd chain_mean = chains.rowwise().mean();
  Eigen::VectorXd chain_var(chains.rows());
  for (Eigen::Index c = 0; c < chains.rows(); ++c) chain_var(c) = sample_var(chains.row(c).transpose());
  const double between = chains.rows() > 1 ? n * sample_var(chain_mean) : 0.0;
  const double within = chain_var.mean();
  return std::sqrt((between / within + n - 1) / n);
}

// Autocovariance at `lag` (biased, divided by n) of one chain.
double autocov(const Eigen::Ref<const Eigen::RowVectorXd>& x, double mean, Eigen::Index lag) {
  const Eigen::Index n = x.size();
  if (lag >= n) return 0.0;
  const auto a = x.head(n - lag).array() - mean;
  const auto b = x.tail(n - lag).array() - mean;
  return (a * b).sum() / static_cast<double>(n);
}

double median(Eigen::VectorXd v) { return quantile(v, 0.5); }

}  // namespace

double quantile(const Eigen::Ref<const Eigen::VectorXd>& values, double q) {
  if (values.size() == 0) throw DiagnosticsError("quantile of an empty sample");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Interval hdi(const Eigen::Ref<const Eigen::VectorXd>& draws, double prob) {
  if (!(prob > 0 && prob < 1)) throw DiagnosticsError("hdi probability must be in (0, 1)");
  const auto n = static_cast<std::size_t>(draws.size());
  if (n < 10) throw DiagnosticsError("hdi needs at least 10 draws");
  std::vector<double> v(draws.data(), draws.data() + draws.size());
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(prob * static_cast<double>(n)));
  Interval best{v[0], v[k - 1]};
  double width = best.upper - best.lower;
  for (std::size_t i = 1; i + k - 1 < n; ++i) {
    const double w = v[i + k - 1] - v[i];
    if (w < width) {
      width = w;
      best = {v[i], v[i + k - 1]};
    }
  }
  return best;
}

Eigen::MatrixXd average_ranks(const Eigen::MatrixXd& values) {
  const auto n = static_cast<std::size_t>(values.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const double* data = values.data();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data[a] < data[b]; });
  Eigen::MatrixXd ranks(values.rows(), values.cols());
  double* out = ranks.data();
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && data[order[j + 1]] == data[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

Eigen::MatrixXd split_chains(const Eigen::MatrixXd& chains) {
  const Eigen::Index half = chains.cols() / 2;
  Eigen::MatrixXd out(2 * chains.rows(), half);
  for (Eigen::Index c = 0; c < chains.rows(); ++c) {
    out.row(2 * c) = chains.row(c).head(half);
    out.row(2 * c + 1) = chains.row(c).tail(half);
  }
  return out;
}

Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& chains) {
  const double s = static_cast<double>(chains.size());
  return average_ranks(chains).unaryExpr([s](double r) { return normal_quantile((r - 0.375) / (s + 0.25)); });
}

double r_hat(const Eigen::MatrixXd& chains) {
  require_chains(chains);
  if (is_constant(chains)) return 1.0;
  const Eigen::MatrixXd split = split_chains(chains);
  const double bulk = rhat_classic(rank_normalize(split));
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(chains.data(), chains.size());
  const double med = median(flat);
  const Eigen::MatrixXd folded = (chains.array() - med).abs().matrix();
  const double tail = is_constant(folded) ? 1.0 : rhat_classic(rank_normalize(split_chains(folded)));
  return std::max(bulk, tail);
}

double ess_raw(const Eigen::MatrixXd& chains) {
  const Eigen::Index m = chains.rows();
  const Eigen::Index n = chains.cols();
  const double total = static_cast<double>(m * n);
  if (is_constant(chains)) return total;
  const Eigen::VectorXd chain_mean = chains.rowwise().mean();

  // Mean over chains of the autocovariance at each lag, computed on demand.
  std::vector<double> acov_cache;
  const auto mean_acov = [&](Eigen::Index lag) {
    while (static_cast<Eigen::Index>(acov_cache.size()) <= lag) {
      const auto t = static_cast<Eigen::Index>(acov_cache.size());
      double s = 0.0;
      for (Eigen::Index c = 0; c < m; ++c) s += autocov(chains.row(c), chain_mean(c), t);
      acov_cache.push_back(s / static_cast<double>(m));
    }
    return acov_cache[static_cast<std::size_t>(lag)];
  };

  const double nd = static_cast<double>(n);
  const double mean_var = mean_acov(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += sample_var(chain_mean);
  if (!(var_plus > 0)) return total;

  std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;

  Eigen::Index t = 1;
  while (t < n - 3 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0) {
      rho[static_cast<std::size_t>(t + 1)] = rho_even;
      rho[static_cast<std::size_t>(t + 2)] = rho_odd;
    }
    t += 2;
  }
  const Eigen::Index max_t = t - 2;
  if (rho_even > 0 && max_t + 1 < n) rho[static_cast<std::size_t>(max_t + 1)] = rho_even;

  for (t = 1; t <= max_t - 2; t += 2) {
    const auto i = static_cast<std::size_t>(t);
    if (rho[i + 1] + rho[i + 2] > rho[i - 1] + rho[i]) {
      rho[i + 1] = (rho[i - 1] + rho[i]) / 2.0;
      rho[i + 2] = rho[i + 1];
    }
  }
  double tau = -1.0;
  for (Eigen::Index k = 0; k <= max_t; ++k) tau += 2.0 * rho[static_cast<std::size_t>(k)];
  if (max_t + 1 < n) tau += rho[static_cast<std::size_t>(max_t + 1)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double ess_bulk(const Eigen::MatrixXd& chains) {
  require_chains(chains);
  if (is_constant(chains)) return static_cast<double>(chains.size());
  return ess_raw(rank_normalize(split_chains(chains)));
}

double ess_tail(const Eigen::MatrixXd& chains) {
  require_chains(chains);
  if (is_constant(chains)) return static_cast<double>(chains.size());
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(chains.data(), chains.size());
  const double q05 = quantile(flat, 0.05);
  const double q95 = quantile(flat, 0.95);
  const Eigen::MatrixXd lo = (chains.array() <= q05).cast<double>().matrix();
  const Eigen::MatrixXd hi = (chains.array() <= q95).cast<double>().matrix();
  return std::min(ess_raw(split_chains(lo)), ess_raw(split_chains(hi)));
}

double mcse_mean(const Eigen::MatrixXd& chains) {
  require_chains(chains);
  if (is_constant(chains)) return 0.0;
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(chains.data(), chains.size());
  return std::sqrt(sample_var(flat)) / std::sqrt(ess_bulk(chains));
}

double mcse_sd(const Eigen::MatrixXd& chains) {
  require_chains(chains);
  if (is_constant(chains)) return 0.0;
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(chains.data(), chains.size());
  const double sd = std::sqrt(sample_var(flat));
  const Eigen::MatrixXd sq = (chains.array() - flat.mean()).square().matrix();
  const double ess = std::min(ess_raw(split_chains(chains)), ess_raw(split_chains(sq)));
  const double fac = std::exp(1.0) * std::pow(1.0 - 1.0 / ess, ess - 1.0) - 1.0;
  return sd * std::sqrt(std::max(fac, 0.0));
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{"name",      "mean",    "sd",       "hdi_3%",   "hdi_97%",
                                             "mcse_mean", "mcse_sd", "ess_bulk", "ess_tail", "r_hat"};
  return cols;
}

SummaryRow summarize_parameter(const std::string& name, const Eigen::MatrixXd& chains, double hdi_prob) {
  SummaryRow r;
  r.name = name;
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(chains.data(), chains.size());
  r.mean = flat.mean();
  r.sd = flat.size() > 1 ? std::sqrt(sample_var(flat)) : 0.0;
  if (is_constant(chains)) r.sd = 0.0;
  const Interval h = hdi(flat, hdi_prob);
  r.hdi_low = h.lower;
  r.hdi_high = h.upper;
  r.mcse_mean = mcse_mean(chains);
  r.mcse_sd = mcse_sd(chains);
  r.ess_bulk = ess_bulk(chains);
  r.ess_tail = ess_tail(chains);
  r.r_hat = r_hat(chains);
  return r;
}

std::vector<SummaryRow> summarize(const PosteriorDraws& draws, double hdi_prob) {
  if (draws.n_chains() == 0 || draws.n_draws() == 0) throw DiagnosticsError("no draws to summarize");
  std::vector<SummaryRow> rows;
  for (Eigen::Index p = 0; p < draws.n_params(); ++p)
    rows.push_back(summarize_parameter(draws.names[static_cast<std::size_t>(p)], draws.parameter(p), hdi_prob));
  return rows;
}

namespace {
std::vector<double> row_values(const SummaryRow& r) {
  return {r.mean, r.sd, r.hdi_low, r.hdi_high, r.mcse_mean, r.mcse_sd, r.ess_bulk, r.ess_tail, r.r_hat};
}
}  // namespace

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  const auto& cols = summary_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : rows) {
    os << csv_escape(r.name);
    for (double v : row_values(r)) os << ',' << format_double(v);
    os << '\n';
  }
  return os.str();
}

std::string summary_text(const std::vector<SummaryRow>& rows, int decimals) {
  const auto& cols = summary_columns();
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line{r.name};
    for (double v : row_values(r)) line.push_back(format_fixed(v, decimals));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cols.size(), 0);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    width[c] = cols[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream os;
  const auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::string pad(width[c] - line[c].size(), ' ');
      if (c == 0) os << line[c] << pad;
      else os << "  " << pad << line[c];
    }
    os << '\n';
  };
  emit(cols);
  for (const auto& line : cells) emit(line);
  return os.str();
}

Eigen::MatrixXi rank_histogram_data(const Eigen::MatrixXd& chains, int bins) {
  if (chains.rows() < 2) throw DiagnosticsError("rank histograms need at least 2 chains");
  if (bins < 1) throw DiagnosticsError("number of bins must be positive");
  const Eigen::MatrixXd ranks = average_ranks(chains);
  const double total = static_cast<double>(chains.size());
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(chains.rows(), bins);
  for (Eigen::Index c = 0; c < chains.rows(); ++c) {
    for (Eigen::Index d = 0; d < chains.cols(); ++d) {
      const int b = std::min(bins - 1, static_cast<int>(std::floor((ranks(c, d) - 1.0) * bins / total)));
      ++counts(c, b);
    }
  }
  return counts;
}

}  // namespace bglmm
