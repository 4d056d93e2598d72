#pragma once

#include "bglmm/families.hpp"
#include "bglmm/formula.hpp"
#include "bglmm/tabular.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace bglmm {

class DesignError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Statistics a stateful transform captured from the training data.
struct Transform {
  enum class Kind { Scale, Center };
  Kind kind = Kind::Scale;
  AstNode argument;
  double mean = 0.0;
  double sd = 1.0;
};

/// Keyed by factor name, e.g. "scale(age)". Filled once, at the training build.
struct TransformState {
  std::map<std::string, Transform> transforms;
};

/// Z columns for one grouping factor. Expression columns are merged across all
/// group terms sharing the factor, so `(1|g) + (x|g)` yields {1|g, x|g}.
struct GroupBlock {
  std::string factor;
  std::vector<std::string> expr_names;  // "1", "x", "c[B]"
  std::vector<std::string> expr_terms;  // owning term per expr column: "1", "x", "c"
  Eigen::MatrixXd expr;                 // n x expr_names.size(), uncentered
  std::vector<std::string> levels;
  std::vector<int> codes;               // level index per row
  Eigen::Index offset = 0;              // first Z column of the block

  Eigen::Index n_levels() const { return static_cast<Eigen::Index>(levels.size()); }
  Eigen::Index n_columns() const { return static_cast<Eigen::Index>(expr_names.size()) * n_levels(); }
  /// "x|g": the name shared by the standard deviation and its coefficients.
  std::string sd_name(std::size_t expr_col) const { return expr_names[expr_col] + "|" + factor; }
};

struct DesignMatrices {
  Eigen::MatrixXd X;                     // centered when `centered`
  std::vector<std::string> x_names;
  std::vector<std::string> x_terms;      // owning term name per column
  Eigen::VectorXd column_means;          // pre-centering column means
  bool has_intercept = false;
  bool centered = false;

  Eigen::SparseMatrix<double> Z;
  std::vector<std::string> z_names;
  std::vector<GroupBlock> groups;

  ResponseInfo response;
  // Training level sets of categorical factors and grouping factors.
  std::map<std::string, std::vector<std::string>> factor_levels;
  std::map<std::string, std::vector<std::string>> group_levels;

  Eigen::Index n_obs() const { return X.rows(); }
  Eigen::MatrixXd uncentered_X() const;
};

struct DesignOptions {
  /// Center non-intercept X columns when the model has an intercept.
  bool center = true;
};

struct DesignBuild {
  DesignMatrices design;
  TransformState state;
};

DesignBuild build_design(const TermSet& terms, const DataTable& data, const Family& family,
                         const DesignOptions& options = {});

/// Replays a training build on new predictor data: stored transform statistics,
/// training level sets, training column means. The response is not read.
DesignMatrices build_for_prediction(const TermSet& terms, const DataTable& new_data, const TransformState& state,
                                    const DesignMatrices& reference);

/// Transformed columns for new data, keyed like TransformState.
std::map<std::string, Eigen::VectorXd> apply_transforms(const DataTable& new_data, const TransformState& state);

// ---------------------------------------------------------------------------
// Building blocks, exposed for testing.

/// Evaluated factor: either one numeric column or categorical codes.
struct FactorValues {
  bool categorical = false;
  Eigen::VectorXd numeric;
  std::vector<int> codes;
  std::vector<std::string> levels;
};

/// Per bucket of numeric factors, the categorical subsets already spanned.
using SpannedSet = std::map<std::vector<std::string>, std::set<std::vector<std::string>>>;

struct EncodedColumns {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};

/// Full/reduced coding of one term given what earlier terms already span.
EncodedColumns encode_term(const Term& term, const std::map<std::string, FactorValues>& factors,
                           SpannedSet& spanned);

/// Row-wise Kronecker of expression columns with group indicators, expr-major.
Eigen::SparseMatrix<double> group_block_matrix(const Eigen::MatrixXd& expr, const std::vector<int>& codes,
                                               Eigen::Index n_levels);

/// Numerical rank with singular values below tol * sigma_max treated as zero.
Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double tol = 1e-8);

void write_design_csv(const DesignMatrices& design, const std::filesystem::path& dir);

}  // namespace bglmm
