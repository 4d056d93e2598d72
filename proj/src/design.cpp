#include "bglmm/design.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace bglmm {

namespace {

struct Categorized {
  std::vector<std::string> levels;
  std::vector<int> codes;
};

// Numeric columns used as grouping factors become categorical with levels in
// numeric order.
Categorized categorize(const Column& c) {
  Categorized out;
  if (!c.is_numeric()) {
    out.levels = c.levels;
    out.codes = c.codes;
    return out;
  }
  std::vector<double> distinct;
  for (double v : c.numeric)
    if (!std::isnan(v)) distinct.push_back(v);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (double v : distinct) out.levels.push_back(format_double(v));
  out.codes.reserve(c.numeric.size());
  for (double v : c.numeric) {
    if (std::isnan(v)) {
      out.codes.push_back(-1);
    } else {
      out.codes.push_back(static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin()));
    }
  }
  return out;
}

// Codes of `c` against a fixed training level set.
std::vector<int> recode(const Column& c, const std::vector<std::string>& levels, const std::string& what) {
  std::vector<int> codes(c.size());
  for (std::size_t r = 0; r < c.size(); ++r) {
    if (c.missing(r)) throw DesignError("missing value in '" + c.name + "' (row " + std::to_string(r + 1) + ")");
    const std::string lab = c.label(r);
    const auto it = std::find(levels.begin(), levels.end(), lab);
    if (it == levels.end())
      throw DesignError(what + " '" + c.name + "' has level '" + lab + "' that was not seen in the training data");
    codes[r] = static_cast<int>(it - levels.begin());
  }
  return codes;
}

void require_complete(const Column& c) {
  for (std::size_t r = 0; r < c.size(); ++r)
    if (c.missing(r))
      throw DesignError("missing value in '" + c.name + "' (row " + std::to_string(r + 1) +
                        "); drop incomplete rows first");
}

Eigen::VectorXd apply_transform(const Transform& t, const Eigen::ArrayXd& v) {
  if (t.kind == Transform::Kind::Scale) return ((v - t.mean) / t.sd).matrix();
  return (v - t.mean).matrix();
}

class Builder {
public:
  Builder(const DataTable& data, TransformState& state, const DesignMatrices* reference)
      : data_(data), state_(state), reference_(reference) {}

  bool training() const { return reference_ == nullptr; }

  const FactorValues& factor(const Factor& f) {
    auto it = cache_.find(f.name);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(f.name, evaluate(f)).first->second;
  }

  Categorized grouping(const std::string& name) {
    const Column& c = data_.column(name);
    if (training()) {
      require_complete(c);
      return categorize(c);
    }
    const auto it = reference_->group_levels.find(name);
    if (it == reference_->group_levels.end()) throw DesignError("no training levels for grouping factor '" + name + "'");
    return {it->second, recode(c, it->second, "grouping factor")};
  }

  Eigen::ArrayXd arith(const AstNode& n) {
    const auto rows = static_cast<Eigen::Index>(data_.n_rows());
    switch (n.kind) {
      case AstNode::Kind::Variable: {
        const Column& c = data_.column(n.text);
        if (!c.is_numeric()) throw DesignError("variable '" + n.text + "' is categorical and cannot be used in arithmetic");
        require_complete(c);
        return Eigen::Map<const Eigen::ArrayXd>(c.numeric.data(), rows);
      }
      case AstNode::Kind::Number:
      case AstNode::Kind::Literal:
        return Eigen::ArrayXd::Constant(rows, std::stod(n.text));
      case AstNode::Kind::Paren:
      case AstNode::Kind::Brace:
        return arith(n.children[0]);
      case AstNode::Kind::Negate:
        return -arith(n.children[0]);
      case AstNode::Kind::Binary: {
        const Eigen::ArrayXd a = arith(n.children[0]);
        const Eigen::ArrayXd b = arith(n.children[1]);
        if (n.text == "+") return a + b;
        if (n.text == "-") return a - b;
        if (n.text == "*") return a * b;
        if (n.text == "/") return a / b;
        if (n.text == "**") return a.binaryExpr(b, [](double x, double y) { return std::pow(x, y); });
        break;
      }
      default:
        break;
    }
    throw DesignError("unsupported expression '" + to_string(n) + "'");
  }

private:
  FactorValues evaluate(const Factor& f) {
    FactorValues out;
    switch (f.kind) {
      case Factor::Kind::Variable: {
        const Column& c = data_.column(f.name);
        const bool categorical = training() ? !c.is_numeric() : reference_->factor_levels.count(f.name) > 0;
        if (categorical) {
          out.categorical = true;
          if (training()) {
            require_complete(c);
            out.levels = c.levels;
            out.codes = c.codes;
          } else {
            out.levels = reference_->factor_levels.at(f.name);
            out.codes = recode(c, out.levels, "variable");
          }
        } else {
          if (!c.is_numeric()) throw DesignError("variable '" + f.name + "' was numeric in the training data");
          require_complete(c);
          out.numeric = Eigen::Map<const Eigen::VectorXd>(c.numeric.data(), static_cast<Eigen::Index>(c.size()));
        }
        break;
      }
      case Factor::Kind::Brace:
        out.numeric = arith(f.args.at(0)).matrix();
        break;
      case Factor::Kind::Call: {
        const Eigen::ArrayXd v = arith(f.args.at(0));
        if (training()) {
          Transform t;
          t.kind = f.function == "scale" ? Transform::Kind::Scale : Transform::Kind::Center;
          t.argument = f.args.at(0);
          const ColumnStats s = column_stats(v.matrix());
          t.mean = s.mean;
          t.sd = s.sd;
          if (t.kind == Transform::Kind::Scale && !(s.sd > 0))
            throw DesignError("zero-variance predictor under " + f.name);
          state_.transforms[f.name] = t;
        }
        const auto it = state_.transforms.find(f.name);
        if (it == state_.transforms.end()) throw DesignError("no stored statistics for " + f.name);
        const Transform& t = it->second;
        out.numeric = apply_transform(t, v);
        break;
      }
    }
    return out;
  }

  const DataTable& data_;
  TransformState& state_;
  const DesignMatrices* reference_;
  std::map<std::string, FactorValues> cache_;
};

// Subterm factor: index into the term's categorical factors, and whether it is
// coded with all levels (true) or with the reference level dropped.
using Subterm = std::vector<std::pair<int, bool>>;

bool can_absorb(const Subterm& longer, const Subterm& shorter) {
  if (longer.size() != shorter.size() + 1) return false;
  return std::includes(longer.begin(), longer.end(), shorter.begin(), shorter.end());
}

Subterm absorb(const Subterm& longer, const Subterm& shorter) {
  Subterm out = shorter;
  for (const auto& e : longer) {
    if (std::find(shorter.begin(), shorter.end(), e) == shorter.end()) out.emplace_back(e.first, true);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void simplify(std::vector<Subterm>& subterms) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t s = 0; s < subterms.size() && !changed; ++s) {
      for (std::size_t l = s + 1; l < subterms.size() && !changed; ++l) {
        if (can_absorb(subterms[l], subterms[s])) {
          subterms[l] = absorb(subterms[l], subterms[s]);
          subterms.erase(subterms.begin() + static_cast<std::ptrdiff_t>(s));
          changed = true;
        }
      }
    }
  }
}

Eigen::MatrixXd hstack(const std::vector<Eigen::MatrixXd>& blocks, Eigen::Index rows) {
  Eigen::Index cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

ResponseInfo build_response(const TermSet& terms, const DataTable& data, const Family& family) {
  const ResponseNode& r = terms.response;
  ResponseInfo info;
  const auto rows = static_cast<Eigen::Index>(data.n_rows());
  if (r.is_prop()) {
    if (family.id != FamilyName::Binomial) throw DesignError("prop() response requires the binomial family");
    const Column& s = data.column(*r.successes);
    const Column& t = data.column(*r.trials);
    if (!s.is_numeric() || !t.is_numeric()) throw DesignError("prop() arguments must be numeric");
    require_complete(s);
    require_complete(t);
    info.name = *r.successes;
    info.values = Eigen::Map<const Eigen::VectorXd>(s.numeric.data(), rows);
    info.trials = Eigen::Map<const Eigen::VectorXd>(t.numeric.data(), rows);
    validate_response(family, info);
    return info;
  }
  if (family.id == FamilyName::Binomial)
    throw DesignError("binomial family needs a prop(successes, trials) response");
  const Column& c = data.column(r.name);
  require_complete(c);
  info.name = r.name;
  if (r.level || !c.is_numeric()) {
    if (family.id != FamilyName::Bernoulli)
      throw DesignError("categorical response '" + r.name + "' cannot be used with the " + family.name + " family");
    std::string success;
    if (r.level) {
      success = *r.level;
      bool found = false;
      for (std::size_t i = 0; i < c.size() && !found; ++i) found = c.label(i) == success;
      if (!found) throw DesignError("response level '" + success + "' does not occur in '" + r.name + "'");
    } else {
      success = c.levels.front();
    }
    info.success_level = success;
    info.values.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) info.values(i) = c.label(static_cast<std::size_t>(i)) == success ? 1.0 : 0.0;
  } else {
    info.values = Eigen::Map<const Eigen::VectorXd>(c.numeric.data(), rows);
  }
  validate_response(family, info);
  return info;
}

// The intercept term has no factors to take a row count from.
EncodedColumns encode_rows(const Term& t, const std::map<std::string, FactorValues>& values, SpannedSet& spanned,
                           Eigen::Index rows) {
  auto enc = encode_term(t, values, spanned);
  if (enc.values.rows() == 0) enc.values = Eigen::MatrixXd::Ones(rows, enc.values.cols());
  return enc;
}

struct MergedGroup {
  std::string factor;
  bool has_intercept = false;
  std::vector<Term> expr;
};

std::vector<MergedGroup> merge_groups(const std::vector<GroupTerm>& groups) {
  std::vector<MergedGroup> out;
  for (const auto& g : groups) {
    auto it = std::find_if(out.begin(), out.end(), [&](const MergedGroup& m) { return m.factor == g.factor; });
    if (it == out.end()) {
      out.push_back({g.factor, false, {}});
      it = std::prev(out.end());
    }
    it->has_intercept = it->has_intercept || g.has_intercept;
    for (const auto& t : g.expr)
      if (std::find(it->expr.begin(), it->expr.end(), t) == it->expr.end()) it->expr.push_back(t);
  }
  for (auto& m : out)
    std::stable_sort(m.expr.begin(), m.expr.end(), [](const Term& a, const Term& b) { return a.order() < b.order(); });
  return out;
}

DesignMatrices build(const TermSet& terms, const DataTable& data, const Family* family, TransformState& state,
                     const DesignMatrices* reference, const DesignOptions& options) {
  if (data.n_rows() == 0) throw DesignError("dataset has no rows");
  Builder b(data, state, reference);
  DesignMatrices d;
  const auto rows = static_cast<Eigen::Index>(data.n_rows());
  if (family) d.response = build_response(terms, data, *family);

  // Common part.
  std::vector<Term> x_terms;
  if (terms.has_intercept) x_terms.emplace_back();
  x_terms.insert(x_terms.end(), terms.common.begin(), terms.common.end());

  SpannedSet spanned;
  std::vector<Eigen::MatrixXd> blocks;
  for (const auto& t : x_terms) {
    std::map<std::string, FactorValues> values;
    for (const auto& f : t.factors) {
      values[f.name] = b.factor(f);
      if (values[f.name].categorical) d.factor_levels[f.name] = values[f.name].levels;
    }
    auto enc = encode_rows(t, values, spanned, rows);
    blocks.push_back(std::move(enc.values));
    for (auto& n : enc.names) {
      d.x_names.push_back(std::move(n));
      d.x_terms.push_back(t.name());
    }
  }
  d.X = hstack(blocks, rows);
  d.has_intercept = terms.has_intercept;

  if (reference) {
    if (reference->x_names != d.x_names) throw DesignError("prediction design columns differ from the training design");
    d.column_means = reference->column_means;
    d.centered = reference->centered;
    d.factor_levels = reference->factor_levels;
  } else {
    d.column_means = d.X.colwise().mean().transpose();
    d.centered = options.center && d.has_intercept;
  }
  if (d.centered) {
    for (Eigen::Index j = 1; j < d.X.cols(); ++j) d.X.col(j).array() -= d.column_means(j);
  }

  // Group-specific part.
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::Index z_cols = 0;
  for (const auto& m : merge_groups(terms.group)) {
    GroupBlock blk;
    blk.factor = m.factor;
    std::vector<Term> e_terms;
    if (m.has_intercept) e_terms.emplace_back();
    e_terms.insert(e_terms.end(), m.expr.begin(), m.expr.end());
    SpannedSet sp;
    std::vector<Eigen::MatrixXd> e_blocks;
    for (const auto& t : e_terms) {
      std::map<std::string, FactorValues> values;
      for (const auto& f : t.factors) {
        values[f.name] = b.factor(f);
        if (values[f.name].categorical && !reference) d.factor_levels[f.name] = values[f.name].levels;
      }
      auto enc = encode_rows(t, values, sp, rows);
      e_blocks.push_back(std::move(enc.values));
      for (auto& n : enc.names) {
        blk.expr_names.push_back(n == "Intercept" ? "1" : std::move(n));
        blk.expr_terms.push_back(t.is_intercept() ? "1" : t.name());
      }
    }
    blk.expr = hstack(e_blocks, rows);
    Categorized g = b.grouping(m.factor);
    if (reference) {
      const auto it = std::find_if(reference->groups.begin(), reference->groups.end(),
                                   [&](const GroupBlock& r) { return r.factor == m.factor; });
      if (it == reference->groups.end() || it->expr_names != blk.expr_names)
        throw DesignError("prediction group columns differ from the training design");
    } else if (g.levels.size() < 2) {
      throw DesignError("grouping factor '" + m.factor + "' has a single level");
    }
    blk.levels = g.levels;
    blk.codes = g.codes;
    d.group_levels[m.factor] = g.levels;
    blk.offset = z_cols;
    const auto block = group_block_matrix(blk.expr, blk.codes, blk.n_levels());
    for (int k = 0; k < block.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(block, k); it; ++it)
        triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(z_cols + it.col()), it.value());
    for (const auto& en : blk.expr_names)
      for (const auto& lv : blk.levels) d.z_names.push_back(en + "|" + m.factor + "[" + lv + "]");
    z_cols += blk.n_columns();
    d.groups.push_back(std::move(blk));
  }
  d.Z.resize(rows, z_cols);
  d.Z.setFromTriplets(triplets.begin(), triplets.end());
  d.Z.makeCompressed();
  return d;
}

}  // namespace

Eigen::MatrixXd DesignMatrices::uncentered_X() const {
  Eigen::MatrixXd out = X;
  if (centered)
    for (Eigen::Index j = 1; j < out.cols(); ++j) out.col(j).array() += column_means(j);
  return out;
}

EncodedColumns encode_term(const Term& term, const std::map<std::string, FactorValues>& factors,
                           SpannedSet& spanned) {
  std::vector<std::string> numeric_names;
  std::vector<const Factor*> cats;
  for (const auto& f : term.factors) {
    const auto it = factors.find(f.name);
    if (it == factors.end()) throw DesignError("factor '" + f.name + "' was not evaluated");
    if (it->second.categorical) cats.push_back(&f);
    else numeric_names.push_back(f.name);
  }

  // Categorical subsets ordered by size, then by position in the term.
  const int k = static_cast<int>(cats.size());
  std::vector<std::vector<int>> subsets;
  for (unsigned mask = 0; mask < (1u << k); ++mask) {
    std::vector<int> s;
    for (int i = 0; i < k; ++i)
      if (mask & (1u << i)) s.push_back(i);
    subsets.push_back(std::move(s));
  }
  std::stable_sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });

  auto& used = spanned[numeric_names];
  std::vector<Subterm> subterms;
  for (const auto& s : subsets) {
    std::vector<std::string> key;
    for (int i : s) key.push_back(cats[static_cast<std::size_t>(i)]->name);
    if (used.insert(key).second) {
      Subterm st;
      for (int i : s) st.emplace_back(i, false);
      subterms.push_back(std::move(st));
    }
  }
  simplify(subterms);

  // Rows from any factor; the intercept alone has none, callers resize.
  Eigen::Index rows = 0;
  for (const auto& f : term.factors) {
    const auto& v = factors.at(f.name);
    rows = v.categorical ? static_cast<Eigen::Index>(v.codes.size()) : v.numeric.size();
    break;
  }
  Eigen::VectorXd numeric_product = Eigen::VectorXd::Ones(rows);
  for (const auto& n : numeric_names) numeric_product.array() *= factors.at(n).numeric.array();

  EncodedColumns out;
  std::vector<Eigen::VectorXd> cols;
  for (const auto& st : subterms) {
    // Level lists per coded factor; the left-most factor varies fastest.
    std::vector<std::vector<int>> level_sets;
    for (const auto& [idx, full] : st) {
      const auto& v = factors.at(cats[static_cast<std::size_t>(idx)]->name);
      std::vector<int> lv;
      for (int l = full ? 0 : 1; l < static_cast<int>(v.levels.size()); ++l) lv.push_back(l);
      level_sets.push_back(std::move(lv));
    }
    std::vector<std::size_t> pos(level_sets.size(), 0);
    const bool empty_product =
        std::any_of(level_sets.begin(), level_sets.end(), [](const auto& l) { return l.empty(); });
    if (empty_product) continue;
    while (true) {
      Eigen::VectorXd col = numeric_product;
      std::string name;
      for (const auto& f : term.factors) {
        const auto& v = factors.at(f.name);
        std::string piece;
        if (!v.categorical) {
          piece = f.name;
        } else {
          const int ci = static_cast<int>(std::find(cats.begin(), cats.end(), &f) - cats.begin());
          const auto sit = std::find_if(st.begin(), st.end(), [&](const auto& e) { return e.first == ci; });
          if (sit == st.end()) continue;
          const int level = level_sets[static_cast<std::size_t>(sit - st.begin())][pos[static_cast<std::size_t>(sit - st.begin())]];
          for (Eigen::Index r = 0; r < rows; ++r)
            if (v.codes[static_cast<std::size_t>(r)] != level) col(r) = 0.0;
          piece = f.name + "[" + v.levels[static_cast<std::size_t>(level)] + "]";
        }
        if (!name.empty()) name += ':';
        name += piece;
      }
      cols.push_back(std::move(col));
      out.names.push_back(name.empty() ? "Intercept" : name);
      std::size_t i = 0;
      for (; i < pos.size(); ++i) {
        if (++pos[i] < level_sets[i].size()) break;
        pos[i] = 0;
      }
      if (i == pos.size()) break;
    }
  }
  out.values.resize(rows, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.values.col(static_cast<Eigen::Index>(c)) = cols[c];
  return out;
}

Eigen::SparseMatrix<double> group_block_matrix(const Eigen::MatrixXd& expr, const std::vector<int>& codes,
                                               Eigen::Index n_levels) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(expr.rows() * expr.cols()));
  for (Eigen::Index c = 0; c < expr.cols(); ++c) {
    for (Eigen::Index r = 0; r < expr.rows(); ++r) {
      const double v = expr(r, c);
      if (v != 0.0) trip.emplace_back(static_cast<int>(r), static_cast<int>(c * n_levels + codes[static_cast<std::size_t>(r)]), v);
    }
  }
  Eigen::SparseMatrix<double> m(expr.rows(), expr.cols() * n_levels);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double tol) {
  if (m.size() == 0) return 0;
  // BDCSVD can return NaN singular values on exactly rank-deficient indicator matrices.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  return (s.array() > tol * s(0)).count();
}

DesignBuild build_design(const TermSet& terms, const DataTable& data, const Family& family,
                         const DesignOptions& options) {
  DesignBuild out;
  out.design = build(terms, data, &family, out.state, nullptr, options);
  return out;
}

DesignMatrices build_for_prediction(const TermSet& terms, const DataTable& new_data, const TransformState& state,
                                    const DesignMatrices& reference) {
  TransformState replay = state;
  return build(terms, new_data, nullptr, replay, &reference, {});
}

std::map<std::string, Eigen::VectorXd> apply_transforms(const DataTable& new_data, const TransformState& state) {
  TransformState replay = state;
  DesignMatrices empty_reference;
  std::map<std::string, Eigen::VectorXd> out;
  Builder b(new_data, replay, &empty_reference);
  for (const auto& [name, t] : state.transforms) {
    const Eigen::ArrayXd v = b.arith(t.argument);
    out[name] = apply_transform(t, v);
  }
  return out;
}

void write_design_csv(const DesignMatrices& design, const std::filesystem::path& dir) {
  const auto dump = [](const std::filesystem::path& path, const Eigen::MatrixXd& m, const std::vector<std::string>& names) {
    std::ofstream out(path);
    if (!out) throw DesignError("cannot write '" + path.string() + "'");
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << csv_escape(names[j]);
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
      out << '\n';
    }
  };
  dump(dir / "design_X.csv", design.X, design.x_names);
  dump(dir / "design_Z.csv", Eigen::MatrixXd(design.Z), design.z_names);
}

}  // namespace bglmm
