#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bglmm {

class FormulaError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Unterminated backtick, brace or bracket; stray character.
class LexError : public FormulaError {
public:
  using FormulaError::FormulaError;
};

class ParseError : public FormulaError {
public:
  using FormulaError::FormulaError;
};

class ResolveError : public FormulaError {
public:
  using FormulaError::FormulaError;
};

/// Expression tree node. Arithmetic inside braces and call arguments uses the
/// same node type, with `Number` leaves and `Negate` for unary minus.
struct AstNode {
  enum class Kind { Variable, Call, Literal, Number, Brace, Paren, Binary, Negate };

  Kind kind = Kind::Variable;
  // Variable: name. Call: function name. Literal/Number: source digits.
  // Binary: operator symbol ("+", "-", "*", "/", ":", "**", "|").
  std::string text;
  std::vector<AstNode> children;

  bool operator==(const AstNode&) const = default;
};

/// Left-hand side of a formula: `y`, `vote[clinton]`, `vote['a b']`, or
/// `prop(successes, trials)`.
struct ResponseNode {
  std::string name;
  std::optional<std::string> level;
  // Populated for prop(successes, trials).
  std::optional<std::string> successes;
  std::optional<std::string> trials;

  bool is_prop() const { return successes.has_value(); }
  std::vector<std::string> variables() const;
  bool operator==(const ResponseNode&) const = default;
};

struct FormulaAst {
  ResponseNode response;
  AstNode rhs;
};

/// One factor of a term: a data column, a whitelisted call, or a brace block.
struct Factor {
  enum class Kind { Variable, Call, Brace };

  Kind kind = Kind::Variable;
  std::string name;        // canonical display name, also the identity key
  std::string function;    // Call only: scale, center
  std::vector<AstNode> args;  // Call: argument expressions. Brace: the body.

  bool operator==(const Factor& o) const { return name == o.name; }
  bool operator<(const Factor& o) const { return name < o.name; }
};

struct Term {
  enum class Kind { Intercept, Variable, Call, Interaction };

  // Sorted by name and deduplicated; empty means the intercept.
  std::vector<Factor> factors;

  Kind kind() const;
  bool is_intercept() const { return factors.empty(); }
  std::size_t order() const { return factors.size(); }
  std::string name() const;

  bool operator==(const Term& o) const { return factors == o.factors; }
};

/// `(expr | factor)` after distribution over `+` on the right.
struct GroupTerm {
  bool has_intercept = true;
  std::vector<Term> expr;   // non-intercept terms of the left-hand side
  std::string factor;

  std::string name() const;
  bool operator==(const GroupTerm& o) const;
};

struct TermSet {
  ResponseNode response;
  bool has_intercept = true;
  std::vector<Term> common;   // excludes the intercept
  std::vector<GroupTerm> group;

  /// Every data column referenced anywhere in the formula, in first-use order.
  std::vector<std::string> variables() const;
  bool operator==(const TermSet&) const = default;
};

FormulaAst parse(std::string_view formula);
TermSet resolve(const FormulaAst& ast);

inline TermSet parse_terms(std::string_view formula) { return resolve(parse(formula)); }

/// Canonical text of an expression tree, e.g. "{x + y}" or "scale(age)".
std::string to_string(const AstNode& node);

/// Column names an arithmetic expression reads from.
void collect_variables(const AstNode& node, std::vector<std::string>& out);

}  // namespace bglmm
