#include "bglmm/formula.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace bglmm {

namespace {

struct Token {
  enum class Kind { Ident, Quoted, Number, Op, LParen, RParen, Comma, Tilde, Brace, Bracket, End };
  Kind kind = Kind::End;
  std::string text;
  std::vector<Token> inner;  // Brace body
  std::size_t pos = 0;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    auto toks = lex_until('\0');
    toks.push_back(Token{Token::Kind::End, "", {}, src_.size()});
    return toks;
  }

private:
  std::vector<Token> lex_until(char closer) {
    std::vector<Token> out;
    while (true) {
      skip_space();
      if (i_ >= src_.size()) {
        if (closer != '\0') throw LexError("unterminated '{' in formula");
        return out;
      }
      const char c = src_[i_];
      const std::size_t start = i_;
      if (c == closer) {
        ++i_;
        return out;
      }
      if (is_ident_start(c)) {
        while (i_ < src_.size() && is_ident_char(src_[i_])) ++i_;
        out.push_back({Token::Kind::Ident, std::string(src_.substr(start, i_ - start)), {}, start});
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        while (i_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[i_])) || src_[i_] == '.')) ++i_;
        if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
          ++i_;
          if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) ++i_;
          while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_;
        }
        out.push_back({Token::Kind::Number, std::string(src_.substr(start, i_ - start)), {}, start});
      } else if (c == '`') {
        const auto end = src_.find('`', i_ + 1);
        if (end == std::string_view::npos) throw LexError("unterminated backtick in formula");
        out.push_back({Token::Kind::Quoted, std::string(src_.substr(i_ + 1, end - i_ - 1)), {}, start});
        i_ = end + 1;
      } else if (c == '{') {
        ++i_;
        Token t{Token::Kind::Brace, "", {}, start};
        t.inner = lex_until('}');
        t.inner.push_back(Token{Token::Kind::End, "", {}, i_});
        out.push_back(std::move(t));
      } else if (c == '[') {
        out.push_back(lex_bracket());
      } else if (c == '*' && i_ + 1 < src_.size() && src_[i_ + 1] == '*') {
        i_ += 2;
        out.push_back({Token::Kind::Op, "**", {}, start});
      } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == ':' || c == '|') {
        ++i_;
        out.push_back({Token::Kind::Op, std::string(1, c), {}, start});
      } else if (c == '(') {
        ++i_;
        out.push_back({Token::Kind::LParen, "(", {}, start});
      } else if (c == ')') {
        ++i_;
        out.push_back({Token::Kind::RParen, ")", {}, start});
      } else if (c == ',') {
        ++i_;
        out.push_back({Token::Kind::Comma, ",", {}, start});
      } else if (c == '~') {
        ++i_;
        out.push_back({Token::Kind::Tilde, "~", {}, start});
      } else {
        throw LexError("unexpected character '" + std::string(1, c) + "' at offset " + std::to_string(start));
      }
    }
  }

  Token lex_bracket() {
    const std::size_t start = i_++;
    skip_space();
    std::string level;
    if (i_ < src_.size() && (src_[i_] == '\'' || src_[i_] == '"')) {
      const char q = src_[i_];
      const auto end = src_.find(q, i_ + 1);
      if (end == std::string_view::npos) throw LexError("unterminated quote in response level");
      level = std::string(src_.substr(i_ + 1, end - i_ - 1));
      i_ = end + 1;
      skip_space();
      if (i_ >= src_.size() || src_[i_] != ']') throw LexError("unterminated '[' in formula");
    } else {
      const auto end = src_.find(']', i_);
      if (end == std::string_view::npos) throw LexError("unterminated '[' in formula");
      level = std::string(src_.substr(i_, end - i_));
      while (!level.empty() && std::isspace(static_cast<unsigned char>(level.back()))) level.pop_back();
      i_ = end;
    }
    ++i_;
    return {Token::Kind::Bracket, level, {}, start};
  }

  void skip_space() {
    while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
  }

  std::string_view src_;
  std::size_t i_ = 0;
};

int precedence(const std::string& op) {
  if (op == "|") return 1;
  if (op == "+" || op == "-") return 2;
  if (op == "*" || op == "/") return 3;
  if (op == ":") return 4;
  if (op == "**") return 5;
  return 0;
}

AstNode make_binary(std::string op, AstNode lhs, AstNode rhs) {
  AstNode n{AstNode::Kind::Binary, std::move(op), {}};
  n.children.push_back(std::move(lhs));
  n.children.push_back(std::move(rhs));
  return n;
}

class Parser {
public:
  explicit Parser(const std::vector<Token>& toks) : toks_(toks) {}

  const Token& peek() const { return toks_[pos_]; }
  const Token& take() { return toks_[pos_++]; }
  bool at_end() const { return peek().kind == Token::Kind::End; }

  void expect_end(const char* what) {
    if (!at_end()) throw ParseError(std::string("unexpected '") + peek().text + "' in " + what);
  }

  AstNode formula_expr(int min_prec) {
    AstNode lhs = operand(false);
    while (peek().kind == Token::Kind::Op && precedence(peek().text) >= min_prec) {
      const std::string op = take().text;
      AstNode rhs = op == "**" ? operand(true) : formula_expr(precedence(op) + 1);
      lhs = make_binary(op, std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

  // Arithmetic inside braces and call arguments: + - * / ** and unary minus.
  AstNode arith(int min_prec = 1) {
    AstNode lhs = arith_unary();
    while (peek().kind == Token::Kind::Op) {
      const std::string& op = peek().text;
      int prec = 0;
      if (op == "+" || op == "-") prec = 1;
      else if (op == "*" || op == "/") prec = 2;
      else if (op == "**") prec = 3;
      else throw ParseError("operator '" + op + "' is not arithmetic");
      if (prec < min_prec) break;
      take();
      // ** is right associative
      AstNode rhs = arith(prec == 3 ? prec : prec + 1);
      lhs = make_binary(op == "**" ? "**" : std::string(op), std::move(lhs), std::move(rhs));
    }
    return lhs;
  }

private:
  AstNode arith_unary() {
    const Token& t = peek();
    if (t.kind == Token::Kind::Op && t.text == "-") {
      take();
      AstNode n{AstNode::Kind::Negate, "-", {}};
      n.children.push_back(arith_unary());
      return n;
    }
    if (t.kind == Token::Kind::Ident || t.kind == Token::Kind::Quoted) {
      take();
      if (t.kind == Token::Kind::Ident && peek().kind == Token::Kind::LParen)
        throw ParseError("function calls are not allowed inside arithmetic: '" + t.text + "'");
      return AstNode{AstNode::Kind::Variable, t.text, {}};
    }
    if (t.kind == Token::Kind::Number) {
      take();
      return AstNode{AstNode::Kind::Number, t.text, {}};
    }
    if (t.kind == Token::Kind::LParen) {
      take();
      AstNode n{AstNode::Kind::Paren, "()", {}};
      n.children.push_back(arith());
      if (take().kind != Token::Kind::RParen) throw ParseError("expected ')' in arithmetic expression");
      return n;
    }
    throw ParseError("unexpected '" + t.text + "' in arithmetic expression");
  }

  AstNode operand(bool allow_number) {
    const Token& t = peek();
    switch (t.kind) {
      case Token::Kind::Op:
        if (t.text == "-") {
          take();
          AstNode n{AstNode::Kind::Negate, "-", {}};
          n.children.push_back(operand(false));
          return n;
        }
        throw ParseError("unexpected operator '" + t.text + "'");
      case Token::Kind::Quoted:
        take();
        return AstNode{AstNode::Kind::Variable, t.text, {}};
      case Token::Kind::Ident: {
        take();
        if (peek().kind != Token::Kind::LParen) return AstNode{AstNode::Kind::Variable, t.text, {}};
        return call(t.text);
      }
      case Token::Kind::Number: {
        take();
        if (allow_number) return AstNode{AstNode::Kind::Number, t.text, {}};
        if (t.text == "0" || t.text == "1") return AstNode{AstNode::Kind::Literal, t.text, {}};
        throw ParseError("numeric literal '" + t.text + "' is not a valid term");
      }
      case Token::Kind::LParen: {
        take();
        AstNode n{AstNode::Kind::Paren, "()", {}};
        n.children.push_back(formula_expr(1));
        if (take().kind != Token::Kind::RParen) throw ParseError("expected ')'");
        return n;
      }
      case Token::Kind::Brace: {
        take();
        Parser sub(t.inner);
        if (sub.at_end()) throw ParseError("empty '{}' block");
        AstNode n{AstNode::Kind::Brace, "{}", {}};
        n.children.push_back(sub.arith());
        sub.expect_end("'{}' block");
        return n;
      }
      case Token::Kind::Bracket:
        throw ParseError("level selection '[...]' is only valid on the response");
      case Token::Kind::Tilde:
        throw ParseError("formula contains more than one '~'");
      default:
        break;
    }
    throw ParseError(t.kind == Token::Kind::End ? "unexpected end of formula"
                                                : "unexpected '" + t.text + "'");
  }

  AstNode call(const std::string& name) {
    take();  // (
    std::vector<AstNode> args;
    if (peek().kind != Token::Kind::RParen) {
      args.push_back(arith());
      while (peek().kind == Token::Kind::Comma) {
        take();
        args.push_back(arith());
      }
    }
    if (take().kind != Token::Kind::RParen) throw ParseError("expected ')' after arguments of " + name + "()");
    if (name == "I") {
      if (args.size() != 1) throw ParseError("I() takes exactly one argument");
      AstNode n{AstNode::Kind::Brace, "{}", {}};
      n.children.push_back(std::move(args.front()));
      return n;
    }
    if (name == "scale" || name == "center") {
      if (args.size() != 1) throw ParseError(name + "() takes exactly one argument");
      return AstNode{AstNode::Kind::Call, name, std::move(args)};
    }
    if (name == "prop") throw ParseError("prop() is only valid as the response");
    throw ParseError("unknown function '" + name + "'");
  }

  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;
};

ResponseNode parse_response(const std::vector<Token>& toks) {
  if (toks.size() == 1) throw ParseError("formula has no response before '~'");
  for (const auto& t : toks)
    if (t.kind == Token::Kind::Op && t.text == "|")
      throw ParseError("'|' is not allowed on the left-hand side of a formula");

  ResponseNode r;
  std::size_t i = 0;
  const auto name_tok = [&](const Token& t) {
    return t.kind == Token::Kind::Ident || t.kind == Token::Kind::Quoted;
  };
  if (!name_tok(toks[i])) throw ParseError("invalid response '" + toks[i].text + "'");
  r.name = toks[i++].text;
  if (toks[i].kind == Token::Kind::LParen && toks[0].kind == Token::Kind::Ident) {
    if (r.name != "prop") throw ParseError("unsupported response function '" + r.name + "'");
    ++i;
    if (!name_tok(toks[i])) throw ParseError("prop() expects two variable names");
    r.successes = toks[i++].text;
    if (toks[i++].kind != Token::Kind::Comma) throw ParseError("prop() expects two variable names");
    if (!name_tok(toks[i])) throw ParseError("prop() expects two variable names");
    r.trials = toks[i++].text;
    if (toks[i++].kind != Token::Kind::RParen) throw ParseError("expected ')' closing prop()");
    r.name = "prop(" + *r.successes + ", " + *r.trials + ")";
  } else if (toks[i].kind == Token::Kind::Bracket) {
    if (toks[i].text.empty()) throw ParseError("empty response level");
    r.level = toks[i++].text;
  }
  if (toks[i].kind != Token::Kind::End) throw ParseError("unexpected '" + toks[i].text + "' in response");
  return r;
}

// ---------------------------------------------------------------------------
// Resolution

struct Value {
  enum class Intercept { Default, Added, Removed };
  Intercept intercept = Intercept::Default;
  std::vector<Term> terms;
  std::vector<GroupTerm> groups;
};

template <typename T>
void add_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

Value set_union(Value a, const Value& b) {
  for (const auto& t : b.terms) add_unique(a.terms, t);
  for (const auto& g : b.groups) add_unique(a.groups, g);
  if (b.intercept != Value::Intercept::Default) a.intercept = b.intercept;
  return a;
}

Value set_difference(Value a, const Value& b) {
  std::erase_if(a.terms, [&](const Term& t) { return std::find(b.terms.begin(), b.terms.end(), t) != b.terms.end(); });
  std::erase_if(a.groups, [&](const GroupTerm& g) { return std::find(b.groups.begin(), b.groups.end(), g) != b.groups.end(); });
  if (b.intercept == Value::Intercept::Added) a.intercept = Value::Intercept::Removed;
  else if (b.intercept == Value::Intercept::Removed) a.intercept = Value::Intercept::Added;
  return a;
}

std::vector<Term> with_intercept(const Value& v) {
  if (!v.groups.empty()) throw ResolveError("group-specific terms cannot be interacted");
  std::vector<Term> out;
  if (v.intercept == Value::Intercept::Added) out.emplace_back();
  if (v.intercept == Value::Intercept::Removed && v.terms.empty())
    throw ResolveError("'0' cannot be used in an interaction");
  out.insert(out.end(), v.terms.begin(), v.terms.end());
  return out;
}

Term merge(const Term& a, const Term& b) {
  Term t;
  t.factors = a.factors;
  t.factors.insert(t.factors.end(), b.factors.begin(), b.factors.end());
  std::sort(t.factors.begin(), t.factors.end());
  t.factors.erase(std::unique(t.factors.begin(), t.factors.end()), t.factors.end());
  return t;
}

Value interact(const Value& a, const Value& b) {
  Value out;
  for (const auto& ta : with_intercept(a)) {
    for (const auto& tb : with_intercept(b)) {
      Term t = merge(ta, tb);
      if (t.is_intercept()) out.intercept = Value::Intercept::Added;
      else add_unique(out.terms, t);
    }
  }
  return out;
}

Value collapse(const Value& a) {
  Term all;
  for (const auto& t : with_intercept(a)) all = merge(all, t);
  Value out;
  if (all.is_intercept()) out.intercept = Value::Intercept::Added;
  else out.terms.push_back(all);
  return out;
}

bool contains_op(const AstNode& n, std::string_view op) {
  if (n.kind == AstNode::Kind::Binary && n.text == op) return true;
  if (op == "-" && n.kind == AstNode::Kind::Negate) return true;
  if (n.kind == AstNode::Kind::Brace || n.kind == AstNode::Kind::Call) return false;
  return std::any_of(n.children.begin(), n.children.end(), [&](const AstNode& c) { return contains_op(c, op); });
}

void group_factors(const AstNode& n, std::vector<std::string>& out) {
  if (n.kind == AstNode::Kind::Variable) {
    add_unique(out, n.text);
  } else if (n.kind == AstNode::Kind::Paren) {
    group_factors(n.children[0], out);
  } else if (n.kind == AstNode::Kind::Binary && n.text == "+") {
    group_factors(n.children[0], out);
    group_factors(n.children[1], out);
  } else {
    throw ResolveError("right-hand side of '|' must be a variable or a sum of variables, got '" +
                       to_string(n) + "'");
  }
}

Value eval(const AstNode& n);

Value eval_group(const AstNode& lhs, const AstNode& rhs) {
  if (contains_op(lhs, "|") || contains_op(rhs, "|")) throw ResolveError("'|' cannot be nested");
  if (contains_op(lhs, "-"))
    throw ResolveError("'-' is not supported on the left of '|'; use '0 +' to drop the intercept");
  std::vector<std::string> factors;
  group_factors(rhs, factors);
  const Value expr = eval(lhs);
  if (!expr.groups.empty()) throw ResolveError("'|' cannot be nested");
  Value out;
  for (const auto& f : factors) {
    GroupTerm g;
    g.has_intercept = expr.intercept != Value::Intercept::Removed;
    g.expr = expr.terms;
    g.factor = f;
    if (!g.has_intercept && g.expr.empty()) throw ResolveError("group-specific term '" + g.name() + "' is empty");
    add_unique(out.groups, g);
  }
  return out;
}

Value eval(const AstNode& n) {
  using K = AstNode::Kind;
  switch (n.kind) {
    case K::Variable: {
      Value v;
      v.terms.push_back(Term{{Factor{Factor::Kind::Variable, n.text, {}, {}}}});
      return v;
    }
    case K::Call: {
      Value v;
      v.terms.push_back(Term{{Factor{Factor::Kind::Call, to_string(n), n.text, n.children}}});
      return v;
    }
    case K::Brace: {
      Value v;
      v.terms.push_back(Term{{Factor{Factor::Kind::Brace, to_string(n), {}, n.children}}});
      return v;
    }
    case K::Literal: {
      Value v;
      v.intercept = n.text == "1" ? Value::Intercept::Added : Value::Intercept::Removed;
      return v;
    }
    case K::Number:
      throw ResolveError("numeric literal '" + n.text + "' is not a valid term");
    case K::Paren:
      return eval(n.children[0]);
    case K::Negate: {
      Value v = eval(n.children[0]);
      if (v.intercept == Value::Intercept::Added && v.terms.empty() && v.groups.empty()) {
        v.intercept = Value::Intercept::Removed;
        return v;
      }
      throw ResolveError("unary '-' only applies to the intercept");
    }
    case K::Binary:
      break;
  }
  const std::string& op = n.text;
  if (op == "|") return eval_group(n.children[0], n.children[1]);
  const Value a = eval(n.children[0]);
  if (op == "**") {
    const AstNode& rhs = n.children[1];
    if (rhs.kind != K::Number && rhs.kind != K::Literal)
      throw ResolveError("right operand of '**' must be a positive integer");
    const double p = std::stod(rhs.text);
    if (p < 1 || std::floor(p) != p || p > 64) throw ResolveError("right operand of '**' must be a positive integer");
    Value out = a;
    for (int k = 1; k < static_cast<int>(p); ++k) out = set_union(out, interact(out, a));
    return out;
  }
  const Value b = eval(n.children[1]);
  if (op == "+") return set_union(a, b);
  if (op == "-") return set_difference(a, b);
  if (op == ":") return interact(a, b);
  if (op == "*") return set_union(set_union(a, b), interact(a, b));
  if (op == "/") return set_union(a, interact(collapse(a), b));
  throw ResolveError("unknown operator '" + op + "'");
}

}  // namespace

std::vector<std::string> ResponseNode::variables() const {
  if (is_prop()) return {*successes, *trials};
  return {name};
}

Term::Kind Term::kind() const {
  if (factors.empty()) return Kind::Intercept;
  if (factors.size() > 1) return Kind::Interaction;
  return factors.front().kind == Factor::Kind::Variable ? Kind::Variable : Kind::Call;
}

std::string Term::name() const {
  if (factors.empty()) return "Intercept";
  std::string s;
  for (const auto& f : factors) {
    if (!s.empty()) s += ':';
    s += f.name;
  }
  return s;
}

std::string GroupTerm::name() const {
  std::string lhs = has_intercept ? "1" : "0";
  for (const auto& t : expr) lhs += " + " + t.name();
  if (has_intercept && expr.size() == 1) lhs = expr.front().name();
  return lhs + "|" + factor;
}

bool GroupTerm::operator==(const GroupTerm& o) const {
  if (factor != o.factor || has_intercept != o.has_intercept || expr.size() != o.expr.size()) return false;
  return std::all_of(expr.begin(), expr.end(),
                     [&](const Term& t) { return std::find(o.expr.begin(), o.expr.end(), t) != o.expr.end(); });
}

std::vector<std::string> TermSet::variables() const {
  std::vector<std::string> out;
  for (const auto& v : response.variables()) add_unique(out, v);
  const auto from_terms = [&](const std::vector<Term>& terms) {
    for (const auto& t : terms) {
      for (const auto& f : t.factors) {
        if (f.kind == Factor::Kind::Variable) {
          add_unique(out, f.name);
        } else {
          std::vector<std::string> vars;
          for (const auto& a : f.args) collect_variables(a, vars);
          for (const auto& v : vars) add_unique(out, v);
        }
      }
    }
  };
  from_terms(common);
  for (const auto& g : group) {
    from_terms(g.expr);
    add_unique(out, g.factor);
  }
  return out;
}

FormulaAst parse(std::string_view formula) {
  const auto toks = Lexer(formula).run();
  std::size_t tilde = toks.size();
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].kind != Token::Kind::Tilde) continue;
    if (tilde != toks.size()) throw ParseError("formula contains more than one '~'");
    tilde = i;
  }
  if (tilde == toks.size()) throw ParseError("formula must contain '~'");

  std::vector<Token> lhs(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(tilde));
  lhs.push_back(Token{Token::Kind::End, "", {}, toks[tilde].pos});
  std::vector<Token> rhs(toks.begin() + static_cast<std::ptrdiff_t>(tilde) + 1, toks.end());

  FormulaAst ast;
  ast.response = parse_response(lhs);
  Parser p(rhs);
  if (p.at_end()) throw ParseError("formula has an empty right-hand side");
  ast.rhs = p.formula_expr(1);
  p.expect_end("formula");
  return ast;
}

TermSet resolve(const FormulaAst& ast) {
  const Value v = eval(ast.rhs);
  TermSet ts;
  ts.response = ast.response;
  ts.has_intercept = v.intercept != Value::Intercept::Removed;
  ts.common = v.terms;
  std::stable_sort(ts.common.begin(), ts.common.end(),
                   [](const Term& a, const Term& b) { return a.order() < b.order(); });
  ts.group = v.groups;
  if (!ts.has_intercept && ts.common.empty() && ts.group.empty())
    throw ResolveError("model has no terms");
  return ts;
}

std::string to_string(const AstNode& n) {
  using K = AstNode::Kind;
  switch (n.kind) {
    case K::Variable:
    case K::Literal:
    case K::Number:
      return n.text;
    case K::Paren:
      return "(" + to_string(n.children[0]) + ")";
    case K::Brace:
      return "{" + to_string(n.children[0]) + "}";
    case K::Negate:
      return "-" + to_string(n.children[0]);
    case K::Call: {
      std::string s = n.text + "(";
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) s += ", ";
        s += to_string(n.children[i]);
      }
      return s + ")";
    }
    case K::Binary:
      if (n.text == ":" || n.text == "**")
        return to_string(n.children[0]) + n.text + to_string(n.children[1]);
      return to_string(n.children[0]) + " " + n.text + " " + to_string(n.children[1]);
  }
  return {};
}

void collect_variables(const AstNode& n, std::vector<std::string>& out) {
  if (n.kind == AstNode::Kind::Variable) {
    add_unique(out, n.text);
    return;
  }
  for (const auto& c : n.children) collect_variables(c, out);
}

}  // namespace bglmm
