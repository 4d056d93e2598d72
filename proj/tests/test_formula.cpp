#include "bglmm/formula.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace bglmm;

namespace {

std::vector<std::string> common_names(const TermSet& t) {
  std::vector<std::string> out;
  for (const auto& term : t.common) out.push_back(term.name());
  return out;
}

std::vector<std::string> group_names(const TermSet& t) {
  std::vector<std::string> out;
  for (const auto& g : t.group) out.push_back(g.name());
  return out;
}

using Names = std::vector<std::string>;

}  // namespace

TEST_CASE("parse: response, leaves and operators") {
  const auto ast = parse("y ~ x");
  CHECK(ast.response.name == "y");
  CHECK_FALSE(ast.response.level.has_value());
  CHECK(ast.rhs.kind == AstNode::Kind::Variable);
  CHECK(ast.rhs.text == "x");

  const auto star = parse("y ~ a*b");
  CHECK(star.rhs.kind == AstNode::Kind::Binary);
  CHECK(star.rhs.text == "*");
  REQUIRE(star.rhs.children.size() == 2);
  CHECK(star.rhs.children[0].text == "a");
  CHECK(star.rhs.children[1].text == "b");

  const auto tick = parse("resp ~ `My question?`");
  CHECK(tick.rhs.kind == AstNode::Kind::Variable);
  CHECK(tick.rhs.text == "My question?");
}

TEST_CASE("parse: response levels and prop") {
  const auto a = parse("vote[clinton] ~ party_id");
  CHECK(a.response.name == "vote");
  CHECK(a.response.level == std::optional<std::string>("clinton"));

  const auto b = parse("vote['hillary clinton'] ~ x");
  CHECK(b.response.level == std::optional<std::string>("hillary clinton"));

  const auto c = parse("prop(s, n) ~ x");
  CHECK(c.response.is_prop());
  CHECK(*c.response.successes == "s");
  CHECK(*c.response.trials == "n");
}

TEST_CASE("parse: precedence") {
  // `:` binds tighter than `*`, which binds tighter than `+`.
  const auto ast = parse("y ~ a + b*c:d");
  REQUIRE(ast.rhs.text == "+");
  const auto& rhs = ast.rhs.children[1];
  CHECK(rhs.text == "*");
  CHECK(rhs.children[1].text == ":");
  // `**` binds tighter than `:`.
  const auto pow = parse("y ~ a:b**2");
  CHECK(pow.rhs.text == ":");
  CHECK(pow.rhs.children[1].text == "**");
  // `|` binds loosest inside parentheses.
  const auto grp = parse("y ~ (x + z | g)");
  const AstNode* node = &grp.rhs;
  while (node->kind == AstNode::Kind::Paren) node = &node->children[0];
  CHECK(node->text == "|");
}

TEST_CASE("parse: errors") {
  CHECK_THROWS_AS(parse("y ~ `x"), LexError);
  CHECK_THROWS_AS(parse("y ~ {x + z"), LexError);
  CHECK_THROWS_AS(parse("~ x"), ParseError);
  CHECK_THROWS_AS(parse("y ~ x ~ z"), ParseError);
  CHECK_THROWS_AS(parse("y"), ParseError);
  CHECK_THROWS_AS(parse("y | g ~ x"), FormulaError);
  CHECK_THROWS_AS(parse("y ~ x + 3"), FormulaError);
  CHECK_THROWS_AS(parse(""), FormulaError);
}

TEST_CASE("resolve: operator identities") {
  CHECK(parse_terms("y ~ a*b") == parse_terms("y ~ a + b + a:b"));
  CHECK(parse_terms("y ~ a/(b+c)") == parse_terms("y ~ a + a:b + a:c"));
  CHECK(parse_terms("y ~ (a+b)/c") == parse_terms("y ~ a + b + a:b:c"));
  CHECK(parse_terms("y ~ (a+b)**2") == parse_terms("y ~ a + b + a:b"));
  CHECK(parse_terms("y ~ a + a") == parse_terms("y ~ a"));
  CHECK(parse_terms("y ~ x + w - x") == parse_terms("y ~ w"));
  CHECK(parse_terms("y ~ w - x + x") == parse_terms("y ~ w + x"));
  CHECK(parse_terms("y ~ (x | g + h)") == parse_terms("y ~ (x|g) + (x|h)"));
  CHECK(parse_terms("y ~ (a+b)+c") == parse_terms("y ~ a+b+c"));
  CHECK(parse_terms("y ~ b:a") == parse_terms("y ~ a:b"));
}

TEST_CASE("resolve: explicit term lists") {
  CHECK(common_names(parse_terms("y ~ (a+b)**2")) == Names{"a", "b", "a:b"});
  CHECK(common_names(parse_terms("y ~ (a+b+c)**2")) == Names{"a", "b", "c", "a:b", "a:c", "b:c"});
  CHECK(common_names(parse_terms("y ~ x + w - x")) == Names{"w"});
  CHECK(common_names(parse_terms("y ~ a**3")) == Names{"a"});

  const auto g = parse_terms("value ~ condition + (condition|study + stimulus)");
  CHECK(common_names(g) == Names{"condition"});
  CHECK(group_names(g) == Names{"condition|study", "condition|stimulus"});

  const auto none = parse_terms("y ~ 0 + x");
  CHECK_FALSE(none.has_intercept);
  CHECK(common_names(none) == Names{"x"});
  CHECK_FALSE(parse_terms("y ~ x - 1").has_intercept);
  CHECK(parse_terms("y ~ x").has_intercept);
}

TEST_CASE("resolve: group terms") {
  const auto t = parse_terms("y ~ x + (1|g) + (0 + x|h)");
  REQUIRE(t.group.size() == 2);
  CHECK(t.group[0].has_intercept);
  CHECK(t.group[0].expr.empty());
  CHECK(t.group[0].factor == "g");
  CHECK_FALSE(t.group[1].has_intercept);
  REQUIRE(t.group[1].expr.size() == 1);
  CHECK(t.group[1].expr[0].name() == "x");

  CHECK_THROWS_AS(parse_terms("y ~ (x | g:h)"), FormulaError);
  CHECK_THROWS_AS(parse_terms("y ~ (x | {g + 1})"), FormulaError);
  CHECK_THROWS_AS(parse_terms("y ~ (a+b)**x"), FormulaError);
  CHECK_THROWS_AS(parse_terms("y ~ (a+b)**0"), FormulaError);
}

TEST_CASE("resolve: calls and braces") {
  const auto t = parse_terms("y ~ scale(age) + center(x) + {x + z}");
  CHECK(common_names(t) == Names{"scale(age)", "center(x)", "{x + z}"});
  CHECK(t.common[0].factors[0].kind == Factor::Kind::Call);
  CHECK(t.common[2].factors[0].kind == Factor::Kind::Brace);
  const auto vars = t.variables();
  CHECK(std::find(vars.begin(), vars.end(), "age") != vars.end());
  CHECK(std::find(vars.begin(), vars.end(), "z") != vars.end());
  CHECK_THROWS_AS(parse_terms("y ~ exp(x)"), FormulaError);
}

TEST_CASE("resolve: ordering is by interaction order then first appearance") {
  CHECK(common_names(parse_terms("y ~ a:b + c + a")) == Names{"c", "a", "a:b"});
}

TEST_CASE("property: set laws hold for random term pairs") {
  const std::vector<std::string> vars{"a", "b", "c", "d", "e"};
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pick(0, vars.size() - 1);
  for (int rep = 0; rep < 50; ++rep) {
    const std::string a = vars[pick(rng)];
    std::string b = vars[pick(rng)];
    if (b == a) b = a == "a" ? "b" : "a";
    const std::string c = "f";
    CHECK(parse_terms("y ~ " + a + "+" + a) == parse_terms("y ~ " + a));
    CHECK(parse_terms("y ~ " + a + "*" + b) == parse_terms("y ~ " + a + "+" + b + "+" + a + ":" + b));
    CHECK(parse_terms("y ~ " + a + "/(" + b + "+" + c + ")") ==
          parse_terms("y ~ " + a + "+" + a + ":" + b + "+" + a + ":" + c));
    CHECK(parse_terms("y ~ (" + a + "+" + b + ")/" + c) ==
          parse_terms("y ~ " + a + "+" + b + "+" + a + ":" + b + ":" + c));
    CHECK(parse_terms("y ~ " + a + ":" + b) == parse_terms("y ~ " + b + ":" + a));
    // Resolving twice is stable.
    const std::string f = "y ~ (" + a + "+" + b + ")**2 + (" + a + "|g)";
    CHECK(parse_terms(f) == parse_terms(f));
  }
}
