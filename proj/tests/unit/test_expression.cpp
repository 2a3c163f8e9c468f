#include <gtest/gtest.h>

#include <random>

#include "expr_oracle.hpp"
#include "opflow/error.hpp"
#include "opflow/expr/expression.hpp"

using namespace opflow;
using namespace opflow::expr;

namespace {

enum class R { T, F, TypeErr, ParseErr };

R outcome(const std::string& text) {
  try {
    return eval_expression(parse_expression(text)) ? R::T : R::F;
  } catch (const ParseError&) {
    return R::ParseErr;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TypeError) return R::TypeErr;
    throw;
  }
}

std::size_t parse_offset(const std::string& text) {
  try {
    parse_expression(text);
  } catch (const ParseError& e) {
    return e.offset();
  }
  return std::string::npos;
}

}  // namespace

TEST(Expression, Table) {
  struct Row {
    const char* text;
    R expect;
  };
  const Row rows[] = {
      {"true", R::T},
      {"false", R::F},
      {"1 == 1", R::T},
      {"1 == 1.0", R::T},
      {"-0 == 0", R::T},
      {"007 == 7", R::T},
      {"2 < 10", R::T},
      {"'2' < '10'", R::TypeErr},
      {"'a' == 'a'", R::T},
      {"'a' == \"a\"", R::T},
      {"'1' == 1", R::F},
      {"'1' != 1", R::T},
      {"true == 1", R::F},
      {"true != false", R::T},
      {"9007199254740993 > 9007199254740992", R::T},
      {"123456789012345678901234567890 > 123456789012345678901234567889", R::T},
      {"-123456789012345678901234567890 < -123456789012345678901234567889", R::T},
      {"1e3 == 1000", R::T},
      {"2.5 >= 2.5", R::T},
      {"!true", R::F},
      {"!!true", R::T},
      {"! (1 > 2)", R::T},
      {"true || false && false", R::T},
      {"(true || false) && false", R::F},
      {"false && 5", R::F},
      {"true || 'x'", R::T},
      {"true && 5", R::TypeErr},
      {"5", R::TypeErr},
      {"'s'", R::TypeErr},
      {"true < false", R::TypeErr},
      {"'it\\'s' == \"it's\"", R::T},
      {"1 != 2 && 'a' != 'b'", R::T},
      {"", R::ParseErr},
      {"1 <", R::ParseErr},
      {"(true", R::ParseErr},
      {"true)", R::ParseErr},
      {"1 < 2 < 3", R::ParseErr},
      {"'open", R::ParseErr},
      {"tru", R::ParseErr},
      {"truex", R::ParseErr},
      {"1.", R::ParseErr},
      {"1e", R::ParseErr},
      {"&& true", R::ParseErr},
      {"a == b", R::ParseErr},
      {"1 = 1", R::ParseErr},
  };
  for (const auto& row : rows) EXPECT_EQ(outcome(row.text), row.expect) << "'" << row.text << "'";
}

TEST(Expression, ParseErrorOffsets) {
  EXPECT_EQ(parse_offset("1 <"), 3u);
  EXPECT_EQ(parse_offset("(true"), 5u);
  EXPECT_EQ(parse_offset("true)"), 4u);
  EXPECT_EQ(parse_offset("  'abc"), 2u);
  EXPECT_EQ(parse_offset("1 == @"), 5u);
}

TEST(Expression, MatchesIndependentEvaluator) {
  test_support::ExprCaseGen gen(42);
  int by_outcome[3] = {0, 0, 0};
  for (int i = 0; i < 20000; ++i) {
    test_support::ExprCase c = gen.next();
    R got = outcome(c.text);
    R want = c.outcome == test_support::ExprCase::Outcome::True    ? R::T
             : c.outcome == test_support::ExprCase::Outcome::False ? R::F
                                                               : R::TypeErr;
    ASSERT_EQ(got, want) << c.text;
    ++by_outcome[static_cast<int>(c.outcome)];
  }
  for (int n : by_outcome) EXPECT_GT(n, 500);
}

TEST(Expression, PrintParseRoundTrip) {
  test_support::ExprCaseGen gen(9);
  for (int i = 0; i < 5000; ++i) {
    Expr e = parse_expression(gen.next().text);
    std::string printed = print_expression(e);
    EXPECT_EQ(parse_expression(printed), e) << printed;
    EXPECT_EQ(print_expression(parse_expression(printed)), printed);
  }
}

TEST(Render, SinglePassMatchesConcatenation) {
  std::mt19937 rng(17);
  const std::string plain = "ab c-.}\n'";
  for (int trial = 0; trial < 3000; ++trial) {
    Scope scope;
    std::string text, expect;
    int parts = static_cast<int>(rng() % 6);
    for (int k = 0; k < parts; ++k) {
      if (rng() % 2) {
        std::string chunk;
        for (int i = 0, n = static_cast<int>(rng() % 5); i < n; ++i) chunk += plain[rng() % plain.size()];
        text += chunk;
        expect += chunk;
      } else {
        std::string path = "steps.s" + std::to_string(k) + ".outputs.parameters.y";
        // values that look like placeholders must come out verbatim
        std::string value = rng() % 3 == 0 ? "{{" + path + "}}" : std::to_string(rng() % 100);
        scope.bind(path, ParameterValue::string(value));
        text += rng() % 2 ? "{{" + path + "}}" : "{{ " + path + " }}";
        expect += value;
      }
    }
    EXPECT_EQ(render_placeholders(text, scope), expect) << text;
  }
}

TEST(Render, UnboundAndMalformed) {
  Scope scope;
  scope.bind("inputs.parameters.x", ParameterValue::integer(3));
  try {
    render_placeholders("a {{inputs.parameters.y}}", scope);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnboundPlaceholder);
  }
  EXPECT_EQ(render_placeholders("{{not a path}} {{}} {{x", scope), "{{not a path}} {{}} {{x");
  EXPECT_EQ(render_placeholders("{{{inputs.parameters.x}}", scope), "{3");
  EXPECT_EQ(placeholder_paths("{{a.b}} {{ c }} {{bad path}}"), (std::vector<std::string>{"a.b", "c"}));
}

TEST(Render, ExpressionLiteralQuotesStrings) {
  Scope scope;
  scope.bind("a", ParameterValue::string("it's"));
  scope.bind("n", ParameterValue::integer(-12));
  scope.bind("b", ParameterValue::string("true"));
  scope.bind("s", ParameterValue::string("1 == 1 || true"));
  EXPECT_EQ(render_placeholders("{{a}} {{n}} {{b}}", scope, RenderMode::ExpressionLiteral), "'it\\'s' -12 true");
  EXPECT_TRUE(evaluate_condition("{{a}} == \"it's\"", scope));
  EXPECT_TRUE(evaluate_condition("{{n}} < 0 && {{b}}", scope));
  // A value never becomes operators.
  EXPECT_TRUE(evaluate_condition("{{s}} == '1 == 1 || true'", scope));
}
