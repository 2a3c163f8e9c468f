#include "opflow/expr/expression.hpp"

#include <cstdlib>

#include "opflow/error.hpp"

namespace opflow::expr {

std::string_view to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "==";
}

Expr Expr::negate(Expr e) {
  Expr out{Kind::Not, CmpOp::Eq, {}, false, {}};
  out.children.push_back(std::move(e));
  return out;
}

Expr Expr::conjunction(Expr lhs, Expr rhs) {
  Expr out{Kind::And, CmpOp::Eq, {}, false, {}};
  out.children.push_back(std::move(lhs));
  out.children.push_back(std::move(rhs));
  return out;
}

Expr Expr::disjunction(Expr lhs, Expr rhs) {
  Expr out{Kind::Or, CmpOp::Eq, {}, false, {}};
  out.children.push_back(std::move(lhs));
  out.children.push_back(std::move(rhs));
  return out;
}

Expr Expr::compare(CmpOp op, Expr lhs, Expr rhs) {
  Expr out{Kind::Compare, op, {}, false, {}};
  out.children.push_back(std::move(lhs));
  out.children.push_back(std::move(rhs));
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expr parse() {
    skip_ws();
    if (pos_ == src_.size()) throw ParseError(pos_, "empty expression");
    Expr e = parse_or();
    skip_ws();
    if (pos_ != src_.size()) throw ParseError(pos_, "unexpected trailing input");
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() &&
           (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(std::string_view token) {
    skip_ws();
    if (src_.compare(pos_, token.size(), token) == 0) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  Expr parse_or() {
    Expr lhs = parse_and();
    while (accept("||")) lhs = Expr::disjunction(std::move(lhs), parse_and());
    return lhs;
  }

  Expr parse_and() {
    Expr lhs = parse_not();
    while (accept("&&")) lhs = Expr::conjunction(std::move(lhs), parse_not());
    return lhs;
  }

  Expr parse_not() {
    skip_ws();
    // "!=" never starts an operand, so a lone '!' here is negation.
    if (pos_ < src_.size() && src_[pos_] == '!' && src_.compare(pos_, 2, "!=") != 0) {
      ++pos_;
      return Expr::negate(parse_not());
    }
    return parse_cmp();
  }

  Expr parse_cmp() {
    Expr lhs = parse_term();
    skip_ws();
    static constexpr std::pair<std::string_view, CmpOp> kOps[] = {
        {"==", CmpOp::Eq}, {"!=", CmpOp::Ne}, {"<=", CmpOp::Le},
        {">=", CmpOp::Ge}, {"<", CmpOp::Lt},  {">", CmpOp::Gt},
    };
    for (const auto& [token, op] : kOps) {
      if (src_.compare(pos_, token.size(), token) == 0) {
        pos_ += token.size();
        return Expr::compare(op, std::move(lhs), parse_term());
      }
    }
    return lhs;
  }

  Expr parse_term() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError(pos_, "expected a term");
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr inner = parse_or();
      skip_ws();
      if (pos_ >= src_.size() || src_[pos_] != ')') throw ParseError(pos_, "expected ')'");
      ++pos_;
      return inner;
    }
    if (c == '\'' || c == '"') return parse_string(c);
    if (c == '-' || (c >= '0' && c <= '9')) return parse_number();
    if (keyword("true")) return Expr::boolean_literal(true);
    if (keyword("false")) return Expr::boolean_literal(false);
    throw ParseError(pos_, std::string("unexpected character '") + c + "'");
  }

  bool keyword(std::string_view word) {
    if (src_.compare(pos_, word.size(), word) != 0) return false;
    std::size_t next = pos_ + word.size();
    if (next < src_.size()) {
      char n = src_[next];
      if ((n >= 'a' && n <= 'z') || (n >= 'A' && n <= 'Z') || (n >= '0' && n <= '9') || n == '_') {
        return false;
      }
    }
    pos_ = next;
    return true;
  }

  Expr parse_string(char quote) {
    std::size_t start = pos_;
    ++pos_;
    std::string text;
    while (pos_ < src_.size()) {
      char c = src_[pos_++];
      if (c == quote) return Expr::string(std::move(text));
      if (c == '\\') {
        if (pos_ >= src_.size()) break;
        text.push_back(src_[pos_++]);
      } else {
        text.push_back(c);
      }
    }
    throw ParseError(start, "unterminated string literal");
  }

  Expr parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_, ++n;
      return n;
    };
    if (src_[pos_] == '-') ++pos_;
    if (digits() == 0) throw ParseError(pos_, "expected digits");
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      if (digits() == 0) throw ParseError(pos_, "expected digits after '.'");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw ParseError(pos_, "expected exponent digits");
    }
    return Expr::number(std::string(src_.substr(start, pos_ - start)));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

struct Val {
  enum class Kind { Bool, Number, String } kind;
  bool boolean = false;
  std::string text;
};

bool is_integer_text(std::string_view s) {
  if (!s.empty() && s.front() == '-') s.remove_prefix(1);
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

/// Three-way compare of two integer texts of arbitrary length.
int compare_integers(std::string_view a, std::string_view b) {
  bool neg_a = !a.empty() && a.front() == '-';
  bool neg_b = !b.empty() && b.front() == '-';
  if (neg_a) a.remove_prefix(1);
  if (neg_b) b.remove_prefix(1);
  auto strip = [](std::string_view s) {
    while (s.size() > 1 && s.front() == '0') s.remove_prefix(1);
    return s;
  };
  a = strip(a);
  b = strip(b);
  if (a == "0") neg_a = false;
  if (b == "0") neg_b = false;
  if (neg_a != neg_b) return neg_a ? -1 : 1;
  int mag = 0;
  if (a.size() != b.size()) {
    mag = a.size() < b.size() ? -1 : 1;
  } else {
    int c = a.compare(b);
    mag = c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  return neg_a ? -mag : mag;
}

int compare_numbers(const std::string& a, const std::string& b) {
  if (is_integer_text(a) && is_integer_text(b)) return compare_integers(a, b);
  double x = std::strtod(a.c_str(), nullptr);
  double y = std::strtod(b.c_str(), nullptr);
  return x < y ? -1 : (x > y ? 1 : 0);
}

const char* kind_name(Val::Kind k) {
  switch (k) {
    case Val::Kind::Bool: return "bool";
    case Val::Kind::Number: return "number";
    case Val::Kind::String: return "string";
  }
  return "?";
}

Val eval(const Expr& e);

bool eval_bool(const Expr& e, const char* context) {
  Val v = eval(e);
  if (v.kind != Val::Kind::Bool) {
    throw Error(ErrorCode::TypeError,
                std::string(context) + " expects bool, got " + kind_name(v.kind));
  }
  return v.boolean;
}

Val eval(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Number: return {Val::Kind::Number, false, e.text};
    case Expr::Kind::String: return {Val::Kind::String, false, e.text};
    case Expr::Kind::Bool: return {Val::Kind::Bool, e.boolean, {}};
    case Expr::Kind::Not: return {Val::Kind::Bool, !eval_bool(e.children[0], "'!'"), {}};
    case Expr::Kind::And:
      if (!eval_bool(e.children[0], "'&&'")) return {Val::Kind::Bool, false, {}};
      return {Val::Kind::Bool, eval_bool(e.children[1], "'&&'"), {}};
    case Expr::Kind::Or:
      if (eval_bool(e.children[0], "'||'")) return {Val::Kind::Bool, true, {}};
      return {Val::Kind::Bool, eval_bool(e.children[1], "'||'"), {}};
    case Expr::Kind::Compare: {
      Val lhs = eval(e.children[0]);
      Val rhs = eval(e.children[1]);
      if (e.op == CmpOp::Eq || e.op == CmpOp::Ne) {
        bool equal = false;
        if (lhs.kind == rhs.kind) {
          switch (lhs.kind) {
            case Val::Kind::Bool: equal = lhs.boolean == rhs.boolean; break;
            case Val::Kind::String: equal = lhs.text == rhs.text; break;
            case Val::Kind::Number: equal = compare_numbers(lhs.text, rhs.text) == 0; break;
          }
        }
        return {Val::Kind::Bool, e.op == CmpOp::Eq ? equal : !equal, {}};
      }
      if (lhs.kind != Val::Kind::Number || rhs.kind != Val::Kind::Number) {
        throw Error(ErrorCode::TypeError, std::string("'") + std::string(to_string(e.op)) +
                                              "' needs numbers, got " + kind_name(lhs.kind) +
                                              " and " + kind_name(rhs.kind));
      }
      int c = compare_numbers(lhs.text, rhs.text);
      bool result = false;
      switch (e.op) {
        case CmpOp::Lt: result = c < 0; break;
        case CmpOp::Le: result = c <= 0; break;
        case CmpOp::Gt: result = c > 0; break;
        case CmpOp::Ge: result = c >= 0; break;
        default: break;
      }
      return {Val::Kind::Bool, result, {}};
    }
  }
  throw Error(ErrorCode::TypeError, "malformed expression");
}

}  // namespace

Expr parse_expression(std::string_view text) { return Parser(text).parse(); }

std::string print_expression(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Number: return e.text;
    case Expr::Kind::String: return quote_string(e.text);
    case Expr::Kind::Bool: return e.boolean ? "true" : "false";
    case Expr::Kind::Not: return "!(" + print_expression(e.children[0]) + ")";
    case Expr::Kind::And:
      return "(" + print_expression(e.children[0]) + " && " + print_expression(e.children[1]) + ")";
    case Expr::Kind::Or:
      return "(" + print_expression(e.children[0]) + " || " + print_expression(e.children[1]) + ")";
    case Expr::Kind::Compare:
      return "(" + print_expression(e.children[0]) + " " + std::string(to_string(e.op)) + " " +
             print_expression(e.children[1]) + ")";
  }
  return {};
}

bool eval_expression(const Expr& e) { return eval_bool(e, "condition"); }

bool evaluate_condition(std::string_view text, const Scope& scope) {
  return eval_expression(parse_expression(render_placeholders(text, scope, RenderMode::ExpressionLiteral)));
}

}  // namespace opflow::expr
