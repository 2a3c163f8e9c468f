#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "opflow/model/values.hpp"

namespace opflow::expr {

/// Placeholder bindings: `inputs.parameters.<n>`, `steps.<s>.outputs.parameters.<n>`,
/// `tasks.<t>.outputs.parameters.<n>`, `item`, `item.<f>`, `workflow.name`,
/// `workflow.id`. Lookups are exact-match.
struct Scope {
  std::map<std::string, ParameterValue> bindings;

  void bind(std::string path, ParameterValue value) {
    bindings.insert_or_assign(std::move(path), std::move(value));
  }
  const ParameterValue* find(std::string_view path) const;
};

enum class RenderMode {
  /// Substitute the value text verbatim.
  Raw,
  /// Substitute numbers and booleans verbatim and everything else as a quoted
  /// string literal, so the result can be fed to parse_expression.
  ExpressionLiteral,
};

/// Replaces every `{{path}}` in a single left-to-right pass. Substituted text
/// is never re-scanned. A `{{` whose content up to the next `}}` is not a
/// path token is left untouched. Throws Error(UnboundPlaceholder).
std::string render_placeholders(std::string_view text, const Scope& scope,
                                RenderMode mode = RenderMode::Raw);

/// Paths of all placeholders in `text`, in order of appearance.
std::vector<std::string> placeholder_paths(std::string_view text);

/// Quotes `text` as an expression string literal.
std::string quote_string(std::string_view text);

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(CmpOp op);

struct Expr {
  enum class Kind { Number, String, Bool, Not, And, Or, Compare };

  Kind kind = Kind::Bool;
  CmpOp op = CmpOp::Eq;
  /// Number text as written, or the unescaped string contents.
  std::string text;
  bool boolean = false;
  std::vector<Expr> children;

  static Expr number(std::string text) { return {Kind::Number, CmpOp::Eq, std::move(text), false, {}}; }
  static Expr string(std::string text) { return {Kind::String, CmpOp::Eq, std::move(text), false, {}}; }
  static Expr boolean_literal(bool value) { return {Kind::Bool, CmpOp::Eq, {}, value, {}}; }
  static Expr negate(Expr e);
  static Expr conjunction(Expr lhs, Expr rhs);
  static Expr disjunction(Expr lhs, Expr rhs);
  static Expr compare(CmpOp op, Expr lhs, Expr rhs);

  friend bool operator==(const Expr&, const Expr&) = default;
};

/// Grammar:
///   expr := or;  or := and ("||" and)*;  and := not ("&&" not)*
///   not  := "!" not | cmp;  cmp := term (cmpop term)?
///   term := number | quoted-string | "true" | "false" | "(" expr ")"
/// Throws ParseError carrying the byte offset.
Expr parse_expression(std::string_view text);

/// Fully parenthesized text; parse_expression(print_expression(e)) == e.
std::string print_expression(const Expr& e);

/// Evaluates to a boolean. `&&` and `||` short-circuit. Ordered comparisons
/// require numeric operands; integers compare exactly, other numbers as
/// doubles. Throws Error(TypeError).
bool eval_expression(const Expr& e);

/// render (ExpressionLiteral) -> parse -> eval.
bool evaluate_condition(std::string_view text, const Scope& scope);

}  // namespace opflow::expr
