#pragma once

// Recursive-descent parser for the expression grammar used in system files:
//   sum        := product (('+'|'-') product)*
//   product    := unary (('*'|'/') unary)*
//   unary      := '-' unary | power
//   power      := primary ['^' ['-'] digits]
//   primary    := number | 'x'digits | identifier ['(' sum ')'] | '(' sum ')'
// Functions are sin, cos, exp, ln, plus any registered numeric functions.
// Decimal and scientific literals become exact rationals when they fit.

#include "mechlin/expr.hpp"

#include <map>
#include <string>

namespace mechlin {

using FnRegistry = std::map<std::string, std::shared_ptr<const UnivariateFn>>;

/// Parses `text`; throws ParseError (with a character offset) on malformed
/// input, an unknown function, a non-integer exponent, or trailing input.
ExprPtr parse_expr(const std::string& text);
ExprPtr parse_expr(const std::string& text, const FnRegistry& fns);

}  // namespace mechlin
