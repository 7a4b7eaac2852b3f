#pragma once

#include <string>
#include <string_view>

#include "kktsens/model.hpp"

namespace kktsens {

// Parses an arithmetic expression over the program's declared variables and
// parameters and appends it to the program's graph.
//
// Grammar (whitespace insignificant, offsets are byte positions):
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := base ['^' factor]              -- '^' is right-associative
//   base   := number | name | func '(' expr ')' | '(' expr ')' | '-' base
//
// Unary minus is part of 'base', so it binds tighter than '^': "-x^2" reads
// as (-x)^2. Exponents must reduce to a numeric constant at parse time.
// Names may contain non-ASCII UTF-8; sin, cos, tan, exp, log and sqrt are
// reserved for calls. Undeclared names raise UnknownSymbol; malformed input
// raises SyntaxError, both carrying the byte offset.
Expr parse_expression(ParametricProgram& prog, std::string_view text);

// Renders an expression with minimal parentheses under the grammar above.
// Constants print with enough digits to reparse to the identical value.
std::string to_string(const ParametricProgram& prog, Expr e);

// True for names the expression grammar reserves for function calls.
bool is_reserved_name(std::string_view name);

}  // namespace kktsens
