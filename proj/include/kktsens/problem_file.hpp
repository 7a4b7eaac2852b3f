#pragma once

#include <memory>
#include <optional>
#include <string>

#include "kktsens/model.hpp"

namespace kktsens {

// A problem read from disk: the program plus an optional scalar tracking
// expression ("loss") evaluated alongside solutions but not optimized.
struct LoadedProblem {
  std::unique_ptr<ParametricProgram> program;
  std::optional<Expr> loss;
};

// Reads a problem from its JSON description (schema version 1):
//
// {
//   "schema": 1,
//   "variables":   [{"name": "x", "lower": 0.0, "upper": 1.5}, ...],
//   "parameters":  [{"name": "d", "value": 100.0}, ...],
//   "constraints": [{"expr": "x + y", "rel": "==", "rhs": "d"}, ...],
//   "objective":   {"sense": "min", "expr": "..."},
//   "loss":        {"expr": "..."}          // optional
// }
//
// "lower"/"upper" are optional; "rel" is one of "==", "<=", ">="; "rhs" is an
// expression string or a bare number; "sense" is "min" or "max". Expressions
// use the grammar in parser.hpp and may reference any declared name. Unknown
// fields, wrong types, reserved or duplicate names and unsupported schema
// versions raise SchemaError; input that is not JSON at all raises ParseError.
LoadedProblem load_problem(const std::string& json_text);

// Same, reading from a file; unreadable files raise ParseError.
LoadedProblem load_problem_file(const std::string& path);

}  // namespace kktsens
