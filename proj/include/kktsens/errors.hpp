#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kktsens {

// Base of every library exception. `code()` is a stable machine-readable tag
// (the CLI maps it to exit codes and error JSON).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// A nonlinear function was evaluated outside its domain (log of a nonpositive
// argument, sqrt of a negative one, division by zero, nonpositive base of a
// fractional power). `node` identifies the offending graph node.
class DomainError : public Error {
 public:
  DomainError(int node, const std::string& what)
      : Error("DomainError", what), node(node) {}
  int node;
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what)
      : Error("DimensionMismatch", what) {}
};

class DuplicateName : public Error {
 public:
  explicit DuplicateName(const std::string& name)
      : Error("DuplicateName", "name already declared: " + name), name(name) {}
  std::string name;
};

class InvalidBounds : public Error {
 public:
  explicit InvalidBounds(const std::string& what) : Error("InvalidBounds", what) {}
};

class NoObjective : public Error {
 public:
  NoObjective() : Error("NoObjective", "program has no objective") {}
};

// A handle (variable/parameter/constraint ref) from a different program, or a
// slack index that has no user-level counterpart.
class StaleHandle : public Error {
 public:
  explicit StaleHandle(const std::string& what) : Error("StaleHandle", what) {}
};

class UnknownSymbol : public Error {
 public:
  UnknownSymbol(std::string name, long offset)
      : Error("UnknownSymbol",
              "unknown symbol '" + name + "' at offset " + std::to_string(offset)),
        name(std::move(name)),
        offset(offset) {}
  std::string name;
  long offset;
};

class SyntaxError : public Error {
 public:
  SyntaxError(long offset, std::string expected)
      : Error("SyntaxError", "syntax error at offset " + std::to_string(offset) +
                                 ": expected " + expected),
        offset(offset),
        expected(std::move(expected)) {}
  long offset;
  std::string expected;
};

// Malformed problem file: bad JSON structure, wrong types, unknown fields,
// duplicate names, unsupported schema version.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error("SchemaError", what) {}
};

// Unreadable or non-JSON input.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("ParseError", what) {}
};

class MaxIterations : public Error {
 public:
  MaxIterations(int iterations, double residual)
      : Error("MaxIterations",
              "no convergence after " + std::to_string(iterations) +
                  " iterations (KKT residual " + std::to_string(residual) + ")"),
        iterations(iterations),
        residual(residual) {}
  int iterations;
  double residual;
};

class Infeasible : public Error {
 public:
  explicit Infeasible(double primal_infeasibility)
      : Error("Infeasible", "dual unbounded / primal infeasible (constraint "
                            "violation stalled at " +
                                std::to_string(primal_infeasibility) + ")"),
        primal_infeasibility(primal_infeasibility) {}
  double primal_infeasibility;
};

// An externally supplied point failed the KKT residual check.
class NotStationary : public Error {
 public:
  NotStationary(std::string block, int index, double value)
      : Error("NotStationary", "KKT residual too large in " + block + " row " +
                                   std::to_string(index) + ": " +
                                   std::to_string(value)),
        block(std::move(block)),
        index(index),
        value(value) {}
  std::string block;
  int index;
  double value;
};

// KKT matrix still singular after the damping ladder was exhausted.
class SingularKkt : public Error {
 public:
  SingularKkt(double smallest_pivot, std::vector<int> near_degenerate)
      : Error("SingularKkt", "KKT matrix numerically singular (smallest pivot " +
                                 std::to_string(smallest_pivot) + ")"),
        smallest_pivot(smallest_pivot),
        near_degenerate(std::move(near_degenerate)) {}
  double smallest_pivot;
  std::vector<int> near_degenerate;
};

// Reverse seeds for variables and for the objective are mutually exclusive.
class ConflictingSeeds : public Error {
 public:
  explicit ConflictingSeeds(const std::string& what)
      : Error("ConflictingSeeds", what) {}
};

class NoSeed : public Error {
 public:
  NoSeed() : Error("NoSeed", "no input sensitivities were set") {}
};

class QueryBeforeDifferentiate : public Error {
 public:
  QueryBeforeDifferentiate()
      : Error("QueryBeforeDifferentiate",
              "output sensitivities queried before differentiation") {}
};

}  // namespace kktsens
