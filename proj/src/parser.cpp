#include "kktsens/parser.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <string>

namespace kktsens {

namespace {

constexpr std::array<const char*, 6> kFunctions = {"sin", "cos", "tan",
                                                   "exp", "log", "sqrt"};

bool is_ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
         c >= 0x80;
}

bool is_ident_char(unsigned char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

class Parser {
 public:
  Parser(ParametricProgram& prog, std::string_view text)
      : prog_(prog), text_(text) {}

  Expr run() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) {
      throw SyntaxError(static_cast<long>(pos_), "end of expression");
    }
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  // Peeks past whitespace; '\0' at end of input.
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  bool consume(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr parse_sum() {
    Expr e = parse_term();
    for (;;) {
      const char c = peek();
      if (c == '+') {
        ++pos_;
        e = e + parse_term();
      } else if (c == '-') {
        ++pos_;
        e = e - parse_term();
      } else {
        return e;
      }
    }
  }

  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      const char c = peek();
      if (c == '*') {
        ++pos_;
        e = e * parse_factor();
      } else if (c == '/') {
        ++pos_;
        e = e / parse_factor();
      } else {
        return e;
      }
    }
  }

  Expr parse_factor() {
    Expr base = parse_base();
    if (!consume('^')) return base;
    skip_ws();
    const size_t exp_off = pos_;
    Expr exponent = parse_factor();
    const Node& node = prog_.graph().node(exponent.id());
    if (node.kind != OpKind::Constant) {
      throw SyntaxError(static_cast<long>(exp_off), "a constant exponent");
    }
    return pow(base, node.payload);
  }

  Expr parse_base() {
    const char c = peek();
    if (c == '-') {
      ++pos_;
      return -parse_base();
    }
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (!consume(')')) {
        throw SyntaxError(static_cast<long>(pos_), "')'");
      }
      return e;
    }
    if (is_digit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < text_.size() &&
         is_digit(static_cast<unsigned char>(text_[pos_ + 1])))) {
      return parse_number();
    }
    if (is_ident_start(static_cast<unsigned char>(c))) {
      return parse_name();
    }
    throw SyntaxError(static_cast<long>(pos_), "a value");
  }

  Expr parse_number() {
    const size_t start = pos_;
    while (pos_ < text_.size() &&
           is_digit(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() &&
             is_digit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      }
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      size_t mark = pos_ + 1;
      if (mark < text_.size() && (text_[mark] == '+' || text_[mark] == '-')) {
        ++mark;
      }
      if (mark < text_.size() && is_digit(static_cast<unsigned char>(text_[mark]))) {
        pos_ = mark + 1;
        while (pos_ < text_.size() &&
               is_digit(static_cast<unsigned char>(text_[pos_]))) {
          ++pos_;
        }
      }
    }
    double value = 0.0;
    const auto result =
        std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (result.ec != std::errc() || result.ptr != text_.data() + pos_) {
      throw SyntaxError(static_cast<long>(start), "a representable number");
    }
    return Expr(&prog_.graph(), prog_.graph().constant(value));
  }

  Expr parse_name() {
    const size_t start = pos_;
    while (pos_ < text_.size() &&
           is_ident_char(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    std::string name(text_.substr(start, pos_ - start));
    for (const char* fn : kFunctions) {
      if (name == fn) return parse_call(name);
    }
    if (auto v = prog_.find_variable(name)) return Expr(*v);
    if (auto p = prog_.find_parameter(name)) return Expr(*p);
    throw UnknownSymbol(std::move(name), static_cast<long>(start));
  }

  Expr parse_call(const std::string& fn) {
    if (!consume('(')) {
      throw SyntaxError(static_cast<long>(pos_),
                        "'(' after function name '" + fn + "'");
    }
    Expr arg = parse_sum();
    if (!consume(')')) {
      throw SyntaxError(static_cast<long>(pos_), "')'");
    }
    if (fn == "sin") return sin(arg);
    if (fn == "cos") return cos(arg);
    if (fn == "tan") return tan(arg);
    if (fn == "exp") return exp(arg);
    if (fn == "log") return log(arg);
    return sqrt(arg);
  }

  ParametricProgram& prog_;
  std::string_view text_;
  size_t pos_ = 0;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Precedence tiers for printing: sums, products, unary minus, powers, atoms.
enum Prec : int { kSum = 10, kProduct = 20, kUnary = 30, kPower = 40, kAtom = 50 };

class Printer {
 public:
  Printer(const ParametricProgram& prog) : prog_(prog) {}

  std::string render(NodeId id, int required) {
    const Node& node = prog_.graph().node(id);
    switch (node.kind) {
      case OpKind::Constant: {
        // A leading minus sign reparses as unary negation; same value either
        // way, but parenthesize in power/unary slots where '-' is not valid.
        std::string s = format_double(node.payload);
        const int prec = s[0] == '-' ? kUnary : kAtom;
        return wrap(std::move(s), prec, required);
      }
      case OpKind::Variable:
        return prog_.variable_name(node.a);
      case OpKind::Parameter:
        return prog_.parameter_name(node.a);
      case OpKind::Add:
        return wrap(render(child(node.a), kSum) + " + " +
                        render(child(node.b), kProduct),
                    kSum, required);
      case OpKind::Sub:
        return wrap(render(child(node.a), kSum) + " - " +
                        render(child(node.b), kProduct),
                    kSum, required);
      case OpKind::Mul:
        return wrap(render(child(node.a), kProduct) + " * " +
                        render(child(node.b), kUnary),
                    kProduct, required);
      case OpKind::Div:
        return wrap(render(child(node.a), kProduct) + " / " +
                        render(child(node.b), kUnary),
                    kProduct, required);
      case OpKind::Neg:
        // The grammar reads "-x^2" as (-x)^2, so a negated power needs
        // parentheses; so does a nested negation ("--x" does not lex).
        return wrap("-" + render(child(node.a), kPower + 1), kUnary, required);
      case OpKind::Pow:
        return wrap(render(child(node.a), kAtom) + "^" +
                        render_exponent(node.payload),
                    kPower, required);
      case OpKind::Sin:
        return "sin(" + render(child(node.a), kSum) + ")";
      case OpKind::Cos:
        return "cos(" + render(child(node.a), kSum) + ")";
      case OpKind::Tan:
        return "tan(" + render(child(node.a), kSum) + ")";
      case OpKind::Exp:
        return "exp(" + render(child(node.a), kSum) + ")";
      case OpKind::Log:
        return "log(" + render(child(node.a), kSum) + ")";
      case OpKind::Sqrt:
        return "sqrt(" + render(child(node.a), kSum) + ")";
    }
    return {};
  }

 private:
  static NodeId child(std::int32_t index) { return NodeId{index}; }

  static std::string wrap(std::string s, int prec, int required) {
    if (prec < required) return "(" + std::move(s) + ")";
    return s;
  }

  // Exponents sit in a 'factor' slot, where a leading '-' is legal.
  static std::string render_exponent(double v) { return format_double(v); }

  const ParametricProgram& prog_;
};

}  // namespace

Expr parse_expression(ParametricProgram& prog, std::string_view text) {
  return Parser(prog, text).run();
}

bool is_reserved_name(std::string_view name) {
  for (const char* fn : kFunctions) {
    if (name == fn) return true;
  }
  return false;
}

std::string to_string(const ParametricProgram& prog, Expr e) {
  if (!e.valid() || e.graph() != &prog.graph()) {
    throw StaleHandle("expression does not belong to this program");
  }
  return Printer(prog).render(e.id(), kSum);
}

}  // namespace kktsens
