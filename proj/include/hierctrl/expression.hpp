// Small arithmetic grammar for coefficient and data functions of (x, y, t).
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := '-' unary | '+' unary | atom
//   atom   := number | 'x' | 'y' | 't' | 'pi' | func '(' expr ')' | '(' expr ')'
//   func   := 'sin' | 'cos' | 'exp'

#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace hierctrl::cli {

class ExpressionError : public std::invalid_argument {
 public:
  ExpressionError(const std::string& what, std::size_t position)
      : std::invalid_argument(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class Expression {
 public:
  struct Node;

  /// Throws ExpressionError with the 0-based character offset of the fault.
  static Expression parse(const std::string& source);
  static Expression constant(double value);

  double operator()(double x, double y, double t) const;
  const std::string& source() const { return source_; }
  /// True when the expression does not reference x, y or t.
  bool is_constant() const;

 private:
  std::shared_ptr<const Node> root_;
  std::string source_;
};

}  // namespace hierctrl::cli
