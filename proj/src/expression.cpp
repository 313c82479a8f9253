#include "hierctrl/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <vector>

namespace hierctrl::cli {

struct Expression::Node {
  enum class Kind { number, x, y, t, neg, add, sub, mul, div, sin, cos, exp } kind;
  double value = 0.0;
  std::shared_ptr<const Node> a, b;

  double eval(double x, double y, double t) const {
    switch (kind) {
      case Kind::number: return value;
      case Kind::x: return x;
      case Kind::y: return y;
      case Kind::t: return t;
      case Kind::neg: return -a->eval(x, y, t);
      case Kind::add: return a->eval(x, y, t) + b->eval(x, y, t);
      case Kind::sub: return a->eval(x, y, t) - b->eval(x, y, t);
      case Kind::mul: return a->eval(x, y, t) * b->eval(x, y, t);
      case Kind::div: return a->eval(x, y, t) / b->eval(x, y, t);
      case Kind::sin: return std::sin(a->eval(x, y, t));
      case Kind::cos: return std::cos(a->eval(x, y, t));
      case Kind::exp: return std::exp(a->eval(x, y, t));
    }
    return 0.0;
  }

  bool constant() const {
    if (kind == Kind::x || kind == Kind::y || kind == Kind::t) return false;
    return (!a || a->constant()) && (!b || b->constant());
  }
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Node::Kind k, NodePtr a = nullptr, NodePtr b = nullptr, double v = 0.0) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  n->value = v;
  return n;
}

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr run() {
    auto e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ExpressionError("expression '" + s_ + "': " + msg + " at position " +
                              std::to_string(pos_ + 1),
                          pos_);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make(Node::Kind::add, lhs, term());
      else if (accept('-'))
        lhs = make(Node::Kind::sub, lhs, term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make(Node::Kind::mul, lhs, unary());
      else if (accept('/'))
        lhs = make(Node::Kind::div, lhs, unary());
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Node::Kind::neg, unary());
    if (accept('+')) return unary();
    return atom();
  }

  NodePtr atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "x") return make(Node::Kind::x);
      if (id == "y") return make(Node::Kind::y);
      if (id == "t") return make(Node::Kind::t);
      if (id == "pi") return make(Node::Kind::number, nullptr, nullptr, std::acos(-1.0));
      Node::Kind fn;
      if (id == "sin")
        fn = Node::Kind::sin;
      else if (id == "cos")
        fn = Node::Kind::cos;
      else if (id == "exp")
        fn = Node::Kind::exp;
      else {
        pos_ = start;
        fail("unknown identifier '" + id + "'");
      }
      expect('(');
      auto arg = expr();
      expect(')');
      return make(fn, arg);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const char* first = s_.data() + pos_;
    const char* last = s_.data() + s_.size();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr == first) fail("malformed number");
    pos_ += static_cast<std::size_t>(ptr - first);
    return make(Node::Kind::number, nullptr, nullptr, v);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(const std::string& source) {
  Expression e;
  e.root_ = Parser(source).run();
  e.source_ = source;
  return e;
}

Expression Expression::constant(double value) {
  Expression e;
  e.root_ = make(Node::Kind::number, nullptr, nullptr, value);
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, value);
  e.source_.assign(buf, r.ptr);
  return e;
}

double Expression::operator()(double x, double y, double t) const { return root_->eval(x, y, t); }

bool Expression::is_constant() const { return root_->constant(); }

}  // namespace hierctrl::cli
