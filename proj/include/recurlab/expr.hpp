#pragma once

// Scalar expressions for matrix entries and twist parameters: decimal
// literals, + - * / ^, parentheses, sqrt(), exp(), log(), and the constants
// pi and e. Expressions are parsed once and re-evaluated at any precision.

#include <cctype>
#include <cstdio>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "recurlab/bigfloat.hpp"
#include "recurlab/errors.hpp"

namespace recurlab {

class Expr {
 public:
  static Expr parse(const std::string& text) {
    Parser p{text, 0};
    auto node = p.parse_sum();
    p.skip_ws();
    if (p.pos != text.size())
      throw ConfigError("unexpected '" + text.substr(p.pos) + "' in expression '" + text + "'");
    return Expr(std::move(node), text);
  }

  /// Exact binary value of a double.
  static Expr literal(double x) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Binary;
    n->value = x;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return Expr(std::move(n), buf);
  }

  BigFloat eval(mpfr_prec_t bits) const { return eval_node(*root_, bits); }
  long double eval_ld() const { return eval(128).to_long_double(); }
  const std::string& text() const { return text_; }

 private:
  enum class Kind { Number, Binary, Pi, E, Neg, Add, Sub, Mul, Div, Pow, Sqrt, Exp, Log };
  struct Node {
    Kind kind{};
    std::string literal;
    double value = 0.0;
    std::shared_ptr<const Node> lhs, rhs;
  };
  using NodePtr = std::shared_ptr<const Node>;

  Expr(NodePtr root, std::string text) : root_(std::move(root)), text_(std::move(text)) {}

  static NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
  }

  struct Parser {
    const std::string& s;
    std::size_t pos;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    NodePtr parse_sum() {
      auto lhs = parse_product();
      for (;;) {
        if (eat('+'))
          lhs = make(Kind::Add, lhs, parse_product());
        else if (eat('-'))
          lhs = make(Kind::Sub, lhs, parse_product());
        else
          return lhs;
      }
    }
    NodePtr parse_product() {
      auto lhs = parse_unary();
      for (;;) {
        if (eat('*'))
          lhs = make(Kind::Mul, lhs, parse_unary());
        else if (eat('/'))
          lhs = make(Kind::Div, lhs, parse_unary());
        else
          return lhs;
      }
    }
    NodePtr parse_unary() {
      if (eat('-')) return make(Kind::Neg, parse_unary());
      if (eat('+')) return parse_unary();
      auto base = parse_atom();
      if (eat('^')) return make(Kind::Pow, base, parse_unary());
      return base;
    }
    NodePtr parse_atom() {
      skip_ws();
      if (pos >= s.size()) throw ConfigError("unexpected end of expression '" + s + "'");
      if (eat('(')) {
        auto inner = parse_sum();
        if (!eat(')')) throw ConfigError("missing ')' in '" + s + "'");
        return inner;
      }
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const std::size_t start = pos;
        while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.'))
          ++pos;
        if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
          std::size_t save = pos++;
          if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
          if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
          } else {
            pos = save;
          }
        }
        auto n = std::make_shared<Node>();
        n->kind = Kind::Number;
        n->literal = s.substr(start, pos - start);
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        const std::size_t start = pos;
        while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
        const std::string name = s.substr(start, pos - start);
        if (name == "pi") return make(Kind::Pi);
        if (name == "e") return make(Kind::E);
        Kind k;
        if (name == "sqrt")
          k = Kind::Sqrt;
        else if (name == "exp")
          k = Kind::Exp;
        else if (name == "log" || name == "ln")
          k = Kind::Log;
        else
          throw ConfigError("unknown identifier '" + name + "' in '" + s + "'");
        if (!eat('(')) throw ConfigError("expected '(' after " + name);
        auto arg = parse_sum();
        if (!eat(')')) throw ConfigError("missing ')' after " + name + " argument");
        return make(k, arg);
      }
      throw ConfigError(std::string("unexpected character '") + c + "' in '" + s + "'");
    }
  };

  static BigFloat eval_node(const Node& n, mpfr_prec_t bits) {
    switch (n.kind) {
      case Kind::Number:
        return BigFloat::from_string(n.literal, bits);
      case Kind::Binary:
        return BigFloat(n.value, bits);
      case Kind::Pi:
        return BigFloat::pi(bits);
      case Kind::E: {
        BigFloat one(1.0, bits);
        return one.apply(mpfr_exp);
      }
      case Kind::Neg:
        return -eval_node(*n.lhs, bits);
      case Kind::Add:
        return eval_node(*n.lhs, bits) + eval_node(*n.rhs, bits);
      case Kind::Sub:
        return eval_node(*n.lhs, bits) - eval_node(*n.rhs, bits);
      case Kind::Mul:
        return eval_node(*n.lhs, bits) * eval_node(*n.rhs, bits);
      case Kind::Div:
        return eval_node(*n.lhs, bits) / eval_node(*n.rhs, bits);
      case Kind::Pow: {
        BigFloat base = eval_node(*n.lhs, bits);
        BigFloat ex = eval_node(*n.rhs, bits);
        BigFloat r(bits);
        mpfr_pow(r.get(), base.get(), ex.get(), MPFR_RNDN);
        return r;
      }
      case Kind::Sqrt:
        return eval_node(*n.lhs, bits).apply(mpfr_sqrt);
      case Kind::Exp:
        return eval_node(*n.lhs, bits).apply(mpfr_exp);
      case Kind::Log:
        return eval_node(*n.lhs, bits).apply(mpfr_log);
    }
    return BigFloat(bits);
  }

  NodePtr root_;
  std::string text_;
};

}  // namespace recurlab
