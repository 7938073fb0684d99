// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbfreach/core.hpp"

namespace cbfreach {

enum class InclusionKind { exact_constant, natural, jacobian };

/// Componentwise bounds of a vector map d over boxes: lo <= d(x) <= hi.
struct InclusionFn {
  InclusionKind kind = InclusionKind::natural;
  Eigen::Index out_dim = 0;
  std::function<std::pair<Vec, Vec>(const HyperRect&)> evaluator;
  /// Present for affine maps d(x) = A x + c.
  std::optional<Mat> matrix;

  std::pair<Vec, Vec> operator()(const HyperRect& box) const { return evaluator(box); }

  /// Lower bound of coordinate i on the face {x in box : x_i = lo_i}, i.e. the
  /// mixed argument (lo, hi_[i:lo]).
  double lower_on_face(const HyperRect& box, Eigen::Index i) const { return evaluator(box.face_lo(i)).first[i]; }
  /// Upper bound of coordinate i on the face {x in box : x_i = hi_i}.
  double upper_on_face(const HyperRect& box, Eigen::Index i) const { return evaluator(box.face_hi(i)).second[i]; }
};

/// Bounds of a matrix-valued map (used for g).
struct MatrixInclusion {
  std::function<std::pair<Mat, Mat>(const HyperRect&)> evaluator;
  bool constant = false;

  std::pair<Mat, Mat> operator()(const HyperRect& box) const { return evaluator(box); }
};

/// d(x) = A x + c; exact through the sign split of A.
inline InclusionFn linear_inclusion(const Mat& A, const Vec& c) {
  if (A.rows() != c.size()) throw DimensionError("linear_inclusion: A and c disagree");
  InclusionFn inc;
  inc.kind = InclusionKind::jacobian;
  inc.out_dim = A.rows();
  inc.matrix = A;
  inc.evaluator = [A, c](const HyperRect& box) {
    if (box.dim() != A.cols()) throw DimensionError("linear_inclusion: box dimension mismatch");
    auto [lo, hi] = affine_range(A, box);
    return std::make_pair(Vec(lo + c), Vec(hi + c));
  };
  return inc;
}

inline MatrixInclusion constant_g_inclusion(const Mat& G0) {
  MatrixInclusion inc;
  inc.constant = true;
  inc.evaluator = [G0](const HyperRect&) { return std::make_pair(G0, G0); };
  return inc;
}

// ---------------------------------------------------------------------------
// Polynomial expressions and their natural inclusion
// ---------------------------------------------------------------------------

/// Expression tree over {+, -, *, square, constant, coordinate}.
class Expr {
 public:
  enum class Op { constant, coord, add, sub, mul, neg, square, unsupported };

  static Expr constant(double c) { return Expr(std::make_shared<Node>(Node{Op::constant, c, 0, {}, ""})); }
  static Expr coord(Eigen::Index i) { return Expr(std::make_shared<Node>(Node{Op::coord, 0.0, i, {}, ""})); }
  /// Placeholder for a primitive outside the supported set; evaluating it throws.
  static Expr unsupported(std::string name, Expr arg) {
    return Expr(std::make_shared<Node>(Node{Op::unsupported, 0.0, 0, {arg.node_}, std::move(name)}));
  }

  friend Expr operator+(const Expr& a, const Expr& b) { return binary(Op::add, a, b); }
  friend Expr operator-(const Expr& a, const Expr& b) { return binary(Op::sub, a, b); }
  friend Expr operator*(const Expr& a, const Expr& b) { return binary(Op::mul, a, b); }
  friend Expr operator-(const Expr& a) { return Expr(std::make_shared<Node>(Node{Op::neg, 0.0, 0, {a.node_}, ""})); }
  friend Expr sq(const Expr& a) { return Expr(std::make_shared<Node>(Node{Op::square, 0.0, 0, {a.node_}, ""})); }

  double eval(const Vec& x) const { return eval_node(*node_, x); }
  Interval eval(const HyperRect& box) const { return eval_node(*node_, box); }

 private:
  struct Node {
    Op op;
    double value;
    Eigen::Index index;
    std::vector<std::shared_ptr<const Node>> args;
    std::string name;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static Expr binary(Op op, const Expr& a, const Expr& b) {
    return Expr(std::make_shared<Node>(Node{op, 0.0, 0, {a.node_, b.node_}, ""}));
  }

  template <typename T>
  using Result = std::conditional_t<std::is_same_v<T, HyperRect>, Interval, double>;

  static Eigen::Index dim_of(const Vec& x) { return x.size(); }
  static Eigen::Index dim_of(const HyperRect& x) { return x.dim(); }

  template <typename T>
  static Result<T> eval_node(const Node& n, const T& x) {
    using R = Result<T>;
    switch (n.op) {
      case Op::constant: return R(n.value);
      case Op::coord:
        if (n.index < 0 || n.index >= dim_of(x)) throw DimensionError("Expr: coordinate index out of range");
        if constexpr (std::is_same_v<T, HyperRect>) {
          return x[n.index];
        } else {
          return R(x[n.index]);
        }
      case Op::add: return R(eval_node(*n.args[0], x) + eval_node(*n.args[1], x));
      case Op::sub: return R(eval_node(*n.args[0], x) - eval_node(*n.args[1], x));
      case Op::mul: return R(eval_node(*n.args[0], x) * eval_node(*n.args[1], x));
      case Op::neg: return R(-eval_node(*n.args[0], x));
      case Op::square: {
        const R a = eval_node(*n.args[0], x);
        if constexpr (std::is_same_v<R, Interval>) {
          return square(a);
        } else {
          return R(a * a);
        }
      }
      case Op::unsupported: break;
    }
    throw InvalidArgument("unsupported primitive \"" + n.name + "\" in expression");
  }

  std::shared_ptr<const Node> node_;
};

namespace detail {

/// Recursive-descent parser for polynomial fields written as text, e.g.
/// "-x1 + x1*x2 - x2^2". Variables are x1..xn; exponents must be
/// non-negative integers.
class ExprParser {
 public:
  explicit ExprParser(std::string text) : s_(std::move(text)) {}

  Expr parse() {
    Expr e = sum();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return e;
  }

 private:
  Expr sum() {
    Expr e = product();
    for (;;) {
      skip();
      if (accept('+')) {
        e = e + product();
      } else if (accept('-')) {
        e = e - product();
      } else {
        return e;
      }
    }
  }
  Expr product() {
    Expr e = unary();
    for (;;) {
      skip();
      if (!accept('*')) return e;
      e = e * unary();
    }
  }
  Expr unary() {
    skip();
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }
  Expr power() {
    Expr base = atom();
    skip();
    if (!accept('^')) return base;
    skip();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("exponent must be a non-negative integer");
    const int k = std::stoi(s_.substr(start, pos_ - start));
    if (k == 0) return Expr::constant(1.0);
    // Exponentiation by squaring keeps the square rule for even powers.
    Expr result = Expr::constant(1.0);
    bool have = false;
    Expr b = base;
    for (int p = k; p > 0; p >>= 1) {
      if (p & 1) {
        result = have ? result * b : b;
        have = true;
      }
      if (p > 1) b = sq(b);
    }
    return result;
  }
  Expr atom() {
    skip();
    if (accept('(')) {
      Expr e = sum();
      skip();
      if (!accept(')')) fail("missing ')'");
      return e;
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      std::size_t used = 0;
      const double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      return Expr::constant(v);
    }
    if (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      if (name.size() > 1 && name[0] == 'x' && name.find_first_not_of("0123456789", 1) == std::string::npos) {
        const long idx = std::stol(name.substr(1));
        if (idx < 1) fail("variables are numbered from x1");
        return Expr::coord(idx - 1);
      }
      skip();
      if (accept('(')) {
        Expr arg = sum();
        skip();
        if (!accept(')')) fail("missing ')'");
        return Expr::unsupported(name, arg);
      }
      fail("unknown symbol \"" + name + "\"");
    }
    fail("expected an operand");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError("expression \"" + s_ + "\" at offset " + std::to_string(pos_) + ": " + msg);
  }

  std::string s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse_expr(const std::string& text) { return detail::ExprParser(text).parse(); }

/// Interval evaluation of one expression per output coordinate. Throws on
/// unsupported primitives at construction (probed on a unit box of `in_dim`).
inline InclusionFn natural_inclusion(std::vector<Expr> exprs, Eigen::Index in_dim) {
  const HyperRect probe(Vec::Zero(in_dim), Vec::Ones(in_dim));
  for (const auto& e : exprs) (void)e.eval(probe);
  InclusionFn inc;
  inc.kind = InclusionKind::natural;
  inc.out_dim = static_cast<Eigen::Index>(exprs.size());
  inc.evaluator = [exprs = std::move(exprs)](const HyperRect& box) {
    Vec lo(static_cast<Eigen::Index>(exprs.size()));
    Vec hi(lo.size());
    for (std::size_t k = 0; k < exprs.size(); ++k) {
      const Interval v = exprs[k].eval(box);
      lo[static_cast<Eigen::Index>(k)] = v.lo;
      hi[static_cast<Eigen::Index>(k)] = v.hi;
    }
    return std::make_pair(lo, hi);
  };
  return inc;
}

inline InclusionFn natural_inclusion(const std::vector<std::string>& texts, Eigen::Index in_dim) {
  std::vector<Expr> exprs;
  for (const auto& t : texts) exprs.push_back(parse_expr(t));
  return natural_inclusion(std::move(exprs), in_dim);
}

}  // namespace cbfreach
