#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dfib/linalg.hpp"

namespace dfib {

/// Small arithmetic expression language with symbolic differentiation.
/// Grammar: + - * / ^, unary minus, comparisons (< > <= >=, yielding 0/1),
/// calls exp log sqrt abs sin cos tan sinh cosh tanh atan atan2 pow min max
/// norm(a,b,...) if(c,a,b) (a where c > 0), constants pi and e.
class Expr {
 public:
  enum class Op {
    Const, Var, Add, Sub, Mul, Div, Pow, Neg,
    Exp, Log, Sqrt, Abs, Sin, Cos, Tan, Sinh, Cosh, Tanh, Atan, Atan2,
    Min, Max, Norm, If, Lt, Gt, Le, Ge, Sign,
  };

  struct Node;
  using NodePtr = std::shared_ptr<const Node>;

  Expr();
  explicit Expr(double c);

  static Expr parse(const std::string& text, const std::vector<std::string>& vars);
  static Expr variable(int index);
  static Expr constant(double c) { return Expr(c); }

  double eval(const double* x) const;
  double eval(const Vec& x) const { return eval(x.data()); }
  /// Holomorphic extension; abs, min, max, sign and comparisons use real parts.
  cplx eval_complex(const cplx* x) const;
  cplx eval_complex(const CVec& x) const { return eval_complex(x.data()); }
  Expr diff(int var) const;
  bool is_constant(double* value = nullptr) const;
  /// Largest variable index referenced plus one.
  int arity() const;
  std::string str() const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);

  const NodePtr& node() const { return node_; }

  friend struct ExprFactory;

 private:
  explicit Expr(NodePtr n) : node_(std::move(n)) {}
  static Expr make(Op op, std::vector<Expr> args);
  NodePtr node_;
};

struct Expr::Node {
  Op op = Op::Const;
  double value = 0.0;
  int var = -1;
  std::vector<Expr> args;
};

/// Variable names x0..x{n-1} followed by xi0..xi{n-1}.
std::vector<std::string> phase_space_names(int n);
/// Variable names with the given prefix: p0..p{n-1}.
std::vector<std::string> indexed_names(const std::string& prefix, int n);

}  // namespace dfib
