#include "dfib/expr.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "dfib/error.hpp"

namespace dfib {

using Op = Expr::Op;

Expr::Expr() : Expr(0.0) {}

Expr::Expr(double c) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = c;
  node_ = n;
}

Expr Expr::variable(int index) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->var = index;
  return Expr(NodePtr(n));
}

bool Expr::is_constant(double* value) const {
  if (node_->op != Op::Const) return false;
  if (value) *value = node_->value;
  return true;
}

namespace {

double apply(Op op, const double* a, size_t n) {
  switch (op) {
    case Op::Add: return a[0] + a[1];
    case Op::Sub: return a[0] - a[1];
    case Op::Mul: return a[0] * a[1];
    case Op::Div: return a[0] / a[1];
    case Op::Pow: return std::pow(a[0], a[1]);
    case Op::Neg: return -a[0];
    case Op::Exp: return std::exp(a[0]);
    case Op::Log: return std::log(a[0]);
    case Op::Sqrt: return std::sqrt(a[0]);
    case Op::Abs: return std::abs(a[0]);
    case Op::Sin: return std::sin(a[0]);
    case Op::Cos: return std::cos(a[0]);
    case Op::Tan: return std::tan(a[0]);
    case Op::Sinh: return std::sinh(a[0]);
    case Op::Cosh: return std::cosh(a[0]);
    case Op::Tanh: return std::tanh(a[0]);
    case Op::Atan: return std::atan(a[0]);
    case Op::Atan2: return std::atan2(a[0], a[1]);
    case Op::Min: return std::min(a[0], a[1]);
    case Op::Max: return std::max(a[0], a[1]);
    case Op::Norm: {
      double s = 0;
      for (size_t i = 0; i < n; ++i) s += a[i] * a[i];
      return std::sqrt(s);
    }
    case Op::If: return a[0] > 0 ? a[1] : a[2];
    case Op::Lt: return a[0] < a[1] ? 1.0 : 0.0;
    case Op::Gt: return a[0] > a[1] ? 1.0 : 0.0;
    case Op::Le: return a[0] <= a[1] ? 1.0 : 0.0;
    case Op::Ge: return a[0] >= a[1] ? 1.0 : 0.0;
    case Op::Sign: return a[0] > 0 ? 1.0 : (a[0] < 0 ? -1.0 : 0.0);
    default: return 0.0;
  }
}

}  // namespace

Expr Expr::make(Op op, std::vector<Expr> args) {
  bool all_const = true;
  std::vector<double> vals;
  for (const auto& a : args) {
    double v;
    if (a.is_constant(&v))
      vals.push_back(v);
    else
      all_const = false;
  }
  if (all_const && op != Op::Const && op != Op::Var) return Expr(apply(op, vals.data(), vals.size()));

  auto isc = [](const Expr& e, double c) {
    double v;
    return e.is_constant(&v) && v == c;
  };
  switch (op) {
    case Op::Add:
      if (isc(args[0], 0)) return args[1];
      if (isc(args[1], 0)) return args[0];
      break;
    case Op::Sub:
      if (isc(args[1], 0)) return args[0];
      if (isc(args[0], 0)) return make(Op::Neg, {args[1]});
      break;
    case Op::Mul:
      if (isc(args[0], 0) || isc(args[1], 0)) return Expr(0.0);
      if (isc(args[0], 1)) return args[1];
      if (isc(args[1], 1)) return args[0];
      break;
    case Op::Div:
      if (isc(args[0], 0)) return Expr(0.0);
      if (isc(args[1], 1)) return args[0];
      break;
    case Op::Pow:
      if (isc(args[1], 1)) return args[0];
      if (isc(args[1], 0)) return Expr(1.0);
      break;
    case Op::Neg:
      if (args[0].node()->op == Op::Neg) return args[0].node()->args[0];
      break;
    case Op::If:
      if (args[1].node() == args[2].node()) return args[1];
      if (isc(args[1], 0) && isc(args[2], 0)) return Expr(0.0);
      break;
    default:
      break;
  }
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = std::move(args);
  return Expr(NodePtr(n));
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::make(Op::Add, {a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::make(Op::Sub, {a, b}); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::make(Op::Mul, {a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::make(Op::Div, {a, b}); }
Expr operator-(const Expr& a) { return Expr::make(Op::Neg, {a}); }

double Expr::eval(const double* x) const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return x[n.var];
    case Op::If: return n.args[0].eval(x) > 0 ? n.args[1].eval(x) : n.args[2].eval(x);
    default: break;
  }
  double buf[8];
  std::vector<double> big;
  double* a = buf;
  if (n.args.size() > 8) {
    big.resize(n.args.size());
    a = big.data();
  }
  for (size_t i = 0; i < n.args.size(); ++i) a[i] = n.args[i].eval(x);
  return apply(n.op, a, n.args.size());
}

cplx Expr::eval_complex(const cplx* x) const {
  const Node& n = *node_;
  const auto& A = n.args;
  auto e = [&](size_t i) { return A[i].eval_complex(x); };
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return x[n.var];
    case Op::Add: return e(0) + e(1);
    case Op::Sub: return e(0) - e(1);
    case Op::Mul: return e(0) * e(1);
    case Op::Div: return e(0) / e(1);
    case Op::Pow: {
      double c;
      if (A[1].is_constant(&c) && c == std::round(c) && std::abs(c) < 64) {
        cplx r = 1.0, b = e(0);
        for (int i = 0; i < std::abs(static_cast<int>(c)); ++i) r *= b;
        return c < 0 ? 1.0 / r : r;
      }
      return std::pow(e(0), e(1));
    }
    case Op::Neg: return -e(0);
    case Op::Exp: return std::exp(e(0));
    case Op::Log: return std::log(e(0));
    case Op::Sqrt: return std::sqrt(e(0));
    case Op::Sin: return std::sin(e(0));
    case Op::Cos: return std::cos(e(0));
    case Op::Tan: return std::tan(e(0));
    case Op::Sinh: return std::sinh(e(0));
    case Op::Cosh: return std::cosh(e(0));
    case Op::Tanh: return std::tanh(e(0));
    case Op::Atan: return std::atan(e(0));
    case Op::Atan2: {
      const cplx y = e(0), xx = e(1);
      return cplx(0, -1) * std::log((xx + cplx(0, 1) * y) / std::sqrt(xx * xx + y * y));
    }
    case Op::Norm: {
      cplx s = 0;
      for (size_t i = 0; i < A.size(); ++i) s += e(i) * e(i);
      return std::sqrt(s);
    }
    case Op::If: return e(0).real() > 0 ? e(1) : e(2);
    default: break;
  }
  // non-analytic operations act on real parts
  std::vector<double> a(A.size());
  for (size_t i = 0; i < A.size(); ++i) a[i] = e(i).real();
  return apply(n.op, a.data(), a.size());
}

Expr Expr::diff(int var) const {
  const Node& n = *node_;
  const auto& A = n.args;
  auto d = [&](size_t i) { return A[i].diff(var); };
  switch (n.op) {
    case Op::Const: return Expr(0.0);
    case Op::Var: return Expr(n.var == var ? 1.0 : 0.0);
    case Op::Add: return d(0) + d(1);
    case Op::Sub: return d(0) - d(1);
    case Op::Mul: return d(0) * A[1] + A[0] * d(1);
    case Op::Div: return (d(0) * A[1] - A[0] * d(1)) / (A[1] * A[1]);
    case Op::Pow: {
      double c;
      if (A[1].is_constant(&c)) return Expr(c) * make(Op::Pow, {A[0], Expr(c - 1.0)}) * d(0);
      // a^b = exp(b log a)
      return *this * (d(1) * make(Op::Log, {A[0]}) + A[1] * d(0) / A[0]);
    }
    case Op::Neg: return -d(0);
    case Op::Exp: return *this * d(0);
    case Op::Log: return d(0) / A[0];
    case Op::Sqrt: return d(0) / (Expr(2.0) * *this);
    case Op::Abs: return make(Op::Sign, {A[0]}) * d(0);
    case Op::Sin: return make(Op::Cos, {A[0]}) * d(0);
    case Op::Cos: return -make(Op::Sin, {A[0]}) * d(0);
    case Op::Tan: {
      Expr c = make(Op::Cos, {A[0]});
      return d(0) / (c * c);
    }
    case Op::Sinh: return make(Op::Cosh, {A[0]}) * d(0);
    case Op::Cosh: return make(Op::Sinh, {A[0]}) * d(0);
    case Op::Tanh: return (Expr(1.0) - *this * *this) * d(0);
    case Op::Atan: return d(0) / (Expr(1.0) + A[0] * A[0]);
    case Op::Atan2:
      return (A[1] * d(0) - A[0] * d(1)) / (A[0] * A[0] + A[1] * A[1]);
    case Op::Min: return make(Op::If, {make(Op::Lt, {A[0], A[1]}), d(0), d(1)});
    case Op::Max: return make(Op::If, {make(Op::Gt, {A[0], A[1]}), d(0), d(1)});
    case Op::Norm: {
      Expr s(0.0);
      for (size_t i = 0; i < A.size(); ++i) s = s + A[i] * d(i);
      return s / *this;
    }
    case Op::If: return make(Op::If, {A[0], d(1), d(2)});
    case Op::Lt:
    case Op::Gt:
    case Op::Le:
    case Op::Ge:
    case Op::Sign: return Expr(0.0);
  }
  return Expr(0.0);
}

int Expr::arity() const {
  const Node& n = *node_;
  if (n.op == Op::Var) return n.var + 1;
  int m = 0;
  for (const auto& a : n.args) m = std::max(m, a.arity());
  return m;
}

std::string Expr::str() const {
  static const std::map<Op, std::string> names = {
      {Op::Exp, "exp"},   {Op::Log, "log"},     {Op::Sqrt, "sqrt"}, {Op::Abs, "abs"},
      {Op::Sin, "sin"},   {Op::Cos, "cos"},     {Op::Tan, "tan"},   {Op::Sinh, "sinh"},
      {Op::Cosh, "cosh"}, {Op::Tanh, "tanh"},   {Op::Atan, "atan"}, {Op::Atan2, "atan2"},
      {Op::Min, "min"},   {Op::Max, "max"},     {Op::Norm, "norm"}, {Op::If, "if"},
      {Op::Sign, "sign"}};
  static const std::map<Op, std::string> infix = {
      {Op::Add, "+"}, {Op::Sub, "-"}, {Op::Mul, "*"}, {Op::Div, "/"}, {Op::Pow, "^"},
      {Op::Lt, "<"},  {Op::Gt, ">"},  {Op::Le, "<="}, {Op::Ge, ">="}};
  const Node& n = *node_;
  std::ostringstream os;
  os.precision(17);
  if (n.op == Op::Const) {
    os << n.value;
  } else if (n.op == Op::Var) {
    os << "$" << n.var;
  } else if (n.op == Op::Neg) {
    os << "(-" << n.args[0].str() << ")";
  } else if (infix.count(n.op)) {
    os << "(" << n.args[0].str() << infix.at(n.op) << n.args[1].str() << ")";
  } else {
    os << names.at(n.op) << "(";
    for (size_t i = 0; i < n.args.size(); ++i) os << (i ? "," : "") << n.args[i].str();
    os << ")";
  }
  return os.str();
}

namespace {

class Parser {
 public:
  Parser(const std::string& s, const std::vector<std::string>& vars) : s_(s), vars_(vars) {}

  Expr parse() {
    Expr e = comparison();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::ParseError,
                msg + " at column " + std::to_string(pos_) + " in \"" + s_ + "\"");
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(const std::string& tok) {
    skip();
    if (s_.compare(pos_, tok.size(), tok) == 0) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  Expr comparison() {
    Expr a = sum();
    for (;;) {
      if (eat("<="))
        a = call(Op::Le, {a, sum()});
      else if (eat(">="))
        a = call(Op::Ge, {a, sum()});
      else if (eat("<"))
        a = call(Op::Lt, {a, sum()});
      else if (eat(">"))
        a = call(Op::Gt, {a, sum()});
      else
        return a;
    }
  }
  Expr sum() {
    Expr a = product();
    for (;;) {
      if (eat("+"))
        a = a + product();
      else if (eat("-"))
        a = a - product();
      else
        return a;
    }
  }
  Expr product() {
    Expr a = unary();
    for (;;) {
      if (eat("*"))
        a = a * unary();
      else if (eat("/"))
        a = a / unary();
      else
        return a;
    }
  }
  Expr unary() {
    if (eat("-")) return -unary();
    if (eat("+")) return unary();
    return power();
  }
  Expr power() {
    Expr base = atom();
    if (eat("^")) return call(Op::Pow, {base, unary()});
    return base;
  }
  Expr atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = comparison();
      if (!eat(")")) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t used = 0;
      double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      return Expr(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      std::string id = s_.substr(start, pos_ - start);
      if (eat("(")) return function(id);
      for (size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i] == id) return Expr::variable(static_cast<int>(i));
      if (id == "pi") return Expr(M_PI);
      if (id == "e") return Expr(M_E);
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }
  Expr function(const std::string& id) {
    std::vector<Expr> args;
    if (!eat(")")) {
      do args.push_back(comparison());
      while (eat(","));
      if (!eat(")")) fail("expected ')' after arguments of " + id);
    }
    static const std::map<std::string, std::pair<Op, int>> table = {
        {"exp", {Op::Exp, 1}},     {"log", {Op::Log, 1}},   {"sqrt", {Op::Sqrt, 1}},
        {"abs", {Op::Abs, 1}},     {"sin", {Op::Sin, 1}},   {"cos", {Op::Cos, 1}},
        {"tan", {Op::Tan, 1}},     {"sinh", {Op::Sinh, 1}}, {"cosh", {Op::Cosh, 1}},
        {"tanh", {Op::Tanh, 1}},   {"atan", {Op::Atan, 1}}, {"atan2", {Op::Atan2, 2}},
        {"pow", {Op::Pow, 2}},     {"min", {Op::Min, 2}},   {"max", {Op::Max, 2}},
        {"if", {Op::If, 3}},       {"norm", {Op::Norm, -1}}, {"sign", {Op::Sign, 1}}};
    auto it = table.find(id);
    if (it == table.end()) fail("unknown function '" + id + "'");
    const auto [op, n] = it->second;
    if (n >= 0 && static_cast<int>(args.size()) != n)
      fail(id + " expects " + std::to_string(n) + " argument(s)");
    if (n < 0 && args.empty()) fail(id + " expects at least one argument");
    return call(op, std::move(args));
  }
  Expr call(Op op, std::vector<Expr> args);

  const std::string& s_;
  const std::vector<std::string>& vars_;
  size_t pos_ = 0;
};

}  // namespace

struct ExprFactory {
  static Expr make(Op op, std::vector<Expr> args) { return Expr::make(op, std::move(args)); }
};

Expr Parser::call(Op op, std::vector<Expr> args) { return ExprFactory::make(op, std::move(args)); }

Expr Expr::parse(const std::string& text, const std::vector<std::string>& vars) {
  return Parser(text, vars).parse();
}

std::vector<std::string> phase_space_names(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("x" + std::to_string(i));
  for (int i = 0; i < n; ++i) v.push_back("xi" + std::to_string(i));
  return v;
}

std::vector<std::string> indexed_names(const std::string& prefix, int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

}  // namespace dfib
