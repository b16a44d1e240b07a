#include "dfib/scenario.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>
#include <set>

#include "dfib/error.hpp"
#include "dfib/expr.hpp"
#include "dfib/io.hpp"
#include "dfib/models.hpp"

namespace dfib {

using nlohmann::json;

namespace {

// Walks a JSON object, remembers the keys it consumed and names the path in every error.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::SchemaError, (path_.empty() ? std::string("<root>") : path_) + ": " + msg);
  }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw Error(ErrorKind::SchemaError, "missing field '" + at(key) + "'");
    return j_.at(key);
  }

  double num(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) bad(key, "a number");
    return v.get<double>();
  }
  double num(const std::string& key, double def) { return has(key) ? num(key) : (seen_.insert(key), def); }
  double pos(const std::string& key, double def) {
    const double v = num(key, def);
    if (!(v > 0)) bad(key, "a positive number");
    return v;
  }
  long long integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) bad(key, "an integer");
    return v.get<long long>();
  }
  int count(const std::string& key, int def, int min = 1) {
    const long long v = has(key) ? integer(key) : def;
    seen_.insert(key);
    if (v < min) bad(key, fmt::format("an integer >= {}", min));
    return static_cast<int>(v);
  }
  std::string str(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) bad(key, "a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& key, const std::string& def) { return has(key) ? str(key) : (seen_.insert(key), def); }
  std::string choice(const std::string& key, const std::string& def, const std::set<std::string>& allowed) {
    const std::string v = str(key, def);
    if (!allowed.count(v)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      bad(key, "one of " + list);
    }
    return v;
  }
  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_boolean()) bad(key, "a boolean");
    return v.get<bool>();
  }
  Vec vec(const std::string& key, int size = -1) {
    const json& v = raw(key);
    if (!v.is_array()) bad(key, "an array of numbers");
    for (const auto& e : v)
      if (!e.is_number()) bad(key, "an array of numbers");
    if (size >= 0 && static_cast<int>(v.size()) != size) bad(key, fmt::format("an array of {} numbers", size));
    return io::vec_from_json(v);
  }
  std::vector<double> numbers(const std::string& key, const std::vector<double>& def) {
    if (!has(key)) return def;
    const Vec v = vec(key);
    return std::vector<double>(v.data(), v.data() + v.size());
  }
  std::vector<std::string> strings(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) bad(key, "a nonempty array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) bad(key, "a nonempty array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  Box box(const std::string& key, int dim = -1) {
    const json& v = raw(key);
    Box b;
    if (!v.is_array() || v.empty()) bad(key, "an array of [lo, hi] pairs");
    for (const auto& a : v) {
      if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
        bad(key, "an array of [lo, hi] pairs");
      const double lo = a[0].get<double>(), hi = a[1].get<double>();
      if (!(lo < hi)) bad(key, "intervals with lo < hi");
      b.axes.push_back({lo, hi});
    }
    if (dim >= 0 && static_cast<int>(b.axes.size()) != dim) bad(key, fmt::format("{} intervals", dim));
    return b;
  }
  Reader sub(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_object()) bad(key, "an object");
    return Reader(v, at(key));
  }
  std::vector<Reader> list(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) bad(key, "an array of objects");
    std::vector<Reader> out;
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_object()) bad(key, "an array of objects");
      out.emplace_back(v[i], fmt::format("{}[{}]", at(key), i));
    }
    return out;
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw Error(ErrorKind::SchemaError, "unknown field '" + at(it.key()) + "'");
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& what) const {
    throw Error(ErrorKind::SchemaError, "'" + at(key) + "' must be " + what);
  }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Expr parse_expr(const std::string& text, const std::vector<std::string>& vars, const std::string& where) {
  try {
    return Expr::parse(text, vars);
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, where + ": " + e.what());
  }
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

GridConfig read_grid(Reader r) {
  GridConfig g;
  g.names = r.strings("names");
  const json& axes = r.raw("axes");
  if (!axes.is_array() || axes.size() != g.names.size())
    r.fail(fmt::format("'axes' must list {} axes, one per name", g.names.size()));
  for (size_t i = 0; i < axes.size(); ++i) {
    const json& a = axes[i];
    const std::string where = fmt::format("axes[{}]", i);
    if (a.is_array()) {
      std::vector<double> v;
      for (const auto& e : a) {
        if (!e.is_number()) r.fail(where + " must hold numbers");
        v.push_back(e.get<double>());
      }
      if (v.empty()) r.fail(where + " is empty");
      g.axes.push_back(v);
      continue;
    }
    Reader ar(a, r.at(where));
    const bool lin = ar.has("linspace"), cen = ar.has("centers");
    if (lin == cen) ar.fail("expected exactly one of 'linspace' or 'centers'");
    const Vec spec = ar.vec(lin ? "linspace" : "centers", 3);
    const int n = static_cast<int>(spec[2]);
    if (n < 1 || spec[2] != n) ar.fail("the node count must be a positive integer");
    g.axes.push_back(lin ? Grid::linspace(spec[0], spec[1], n) : Grid::centers(spec[0], spec[1], n));
    ar.done();
  }
  r.done();
  return g;
}

FlowOptions read_flow(Reader r) {
  FlowOptions f;
  f.atol = r.pos("atol", f.atol);
  f.rtol = r.pos("rtol", f.rtol);
  f.max_step = r.num("max_step", f.max_step);
  f.max_time = r.num("max_time", f.max_time);
  f.exit_tol = r.pos("exit_tol", f.exit_tol);
  f.tangency_tol = r.pos("tangency_tol", f.tangency_tol);
  f.check_tangency = r.flag("check_tangency", f.check_tangency);
  r.done();
  return f;
}

DetectorConfig read_detector(Reader r) {
  DetectorConfig d;
  d.lambdas = r.numbers("lambdas", d.lambdas);
  if (d.lambdas.size() < 3) r.fail("'lambdas' needs at least 3 values");
  for (double l : d.lambdas)
    if (!(l > 0)) r.fail("'lambdas' must be positive");
  d.eps_sing = r.pos("eps_sing", d.eps_sing);
  d.eps_reg = r.pos("eps_reg", d.eps_reg);
  d.max_residual = r.pos("max_residual", d.max_residual);
  d.floor_rel = r.pos("floor_rel", d.floor_rel);
  r.done();
  return d;
}

ChiOptions read_chi(Reader r, int n1) {
  ChiOptions c;
  if (r.has("x1_box")) c.x1_box = r.box("x1_box", n1);
  c.starts = r.count("starts", c.starts);
  c.tol = r.pos("tol", c.tol);
  r.done();
  return c;
}

void read_geometry(Reader r, GeometryConfig& g) {
  g.model = r.choice("model", g.model, {"plane", "flat_disk", "sphere", "minkowski", "custom"});
  const int def_dim = g.model == "minkowski" ? 3 : 2;
  g.dim = r.count("dim", def_dim);
  if (g.model != "custom" && g.dim != def_dim) r.fail(fmt::format("model '{}' has dim {}", g.model, def_dim));
  g.radius = r.pos("radius", g.radius);
  g.time_half = r.pos("time_half", g.time_half);
  g.t_max = r.pos("t_max", g.t_max);
  g.family = r.choice("family", "light_rays", {"light_rays", "null_rays"});
  const auto xv = indexed_names("x", g.dim);
  if (r.has("symbol")) {
    g.symbol = r.str("symbol");
    parse_expr(g.symbol, phase_space_names(g.dim), r.at("symbol"));
  }
  if (r.has("boundary")) {
    g.boundary = r.str("boundary");
    parse_expr(g.boundary, xv, r.at("boundary"));
  }
  if (r.has("box")) g.box = r.box("box", g.dim);
  else if (g.model == "custom") r.fail("model 'custom' needs 'box'");
  else g.box = cube(g.dim, -std::max(g.radius, 1.0) * 1.5, std::max(g.radius, 1.0) * 1.5);
  if (g.model == "custom" && (g.symbol.empty() || g.boundary.empty())) r.fail("model 'custom' needs 'symbol' and 'boundary'");
  if (r.has("flow")) g.flow = read_flow(r.sub("flow"));
  r.done();
}

void read_transform(Reader r, Scenario& sc) {
  TransformConfig& t = sc.transform;
  const GeometryConfig& g = sc.geometry;
  t.kind = r.choice("kind", t.kind, {"euclidean_radon", "geodesic_xray", "null_bichar", "generic", "codim_k_radon"});
  t.per_unit = r.pos("per_unit", t.per_unit);
  t.rule = r.choice("rule", "gauss_legendre", {"gauss_legendre", "midpoint"}) == "midpoint" ? QuadRule::Midpoint
                                                                                             : QuadRule::GaussLegendre;
  t.line_coordinates = r.flag("line_coordinates", false);
  if (r.has("grid")) t.grid = read_grid(r.sub("grid"));
  else if (sc.task == "forward") r.fail("task 'forward' needs 'grid'");

  const bool rays = t.kind == "geodesic_xray" || t.kind == "null_bichar";
  if (t.kind == "euclidean_radon" && (g.dim != 2 || (g.model != "plane" && g.model != "flat_disk")))
    r.fail("'euclidean_radon' needs the plane or flat_disk model");
  if (rays && g.model == "plane") r.fail("ray transforms need a model with a boundary");
  if (t.line_coordinates && g.model != "flat_disk") r.fail("'line_coordinates' needs the flat_disk model");
  if (t.kind == "geodesic_xray" && g.model == "minkowski") r.fail("Minkowski rays are null bicharacteristics");

  if (r.has("graph")) {
    Reader gr = r.sub("graph");
    GraphConfig gc;
    gc.phi = gr.strings("phi");
    gc.N = gr.count("N", 2);
    gc.n1 = gr.count("n1", 1);
    if (gr.has("zsolve")) {
      gc.zsolve.clear();
      const Vec zs = gr.vec("zsolve", static_cast<int>(gc.phi.size()));
      for (int i = 0; i < zs.size(); ++i) gc.zsolve.push_back(static_cast<int>(zs[i]));
    }
    gc.amplitude = gr.str("amplitude", "1");
    gr.done();
    try {
      gc.build();
    } catch (const Error& e) {
      throw Error(e.kind(), r.at("graph") + ": " + e.what());
    }
    t.graph = gc;
  }
  if (r.has("defining")) {
    Reader dr = r.sub("defining");
    DefiningConfig d;
    d.b = dr.strings("b");
    d.k = static_cast<int>(d.b.size());
    d.N = dr.count("N", d.k + 1);
    if (d.N <= d.k) dr.fail("'N' must exceed the number of defining functions");
    for (const auto& e : d.b)
      parse_expr(e, concat(indexed_names("x", g.dim), indexed_names("z", d.N - d.k)), dr.at("b"));
    dr.done();
    t.defining = d;
  }
  if (t.kind == "codim_k_radon" && !t.defining) r.fail("'codim_k_radon' needs 'defining'");
  if (r.has("z_box")) t.z_box = r.box("z_box");

  int N = 2;
  if (t.kind == "codim_k_radon") N = t.defining->N;
  else if (t.kind == "generic" && t.graph) N = t.graph->N;
  else if (!t.grid.names.empty()) N = static_cast<int>(t.grid.names.size());
  if (!t.grid.names.empty() && static_cast<int>(t.grid.names.size()) != N)
    r.fail(fmt::format("'grid' has {} axes but the transform has {} parameters", t.grid.names.size(), N));

  if (r.has("start")) {
    t.start = r.strings("start");
    if (static_cast<int>(t.start.size()) != 2 * g.dim) r.fail(fmt::format("'start' needs {} expressions", 2 * g.dim));
    for (const auto& e : t.start) parse_expr(e, indexed_names("z", N), r.at("start"));
  }
  if (r.has("domain")) t.domain = r.box("domain", N);
  if (g.model == "custom" && rays && (t.start.empty() || t.domain.axes.empty()))
    r.fail("ray transforms on the custom model need 'start' and 'domain'");
  t.kappa = r.str("kappa", "1");
  parse_expr(t.kappa, concat(indexed_names("z", N), indexed_names("x", g.dim)), r.at("kappa"));
  r.done();
}

void read_field(Reader r, Scenario& sc) {
  FieldConfig f;
  const int n = sc.geometry.dim;
  const bool e = r.has("expr"), gfile = r.has("grid_file");
  if (e == gfile) r.fail("expected exactly one of 'expr' or 'grid_file'");
  if (e) {
    f.expr = r.str("expr");
    parse_expr(f.expr, indexed_names("x", n), r.at("expr"));
    f.support = r.box("support", n);
    if (r.has("level")) {
      f.level = r.str("level");
      parse_expr(f.level, indexed_names("x", n), r.at("level"));
    }
  } else {
    f.grid_file = r.str("grid_file");
    const auto p = sc.base_dir / f.grid_file;
    if (!std::filesystem::exists(p)) throw Error(ErrorKind::SchemaError, "'" + r.at("grid_file") + "': no such file " + p.string());
  }
  r.done();
  sc.field = f;
}

void read_bolker(Reader r, Scenario& sc) {
  BolkerTask& b = sc.bolker;
  const std::string m = r.choice("method", "auto", {"auto", "graph", "defining", "fiber_hessian", "ray_variation"});
  b.method = m == "graph" ? ImmersionMethod::Graph
           : m == "defining" ? ImmersionMethod::Defining
           : m == "fiber_hessian" ? ImmersionMethod::FiberHessian
           : m == "ray_variation" ? ImmersionMethod::RayVariation
                                  : ImmersionMethod::Auto;
  b.lo = r.pos("inconclusive_lo", b.lo);
  b.hi = r.pos("inconclusive_hi", b.hi);
  if (b.hi < b.lo) r.fail("'inconclusive_hi' must be >= 'inconclusive_lo'");
  b.injectivity_samples = r.count("injectivity_samples", b.injectivity_samples);
  b.injectivity_threshold = r.pos("injectivity_threshold", b.injectivity_threshold);
  b.pvs_seeds = r.count("pvs_seeds", b.pvs_seeds);
  const bool rays = sc.transform.kind == "geodesic_xray" || sc.transform.kind == "null_bichar";
  for (Reader pr : r.list("probes")) {
    BolkerProbe p;
    p.label = pr.str("label", "");
    p.z = pr.vec("z");
    if (rays) {
      p.t = pr.num("t");
      const json& eta = pr.raw("eta");
      if (eta.is_string()) {
        if (eta.get<std::string>() != "xi") pr.fail("'eta' must be an array or the string \"xi\"");
        p.eta_is_xi = true;
      } else {
        p.eta = pr.vec("eta", sc.geometry.dim);
      }
    } else {
      p.x = pr.vec("x", sc.geometry.dim);
      p.coeffs = pr.vec("coeffs");
    }
    pr.done();
    b.probes.push_back(p);
  }
  if (b.probes.empty()) r.fail("'probes' is empty");
  r.done();
}

void read_wavefront(Reader r, Scenario& sc) {
  WavefrontTask& w = sc.wavefront;
  w.base = read_grid(r.sub("base"));
  if (static_cast<int>(w.base.names.size()) != sc.geometry.dim) r.fail("'base' must have one axis per coordinate");
  w.directions = r.count("directions", w.directions);
  w.magnitude = r.pos("magnitude", w.magnitude);
  if (r.has("detector")) w.detector = read_detector(r.sub("detector"));
  r.done();
}

CriticalOptions read_critical(Reader r, int n1) {
  CriticalOptions c;
  c.homotopy_steps = r.count("homotopy_steps", c.homotopy_steps);
  c.max_newton = r.count("max_newton", c.max_newton);
  c.newton_tol = r.pos("newton_tol", c.newton_tol);
  c.hess_tol = r.pos("hess_tol", c.hess_tol);
  c.seeds = r.count("seeds", c.seeds, 0);
  c.seed_radius = r.pos("seed_radius", c.seed_radius);
  c.dx = r.pos("dx", c.dx);
  if (r.has("chi")) c.chi = read_chi(r.sub("chi"), n1);
  r.done();
  return c;
}

void read_phase(Reader r, Scenario& sc) {
  PhaseTask& p = sc.phase;
  const AnalyticGraph g = sc.transform.graph ? sc.transform.graph->build() : AnalyticGraph::slope_intercept();
  if (r.has("points"))
    for (Reader pr : r.list("points")) {
      PhasePointConfig c;
      c.v1 = pr.vec("v1", g.N());
      c.v2 = pr.vec("v2", g.N());
      c.x = pr.vec("x", g.n());
      pr.done();
      p.points.push_back(c);
    }
  if (r.has("random")) {
    Reader rr = r.sub("random");
    p.random_count = rr.count("count", 20);
    p.deltas = rr.numbers("deltas", {});
    p.z_range = rr.pos("z_range", p.z_range);
    p.x_range = rr.pos("x_range", p.x_range);
    rr.done();
  }
  if (p.points.empty() && p.random_count == 0) r.fail("expected 'points' or 'random'");
  p.lambdas = r.numbers("lambdas", {});
  for (double l : p.lambdas)
    if (!(l > 0)) r.fail("'lambdas' must be positive");
  if (r.has("critical")) p.critical = read_critical(r.sub("critical"), g.n1());
  p.critical.rng_seed = static_cast<unsigned>(sc.seed);
  p.critical.chi.seed = static_cast<unsigned>(sc.seed);
  if (r.has("kernel")) {
    Reader kr = r.sub("kernel");
    p.kernel.window = kr.pos("window", p.kernel.window);
    p.kernel.min_per_unit = kr.pos("min_per_unit", p.kernel.min_per_unit);
    kr.done();
  }
  r.done();
}

void read_recover(Reader r, Scenario& sc) {
  RecoverTask& t = sc.recover;
  if (sc.geometry.model != "flat_disk") r.fail("task 'recover' needs the flat_disk model");
  t.F = r.str("F");
  parse_expr(t.F, indexed_names("x", 2), r.at("F"));
  t.s_min = r.num("s_min");
  t.s_max = r.num("s_max");
  if (!(t.s_min < t.s_max)) r.fail("'s_min' must be below 's_max'");
  t.region = r.has("region") ? r.box("region", 2) : sc.geometry.box;
  t.center = r.has("center") ? r.vec("center", 2) : Vec::Zero(2);
  if (r.has("data")) {
    t.data = r.str("data");
    parse_expr(t.data, indexed_names("z", 2), r.at("data"));
  } else if (!sc.field) {
    r.fail("expected 'data' or a top-level 'field'");
  }
  LayerStripOptions& o = t.strip;
  o.s_start = r.num("s_start", o.s_start);
  o.step = r.pos("step", o.step);
  o.min_step_frac = r.pos("min_step_frac", o.min_step_frac);
  o.tangency_points = r.count("tangency_points", o.tangency_points);
  o.local_radius = r.pos("local_radius", o.local_radius);
  o.local_samples = r.count("local_samples", o.local_samples, 2);
  o.covector_length = r.pos("covector_length", o.covector_length);
  if (r.has("tangent")) {
    Reader tr = r.sub("tangent");
    o.tangent.delta = tr.pos("delta", o.tangent.delta);
    o.tangent.window_samples = tr.count("window_samples", o.tangent.window_samples, 2);
    o.tangent.pvs_seeds = tr.count("pvs_seeds", o.tangent.pvs_seeds);
    tr.done();
  }
  if (r.has("detector")) o.detector = read_detector(r.sub("detector"));
  if (r.has("foliation")) {
    Reader fr = r.sub("foliation");
    t.foliation.levels = fr.count("levels", t.foliation.levels);
    t.foliation.per_level = fr.count("per_level", t.foliation.per_level);
    t.foliation.margin = fr.pos("margin", t.foliation.margin);
    t.foliation.pvs_seeds = fr.count("pvs_seeds", t.foliation.pvs_seeds);
    fr.done();
  }
  r.done();
}

Expr expr_of(const std::string& text, const std::vector<std::string>& vars) { return Expr::parse(text, vars); }

ChartGeometry custom_chart(const GeometryConfig& g) {
  ChartGeometry c;
  c.dim = g.dim;
  c.box = g.box;
  const Expr rho = expr_of(g.boundary, indexed_names("x", g.dim));
  std::vector<Expr> grad;
  for (int i = 0; i < g.dim; ++i) grad.push_back(rho.diff(i));
  c.boundary = [rho](const Vec& x) { return rho.eval(x); };
  c.boundary_grad = [grad](const Vec& x) {
    Vec v(static_cast<int>(grad.size()));
    for (size_t i = 0; i < grad.size(); ++i) v[static_cast<int>(i)] = grad[i].eval(x);
    return v;
  };
  return c;
}

Kappa build_kappa(const Scenario& sc, int N) {
  const Expr k = expr_of(sc.transform.kappa, concat(indexed_names("z", N), indexed_names("x", sc.geometry.dim)));
  double c = 0;
  if (k.is_constant(&c) && c == 1.0) return nullptr;
  return [k](const Vec& z, const Vec& x) {
    Vec zx(z.size() + x.size());
    zx << z, x;
    return k.eval(zx);
  };
}

Fibration ray_fibration(const RayFamily& rays) {
  Fibration f;
  f.N = rays.N;
  f.n = rays.chart.dim;
  f.k = f.n - 1;
  f.rays = rays;
  f.x_box = rays.chart.box;
  return f;
}

Fibration build_fibration(const Scenario& sc, std::mt19937_64& rng) {
  const TransformConfig& t = sc.transform;
  const GeometryConfig& g = sc.geometry;
  if (t.kind == "geodesic_xray" || t.kind == "null_bichar") return ray_fibration(build_rays(sc));
  if (t.kind == "codim_k_radon") {
    const DefiningConfig& d = *t.defining;
    const int m = d.N - d.k;
    const auto vars = concat(indexed_names("x", g.dim), indexed_names("z", m));
    std::vector<Expr> b, bx, bz;
    for (const auto& s : d.b) {
      const Expr e = expr_of(s, vars);
      b.push_back(e);
      for (int i = 0; i < g.dim; ++i) bx.push_back(e.diff(i));
      for (int i = 0; i < m; ++i) bz.push_back(e.diff(g.dim + i));
    }
    auto pack = [](const Vec& x, const Vec& zp) {
      Vec v(x.size() + zp.size());
      v << x, zp;
      return v;
    };
    DefiningMap dm;
    const int n = g.dim, k = d.k;
    dm.b = [b, pack](const Vec& x, const Vec& zp) {
      const Vec v = pack(x, zp);
      Vec out(static_cast<int>(b.size()));
      for (size_t i = 0; i < b.size(); ++i) out[static_cast<int>(i)] = b[i].eval(v);
      return out;
    };
    dm.b_x = [bx, pack, n, k](const Vec& x, const Vec& zp) {
      const Vec v = pack(x, zp);
      Mat J(k, n);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) J(i, j) = bx[i * n + j].eval(v);
      return J;
    };
    dm.b_zp = [bz, pack, m, k](const Vec& x, const Vec& zp) {
      const Vec v = pack(x, zp);
      Mat J(k, m);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < m; ++j) J(i, j) = bz[i * m + j].eval(v);
      return J;
    };
    Box zb = t.z_box.axes.empty() ? cube(d.N, -1, 1) : t.z_box;
    std::uniform_real_distribution<double> U(0, 1);
    std::vector<std::pair<Vec, Vec>> samples;
    for (int s = 0; s < 16; ++s) {
      Vec x(n), zp(m);
      for (int i = 0; i < n; ++i) x[i] = g.box.axes[i].first + U(rng) * (g.box.axes[i].second - g.box.axes[i].first);
      for (int i = 0; i < m; ++i) zp[i] = zb.axes[i].first + U(rng) * (zb.axes[i].second - zb.axes[i].first);
      samples.push_back({x, zp});
    }
    return from_defining_function(dm, n, d.N, d.k, g.box, zb, samples);
  }
  if (t.graph) {
    const Box zb = t.z_box.axes.empty() ? cube(t.graph->N, -3, 3) : t.z_box;
    return t.graph->build().fibration(g.box, zb);
  }
  double half = 0;
  for (const auto& a : g.box.axes) half = std::max({half, std::abs(a.first), std::abs(a.second)});
  return radon_fibration(half * std::sqrt(2.0));
}

json read_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string("invalid JSON: ") + e.what());
  }
}

json parse_string_json(const std::string& s) { return json::parse(s); }

// Random incidence (v, x0, eta) of a graph fibration.
struct Incidence {
  Vec v1, v2, x, eta;
};

Incidence random_incidence(const AnalyticGraph& g, const PhaseTask& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  Incidence c;
  c.v1 = Vec(g.N());
  for (int i = 0; i < g.N(); ++i) c.v1[i] = p.z_range * U(rng);
  Vec x1(g.n1());
  for (int i = 0; i < g.n1(); ++i) x1[i] = p.x_range * U(rng);
  Vec e2(g.k());
  for (int i = 0; i < g.k(); ++i) e2[i] = U(rng);
  if (e2.norm() < 1e-3) e2[0] = 1;
  e2 *= (0.5 + 0.5 * std::abs(U(rng))) / e2.norm();
  const CVec zc = c.v1.cast<cplx>(), xc = x1.cast<cplx>();
  const Mat pz = g.phi_z(zc, xc).real(), px = g.phi_x1(zc, xc).real();
  c.x = Vec(g.n());
  c.x << x1, g.phi(zc, xc).real();
  c.v2 = -pz.transpose() * e2;
  c.eta = Vec(g.n());
  c.eta << -px.transpose() * e2, e2;
  return c;
}

json phase_entry(const AnalyticGraph& g, const PhaseTask& p, const Vec& x, const Vec& v1, const Vec& v2) {
  json e;
  try {
    const PhaseDiagnostics d = critical_point_solve(g, x, v1, v2, p.critical);
    e = parse_string_json(d.to_json());
    if (!p.lambdas.empty()) {
      json ks = json::array();
      for (double l : p.lambdas) {
        const cplx K = kernel_K_lambda(g, x, v1, v2, l, p.kernel);
        ks.push_back({{"lambda", l}, {"K", {K.real(), K.imag()}}});
      }
      e["kernel"] = ks;
    }
  } catch (const Error& err) {
    e["v1"] = io::to_json(v1);
    e["v2"] = io::to_json(v2);
    e["x"] = io::to_json(x);
    e["error"] = err.what();
  }
  return e;
}

RunResult run_forward(const Scenario& sc, const std::filesystem::path& out) {
  const ScalarField f = build_field(sc);
  const auto eval = build_forward(sc, f);
  const Sinogram s = sinogram(eval, sc.transform.grid.grid());
  io::write_text(out / "sinogram.csv", io::sinogram_csv(s));
  double lo = INFINITY, hi = -INFINITY;
  for (double v : s.values)
    if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  RunResult r;
  r.summary = {{"nodes", s.values.size()}, {"failures", s.failures()}, {"min", lo}, {"max", hi}};
  r.outputs = {"sinogram.csv"};
  return r;
}

RunResult run_bolker(const Scenario& sc, const std::filesystem::path& out) {
  std::mt19937_64 rng(sc.seed);
  const Fibration fib = build_fibration(sc, rng);
  const BolkerTask& b = sc.bolker;
  std::optional<Symbol> p;
  if (fib.rays && fib.rays->symbol) p = fib.rays->symbol;
  json probes = json::array();
  int passed = 0;
  for (const BolkerProbe& pr : b.probes) {
    json e;
    e["label"] = pr.label;
    try {
      CanonicalPoint c;
      if (fib.rays) {
        const Trajectory tr = fib.rays->trajectory(pr.z);
        const Vec st = tr.state_at(*pr.t);
        c.z = pr.z;
        c.x = st.head(fib.n);
        c.eta = pr.eta_is_xi ? Vec(st.tail(fib.n)) : pr.eta;
        c.zeta = Vec::Zero(fib.N);
      } else {
        c = canonical_point(fib, pr.z, pr.x, pr.coeffs);
      }
      e["z"] = io::to_json(c.z);
      e["x"] = io::to_json(c.x);
      e["eta"] = io::to_json(c.eta);
      e["zeta"] = io::to_json(c.zeta);
      const ImmersionResult im = immersion_check(fib, c, b.method, b.lo, b.hi);
      e["immersion"] = {{"verdict", verdict_name(im.verdict)}, {"margin", im.margin}, {"method", method_name(im.method)}};
      const InjectivityResult inj = injectivity_check(fib, c, b.injectivity_samples, b.injectivity_threshold);
      json wit = json::array();
      for (const Vec& y : inj.witnesses) wit.push_back(io::to_json(y));
      e["injectivity"] = {{"pass", inj.pass}, {"min_ratio", inj.min_ratio}, {"tested", inj.tested}, {"witnesses", wit}};
      if (p) {
        try {
          const PvsResult v = pvs_membership(*p, c.x, c.eta, b.pvs_seeds, sc.seed);
          e["pvs"] = {{"member", v.member}, {"xi", io::to_json(v.xi)}, {"residual", v.residual}, {"angle", v.angle}};
        } catch (const Error& err) {
          e["pvs"] = {{"error", err.what()}};
        }
      }
      e["pass"] = im.verdict == Verdict::Pass && inj.pass;
    } catch (const Error& err) {
      e["error"] = err.what();
      e["pass"] = false;
    }
    passed += e["pass"].get<bool>();
    probes.push_back(e);
  }
  io::write_text(out / "bolker.json", json{{"probes", probes}}.dump(2) + "\n");
  RunResult r;
  r.summary = {{"probes", b.probes.size()}, {"passed", passed}};
  r.outputs = {"bolker.json"};
  return r;
}

RunResult run_wavefront(const Scenario& sc, const std::filesystem::path& out) {
  const ScalarField f = build_field(sc);
  const WavefrontTask& w = sc.wavefront;
  const WavefrontReport rep = wavefront_scan(f, phase_grid(w.base.grid(), w.directions, w.magnitude), w.detector);
  io::write_text(out / "wavefront.csv", rep.to_csv());
  RunResult r;
  r.summary = {{"points", rep.points.size()},
               {"singular", rep.count(WfClass::Singular)},
               {"regular", rep.count(WfClass::Regular)},
               {"inconclusive", rep.count(WfClass::Inconclusive)}};
  r.outputs = {"wavefront.csv"};
  return r;
}

RunResult run_phase(const Scenario& sc, const std::filesystem::path& out) {
  const AnalyticGraph g = sc.transform.graph ? sc.transform.graph->build() : AnalyticGraph::slope_intercept();
  const PhaseTask& p = sc.phase;
  json points = json::array();
  for (const auto& c : p.points) points.push_back(phase_entry(g, p, c.x, c.v1, c.v2));
  std::mt19937_64 rng(sc.seed);
  json incidences = json::array();
  double worst_spread = 1;
  for (int i = 0; i < p.random_count; ++i) {
    const Incidence c = random_incidence(g, p, rng);
    json inc;
    inc["base"] = phase_entry(g, p, c.x, c.v1, c.v2);
    json disp = json::array();
    double lo = INFINITY, hi = 0;
    for (double d : p.deltas) {
      json e = phase_entry(g, p, c.x + d * c.eta / c.eta.norm(), c.v1, c.v2);
      e["delta"] = d;
      if (e.contains("coercivity")) {
        const double k = e["coercivity"].get<double>();
        lo = std::min(lo, k);
        hi = std::max(hi, k);
      }
      disp.push_back(e);
    }
    inc["displaced"] = disp;
    if (!p.deltas.empty()) {
      const double spread = lo > 0 ? hi / lo : INFINITY;
      inc["coercivity_spread"] = spread;
      worst_spread = std::max(worst_spread, spread);
    }
    incidences.push_back(inc);
  }
  io::write_text(out / "phase.json", json{{"points", points}, {"random", incidences}}.dump(2) + "\n");
  RunResult r;
  r.summary = {{"points", p.points.size()}, {"random", p.random_count}};
  if (!p.deltas.empty()) r.summary["worst_coercivity_spread"] = worst_spread;
  r.outputs = {"phase.json"};
  return r;
}

RunResult run_recover(const Scenario& sc, const std::filesystem::path& out) {
  const RecoverTask& t = sc.recover;
  const Foliation fol = Foliation::parse(t.F, 2, t.s_min, t.s_max, t.region, t.center);
  const RayFamily rays = sc.geometry.symbol.empty()
                             ? flat_disk_cosphere(sc.geometry.radius)
                             : disk_bicharacteristics(Symbol::parse(sc.geometry.symbol, 2), sc.geometry.radius);
  const FoliationReport fr = foliation_validate(fol, *rays.symbol, t.foliation);
  std::function<double(const Vec&)> data;
  if (!t.data.empty()) {
    const Expr d = expr_of(t.data, indexed_names("z", 2));
    data = [d](const Vec& z) { return d.eval(z); };
  } else {
    const ScalarField f = build_field(sc);
    const double pu = sc.transform.per_unit;
    data = [f, pu](const Vec& z) { return euclidean_radon(f, z[0], z[1], pu); };
  }
  const RecoveryReport rep = layer_strip(fol, rays, radon_data(data), t.strip);
  json j;
  j["foliation"] = parse_string_json(fr.to_json());
  j["recovery"] = parse_string_json(rep.to_json());
  io::write_text(out / "recovery.json", j.dump(2) + "\n");
  RunResult r;
  r.summary = {{"foliation_pass", fr.pass},
               {"stop_level", rep.stop_level},
               {"reached_bottom", rep.reached_bottom},
               {"levels", rep.levels.size()}};
  r.outputs = {"recovery.json"};
  return r;
}

}  // namespace

Scenario Scenario::from_json(const json& j, const std::filesystem::path& base_dir) {
  Scenario sc;
  sc.base_dir = base_dir;
  Reader r(j, "");
  sc.task = r.choice("task", "", {"forward", "bolker", "wavefront", "phase-check", "recover"});
  if (r.has("seed")) {
    const long long s = r.integer("seed");
    if (s < 0) r.fail("'seed' must be nonnegative");
    sc.seed = static_cast<unsigned long long>(s);
  }
  read_geometry(r.sub("geometry"), sc.geometry);
  if (r.has("transform")) read_transform(r.sub("transform"), sc);
  else if (sc.task == "forward" || sc.task == "bolker") throw Error(ErrorKind::SchemaError, "missing field 'transform'");
  if (r.has("field")) read_field(r.sub("field"), sc);
  else if (sc.task == "forward" || sc.task == "wavefront") throw Error(ErrorKind::SchemaError, "missing field 'field'");
  const std::string params = "params";
  if (sc.task == "bolker") read_bolker(r.sub(params), sc);
  else if (sc.task == "wavefront") read_wavefront(r.sub(params), sc);
  else if (sc.task == "phase-check") read_phase(r.sub(params), sc);
  else if (sc.task == "recover") read_recover(r.sub(params), sc);
  else if (r.has(params)) r.sub(params).done();
  r.done();
  return sc;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  const json j = read_json_text(io::read_text(path));
  return from_json(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

ScalarField build_field(const Scenario& sc) {
  if (!sc.field) throw Error(ErrorKind::SchemaError, "missing field 'field'");
  const FieldConfig& f = *sc.field;
  const int n = sc.geometry.dim;
  if (!f.grid_file.empty()) {
    const io::GridFile g = io::read_grid_file(sc.base_dir / f.grid_file);
    if (static_cast<int>(g.shape.size()) != n)
      throw Error(ErrorKind::SchemaError, fmt::format("'field.grid_file' has {} axes, geometry has {}", g.shape.size(), n));
    return io::grid_field(g);
  }
  const Expr e = expr_of(f.expr, indexed_names("x", n));
  ScalarFn smooth = [e](const Vec& x) { return e.eval(x); };
  if (f.level.empty()) return ScalarField::from_fn(smooth, f.support);
  const Expr l = expr_of(f.level, indexed_names("x", n));
  return ScalarField::indicator([l](const Vec& x) { return l.eval(x); }, f.support, smooth);
}

RayFamily build_rays(const Scenario& sc) {
  const GeometryConfig& g = sc.geometry;
  const TransformConfig& t = sc.transform;
  RayFamily r;
  if (g.model == "flat_disk") {
    if (!g.symbol.empty()) r = disk_bicharacteristics(Symbol::parse(g.symbol, 2), g.radius);
    else r = t.kind == "null_bichar" ? flat_disk_cosphere(g.radius) : flat_disk_geodesics(g.radius);
  } else if (g.model == "sphere") {
    r = sphere_geodesics(g.t_max);
  } else if (g.model == "minkowski") {
    r = g.family == "null_rays" ? minkowski_null_rays(g.radius, g.time_half) : minkowski_light_rays(g.radius, g.time_half);
  } else if (g.model == "custom") {
    r.symbol = Symbol::parse(g.symbol, g.dim);
    r.field = hamiltonian_vector_field(*r.symbol);
    r.chart = custom_chart(g);
    r.N = static_cast<int>(t.domain.axes.size());
    r.domain = t.domain;
    std::vector<Expr> st;
    for (const auto& s : t.start) st.push_back(expr_of(s, indexed_names("z", r.N)));
    r.start = [st](const Vec& z) {
      Vec y(static_cast<int>(st.size()));
      for (size_t i = 0; i < st.size(); ++i) y[static_cast<int>(i)] = st[i].eval(z);
      return y;
    };
  } else {
    throw Error(ErrorKind::SchemaError, "model '" + g.model + "' has no ray family");
  }
  if (g.flow.max_step > 0) r.flow.max_step = g.flow.max_step;
  if (g.flow.max_time > 0) r.flow.max_time = g.flow.max_time;
  r.flow.atol = g.flow.atol;
  r.flow.rtol = g.flow.rtol;
  r.flow.exit_tol = g.flow.exit_tol;
  r.flow.tangency_tol = g.flow.tangency_tol;
  r.flow.check_tangency = g.flow.check_tangency;
  return r;
}

std::function<double(const Vec& z)> build_forward(const Scenario& sc, const ScalarField& f) {
  const TransformConfig& t = sc.transform;
  const double pu = t.per_unit;
  const QuadRule rule = t.rule;
  if (t.kind == "euclidean_radon") {
    const Kappa k = build_kappa(sc, 2);
    return [f, pu, rule, k](const Vec& z) { return euclidean_radon(f, z[0], z[1], pu, k, rule); };
  }
  if (t.kind == "geodesic_xray" || t.kind == "null_bichar") {
    const RayFamily rays = build_rays(sc);
    const Kappa k = build_kappa(sc, rays.N);
    if (t.line_coordinates) {
      const double R = sc.geometry.radius;
      return [rays, k, f, pu, rule, R](const Vec& z) {
        if (std::abs(z[1]) >= R) return 0.0;
        return ray_forward(rays, k, f, disk_params_from_line(z[0], z[1], R), pu, rule);
      };
    }
    return [rays, k, f, pu, rule](const Vec& z) { return ray_forward(rays, k, f, z, pu, rule); };
  }
  std::mt19937_64 rng(sc.seed);
  TransformSpec spec;
  spec.fibration = build_fibration(sc, rng);
  spec.kind = t.kind == "generic" ? TransformKind::Generic : TransformKind::CodimKRadon;
  spec.per_unit = pu;
  spec.rule = rule;
  const Kappa k = build_kappa(sc, spec.fibration.N);
  if (k) {
    const auto base = spec.fibration.kappa;
    spec.fibration.kappa = [k, base](const Vec& z, const Vec& x) { return k(z, x) * (base ? base(z, x) : 1.0); };
  }
  return [spec, f](const Vec& z) { return forward(spec, f, z); };
}

RunResult run_scenario(const Scenario& sc, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  if (sc.task == "forward") return run_forward(sc, out_dir);
  if (sc.task == "bolker") return run_bolker(sc, out_dir);
  if (sc.task == "wavefront") return run_wavefront(sc, out_dir);
  if (sc.task == "phase-check") return run_phase(sc, out_dir);
  return run_recover(sc, out_dir);
}

}  // namespace dfib
