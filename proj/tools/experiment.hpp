#pragma once

// Experiment configuration for the mheat runner: TOML in, TOML out.
//
// Grids may be written as explicit arrays or as {min, max, count, spacing};
// serialisation always expands them, so a round trip is a fixed point after
// the first write.

#include "mheat/verify.hpp"

#include <toml.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mheat::cli {

/// Invalid configuration; `line` is 0 when no source position applies.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& file, int line, const std::string& msg)
      : std::runtime_error(format(file, line, msg)), line_(line), message_(msg) {}
  int line() const { return line_; }
  const std::string& message() const { return message_; }

 private:
  static std::string format(const std::string& file, int line, const std::string& msg) {
    std::ostringstream os;
    os << (file.empty() ? "<config>" : file);
    if (line > 0) os << ":" << line;
    os << ": " << msg;
    return os.str();
  }
  int line_;
  std::string message_;
};

struct ManifoldSpec {
  std::string kind = "euclidean";  // euclidean | torus | sphere | hyperbolic
  int dim = 2;
  double scale = 1.0;

  Manifold build() const {
    if (kind == "euclidean") return Manifold::euclidean(dim);
    if (kind == "torus") return Manifold::torus(dim);
    if (kind == "sphere") return Manifold::sphere(dim, scale);
    if (kind == "hyperbolic") return Manifold::hyperbolic(dim, scale);
    throw std::invalid_argument("unknown manifold kind " + kind);
  }
};

/// Built-in test function; points are normal coordinates at the model origin.
struct FieldSpec {
  std::string kind = "gaussian-bump";
  int index = 0;
  double phase = 0.0;
  double width = 1.0;
  double radius = 1.0;
  double value = 1.0;
  std::vector<double> centre;  // empty: origin
};

struct EstimateSpec {
  std::string quantity = "grad";  // pt | grad | hess | green-hess
  FieldSpec field;
  std::vector<std::vector<double>> points;  // empty: the origin
  double t = 0.5;
  std::vector<std::vector<int>> components;  // frame indices; empty: all (i <= j for Hessians)
  std::string mode = "mixed";                // bismut | mixed
  double sigma = 1.0;
  double theta = 0.0;
  int time_nodes = 40;
  int steps_per_node = 200;
};

struct SimulateSpec {
  double t = 1.0;
  int paths = 4;
  std::vector<double> start;  // empty: origin
  bool transport = true;
};

struct CzSpec {
  std::string family = "random";  // random | harmonic (S^2, all Y_lm up to degree)
  int size = 20;
  int degree = 8;
  std::vector<double> p{2.0};
  double sigma = 1.0;
  std::string mode = "exact-spectral";  // exact-spectral | mc
  int resolution = 0;
  bool refine = true;
  int mc_nodes = 3;
};

struct KatoSpec {
  std::string potential = "curvature";  // zero | constant | curvature | inverse-distance
  double value = 1.0;
  double cap = 1e6;
  std::vector<double> t_list{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int n_points = 5;
  int steps = 100;
};

struct GaffneySpec {
  double p = 2.0;
  std::vector<double> e_centre, f_centre;  // empty: origin and its antipode
  double e_radius = 0.3;
  double f_radius = 0.3;
};

struct SemigroupSpec {
  FieldSpec field;
  int n_points = 5;
  std::vector<std::vector<double>> points;  // empty: sample_points(n_points)
};

struct ExperimentConfig {
  ManifoldSpec manifold;
  std::string kind = "verify";  // simulate | estimate | verify | czscan
  std::string check = "kernel-bounds";
  std::uint64_t seed = 1;
  std::int64_t n_paths = 10000;
  double h = 0.0;
  std::string output = "mheat-out";
  BoundCheckConfig bounds;
  EstimateSpec estimate;
  SimulateSpec simulate;
  CzSpec czscan;
  KatoSpec kato;
  GaffneySpec gaffney;
  SemigroupSpec semigroup;
};

inline const std::vector<std::string>& manifold_kinds() {
  static const std::vector<std::string> v{"euclidean", "torus", "sphere", "hyperbolic"};
  return v;
}
inline const std::vector<std::string>& field_kinds() {
  static const std::vector<std::string> v{"constant",  "coordinate", "coordinate-squared", "norm-squared",
                                          "sine",      "cosine",     "gaussian-bump",      "compact-bump"};
  return v;
}
inline const std::vector<std::string>& potential_kinds() {
  static const std::vector<std::string> v{"zero", "constant", "curvature", "inverse-distance"};
  return v;
}
inline const std::vector<std::string>& check_kinds() {
  static const std::vector<std::string> v{"kernel-bounds", "weighted-l2", "gaffney",
                                          "semigroup-bounds", "kato", "czscan"};
  return v;
}

inline bool one_of(const std::string& s, const std::vector<std::string>& v) {
  for (const auto& x : v)
    if (x == s) return true;
  return false;
}

// ------------------------------------------------------------- geometry glue

/// exp_o(sum c_i e_i) in the origin frame; flat models read c as chart coordinates.
inline Point point_from(const Manifold& m, const std::vector<double>& c) {
  Point o = m.origin();
  if (c.empty()) return o;
  if (int(c.size()) != m.dim()) throw std::invalid_argument("point needs " + std::to_string(m.dim()) + " coordinates");
  Frame fr = m.frame_at(o);
  Vec u = Vec::Zero(m.ambient_dim());
  for (int i = 0; i < m.dim(); ++i) u += c[std::size_t(i)] * fr.col(i);
  return m.exp(o, u);
}

/// Antipode of the origin on compact models.
inline Point antipode(const Manifold& m) {
  Point o = m.origin();
  if (m.kind() == ModelKind::sphere) return Point{-o.coords};
  if (m.kind() == ModelKind::torus) return Point{Vec::Constant(m.dim(), kPi)};
  throw std::invalid_argument("antipode: compact models only");
}

inline ScalarField build_field(const Manifold& m, const FieldSpec& s) {
  if (s.kind == "constant") return fields::constant(m, s.value);
  if (s.kind == "coordinate") return fields::coordinate(m, s.index);
  if (s.kind == "coordinate-squared") return fields::coordinate_squared(m, s.index);
  if (s.kind == "norm-squared") return fields::norm_squared(m);
  if (s.kind == "sine") return fields::sine(m, s.index, s.phase);
  if (s.kind == "cosine") return fields::cosine(m, s.index);
  if (s.kind == "gaussian-bump") return fields::gaussian_bump(m, point_from(m, s.centre), s.width);
  if (s.kind == "compact-bump") return fields::compact_bump(m, point_from(m, s.centre), s.radius);
  throw std::invalid_argument("unknown field kind " + s.kind);
}

inline ScalarField build_potential(const Manifold& m, const KatoSpec& s) {
  if (s.potential == "zero") return potentials::zero(m);
  if (s.potential == "constant") return potentials::constant(m, s.value);
  if (s.potential == "curvature") return potentials::curvature(m);
  if (s.potential == "inverse-distance") return potentials::inverse_distance(m, s.cap);
  throw std::invalid_argument("unknown potential " + s.potential);
}

// ------------------------------------------------------------------ parsing

namespace detail {

inline int line_of(const toml::node& n) { return int(n.source().begin.line); }

class Reader {
 public:
  Reader(const toml::table& root, std::string file) : root_(root), file_(std::move(file)) {}

  [[noreturn]] void fail(int line, const std::string& msg) const { throw ConfigError(file_, line, msg); }

  /// Section table, or nullptr; marks `keys` as the accepted key set.
  const toml::table* section(const std::string& name, std::set<std::string> keys) {
    known_sections_.insert(name);
    const toml::node* n = root_.get(name);
    if (!n) return nullptr;
    const toml::table* t = n->as_table();
    if (!t) fail(line_of(*n), "[" + name + "] must be a table");
    for (const auto& [k, v] : *t)
      if (!keys.count(std::string(k.str())))
        fail(line_of(v), "unknown key '" + std::string(k.str()) + "' in [" + name + "]");
    return t;
  }

  void check_sections() const {
    for (const auto& [k, v] : root_)
      if (!known_sections_.count(std::string(k.str())))
        fail(line_of(v), "unknown section [" + std::string(k.str()) + "]");
  }

  const toml::node* node(const toml::table* t, const std::string& sec, const std::string& key) {
    if (!t) return nullptr;
    const toml::node* n = t->get(key);
    if (n) lines_[sec + "." + key] = line_of(*n);
    return n;
  }

  void get(const toml::table* t, const std::string& sec, const std::string& key, double& out) {
    if (const toml::node* n = node(t, sec, key)) out = number(*n, sec + "." + key);
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key, int& out) {
    if (const toml::node* n = node(t, sec, key)) out = int(integer(*n, sec + "." + key, -(1LL << 31), (1LL << 31) - 1));
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key, std::int64_t& out) {
    if (const toml::node* n = node(t, sec, key)) out = integer(*n, sec + "." + key, INT64_MIN, INT64_MAX);
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key, std::uint64_t& out) {
    if (const toml::node* n = node(t, sec, key)) out = std::uint64_t(integer(*n, sec + "." + key, 0, INT64_MAX));
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key, bool& out) {
    if (const toml::node* n = node(t, sec, key)) {
      if (!n->is_boolean()) fail(line_of(*n), sec + "." + key + " must be a boolean");
      out = n->as_boolean()->get();
    }
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key, std::string& out) {
    if (const toml::node* n = node(t, sec, key)) {
      if (!n->is_string()) fail(line_of(*n), sec + "." + key + " must be a string");
      out = n->as_string()->get();
    }
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key, std::vector<double>& out) {
    if (const toml::node* n = node(t, sec, key)) out = grid(*n, sec + "." + key);
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key,
           std::vector<std::vector<double>>& out) {
    if (const toml::node* n = node(t, sec, key)) {
      const toml::array* a = n->as_array();
      if (!a) fail(line_of(*n), sec + "." + key + " must be an array of arrays");
      out.clear();
      for (const auto& e : *a) out.push_back(numbers(e, sec + "." + key));
    }
  }
  void get(const toml::table* t, const std::string& sec, const std::string& key,
           std::vector<std::vector<int>>& out) {
    if (const toml::node* n = node(t, sec, key)) {
      const toml::array* a = n->as_array();
      if (!a) fail(line_of(*n), sec + "." + key + " must be an array");
      out.clear();
      for (const auto& e : *a) {
        std::vector<int> row;
        if (const toml::array* r = e.as_array()) {
          for (const auto& x : *r) row.push_back(int(integer(x, sec + "." + key, 0, kMaxDim)));
        } else {
          row.push_back(int(integer(e, sec + "." + key, 0, kMaxDim)));
        }
        out.push_back(row);
      }
    }
  }

  /// Source line of a parsed key, 0 if it was not present.
  int line(const std::string& dotted) const {
    auto it = lines_.find(dotted);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  double number(const toml::node& n, const std::string& key) const {
    if (n.is_floating_point()) return n.as_floating_point()->get();
    if (n.is_integer()) return double(n.as_integer()->get());
    fail(line_of(n), key + " must be a number");
  }
  std::int64_t integer(const toml::node& n, const std::string& key, long long lo, long long hi) const {
    if (!n.is_integer()) fail(line_of(n), key + " must be an integer");
    std::int64_t v = n.as_integer()->get();
    if (v < lo || v > hi) fail(line_of(n), key + " out of range");
    return v;
  }
  std::vector<double> numbers(const toml::node& n, const std::string& key) const {
    const toml::array* a = n.as_array();
    if (!a) fail(line_of(n), key + " must be an array of numbers");
    std::vector<double> v;
    for (const auto& e : *a) v.push_back(number(e, key));
    return v;
  }
  std::vector<double> grid(const toml::node& n, const std::string& key) const {
    if (n.is_array()) return numbers(n, key);
    const toml::table* t = n.as_table();
    if (!t) fail(line_of(n), key + " must be an array or {min, max, count, spacing}");
    double lo = 0, hi = 0;
    std::int64_t count = 0;
    std::string spacing = "linear";
    bool has_lo = false, has_hi = false, has_count = false;
    for (const auto& [k, v] : *t) {
      std::string name(k.str());
      if (name == "min") lo = number(v, key + ".min"), has_lo = true;
      else if (name == "max") hi = number(v, key + ".max"), has_hi = true;
      else if (name == "count") count = integer(v, key + ".count", 1, 1000000), has_count = true;
      else if (name == "spacing") {
        if (!v.is_string()) fail(line_of(v), key + ".spacing must be a string");
        spacing = v.as_string()->get();
      } else {
        fail(line_of(v), "unknown key '" + name + "' in " + key);
      }
    }
    if (!has_lo || !has_hi || !has_count) fail(line_of(n), key + " needs min, max and count");
    if (spacing == "linear") return linspace(lo, hi, int(count));
    if (spacing == "log") {
      if (!(lo > 0 && hi > 0)) fail(line_of(n), key + ": log spacing needs positive bounds");
      return logspace(lo, hi, int(count));
    }
    fail(line_of(n), key + ".spacing must be 'linear' or 'log'");
  }

  const toml::table& root_;
  std::string file_;
  std::set<std::string> known_sections_;
  std::map<std::string, int> lines_;
};

inline void read_field(Reader& r, const toml::table* t, const std::string& sec, FieldSpec& f) {
  r.get(t, sec, "field", f.kind);
  r.get(t, sec, "index", f.index);
  r.get(t, sec, "phase", f.phase);
  r.get(t, sec, "width", f.width);
  r.get(t, sec, "radius", f.radius);
  r.get(t, sec, "value", f.value);
  r.get(t, sec, "centre", f.centre);
}

inline const std::set<std::string> kFieldKeys{"field", "index", "phase", "width", "radius", "value", "centre"};

inline std::set<std::string> with_field(std::set<std::string> s) {
  s.insert(kFieldKeys.begin(), kFieldKeys.end());
  return s;
}

// Maps a BoundCheckConfig::validate message onto the [bounds] key it concerns.
inline std::string bounds_key_for(const std::string& msg) {
  for (const char* k : {"gamma", "beta", "alpha", "sigma", "confidence", "t_grid", "rho_grid", "s_grid"})
    if (msg.find(k) != std::string::npos) return k;
  if (msg.rfind("p ", 0) == 0) return "p";
  return "";
}

}  // namespace detail

/// Parses and validates a configuration; throws ConfigError.
inline ExperimentConfig parse_config(std::string_view text, const std::string& file = "") {
  toml::table root;
  try {
    root = toml::parse(text, file);
  } catch (const toml::parse_error& e) {
    throw ConfigError(file, int(e.source().begin.line), std::string(e.description()));
  }
  ExperimentConfig c;
  detail::Reader r(root, file);

  const auto* man = r.section("manifold", {"kind", "dim", "scale"});
  if (!man) r.fail(0, "missing [manifold] section");
  r.get(man, "manifold", "kind", c.manifold.kind);
  r.get(man, "manifold", "dim", c.manifold.dim);
  r.get(man, "manifold", "scale", c.manifold.scale);

  const auto* ex = r.section("experiment", {"kind", "check", "seed", "n_paths", "h", "output"});
  if (!ex) r.fail(0, "missing [experiment] section");
  r.get(ex, "experiment", "kind", c.kind);
  r.get(ex, "experiment", "check", c.check);
  r.get(ex, "experiment", "seed", c.seed);
  r.get(ex, "experiment", "n_paths", c.n_paths);
  r.get(ex, "experiment", "h", c.h);
  r.get(ex, "experiment", "output", c.output);

  auto& b = c.bounds;
  const auto* bt = r.section("bounds", {"alpha", "beta", "gamma", "sigma", "K", "theta", "p", "t_grid", "rho_grid",
                                        "s_grid", "confidence", "resolution", "refine"});
  r.get(bt, "bounds", "alpha", b.alpha);
  r.get(bt, "bounds", "beta", b.beta);
  r.get(bt, "bounds", "gamma", b.gamma);
  r.get(bt, "bounds", "sigma", b.sigma);
  r.get(bt, "bounds", "K", b.K);
  r.get(bt, "bounds", "theta", b.theta);
  r.get(bt, "bounds", "p", b.p);
  r.get(bt, "bounds", "t_grid", b.t_grid);
  r.get(bt, "bounds", "rho_grid", b.rho_grid);
  r.get(bt, "bounds", "s_grid", b.s_grid);
  r.get(bt, "bounds", "confidence", b.confidence);
  r.get(bt, "bounds", "resolution", b.resolution);
  r.get(bt, "bounds", "refine", b.refine);

  auto& es = c.estimate;
  const auto* et = r.section("estimate", detail::with_field({"quantity", "points", "t", "components", "mode", "sigma",
                                                             "theta", "time_nodes", "steps_per_node"}));
  r.get(et, "estimate", "quantity", es.quantity);
  detail::read_field(r, et, "estimate", es.field);
  r.get(et, "estimate", "points", es.points);
  r.get(et, "estimate", "t", es.t);
  r.get(et, "estimate", "components", es.components);
  r.get(et, "estimate", "mode", es.mode);
  r.get(et, "estimate", "sigma", es.sigma);
  r.get(et, "estimate", "theta", es.theta);
  r.get(et, "estimate", "time_nodes", es.time_nodes);
  r.get(et, "estimate", "steps_per_node", es.steps_per_node);

  const auto* st = r.section("simulate", {"t", "paths", "start", "transport"});
  r.get(st, "simulate", "t", c.simulate.t);
  r.get(st, "simulate", "paths", c.simulate.paths);
  r.get(st, "simulate", "start", c.simulate.start);
  r.get(st, "simulate", "transport", c.simulate.transport);

  auto& cz = c.czscan;
  const auto* ct = r.section("czscan", {"family", "size", "degree", "p", "sigma", "mode", "resolution", "refine",
                                        "mc_nodes"});
  r.get(ct, "czscan", "family", cz.family);
  r.get(ct, "czscan", "size", cz.size);
  r.get(ct, "czscan", "degree", cz.degree);
  if (ct && ct->get("p") && !ct->get("p")->is_array()) {
    double p = 0;
    r.get(ct, "czscan", "p", p);
    cz.p = {p};
  } else {
    r.get(ct, "czscan", "p", cz.p);
  }
  r.get(ct, "czscan", "sigma", cz.sigma);
  r.get(ct, "czscan", "mode", cz.mode);
  r.get(ct, "czscan", "resolution", cz.resolution);
  r.get(ct, "czscan", "refine", cz.refine);
  r.get(ct, "czscan", "mc_nodes", cz.mc_nodes);

  const auto* kt = r.section("kato", {"potential", "value", "cap", "t_list", "n_points", "steps"});
  r.get(kt, "kato", "potential", c.kato.potential);
  r.get(kt, "kato", "value", c.kato.value);
  r.get(kt, "kato", "cap", c.kato.cap);
  r.get(kt, "kato", "t_list", c.kato.t_list);
  r.get(kt, "kato", "n_points", c.kato.n_points);
  r.get(kt, "kato", "steps", c.kato.steps);

  const auto* gt = r.section("gaffney", {"p", "e_centre", "e_radius", "f_centre", "f_radius"});
  r.get(gt, "gaffney", "p", c.gaffney.p);
  r.get(gt, "gaffney", "e_centre", c.gaffney.e_centre);
  r.get(gt, "gaffney", "e_radius", c.gaffney.e_radius);
  r.get(gt, "gaffney", "f_centre", c.gaffney.f_centre);
  r.get(gt, "gaffney", "f_radius", c.gaffney.f_radius);

  const auto* sg = r.section("semigroup", detail::with_field({"n_points", "points"}));
  detail::read_field(r, sg, "semigroup", c.semigroup.field);
  r.get(sg, "semigroup", "n_points", c.semigroup.n_points);
  r.get(sg, "semigroup", "points", c.semigroup.points);

  r.check_sections();

  // ------------------------------------------------------------ validation
  auto bad = [&](const std::string& key, const std::string& msg) { r.fail(r.line(key), key + ": " + msg); };

  if (!one_of(c.manifold.kind, manifold_kinds())) bad("manifold.kind", "unknown manifold '" + c.manifold.kind + "'");
  if (c.manifold.dim < 1 || c.manifold.dim > kMaxDim)
    bad("manifold.dim", "dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
  if ((c.manifold.kind == "sphere" || c.manifold.kind == "hyperbolic") && c.manifold.dim < 2)
    bad("manifold.dim", "curved models need dimension >= 2");
  if (!(c.manifold.scale > 0)) bad("manifold.scale", "scale must be > 0");

  if (!one_of(c.kind, {"simulate", "estimate", "verify", "czscan"}))
    bad("experiment.kind", "kind must be simulate, estimate, verify or czscan");
  if (c.kind == "verify" && !one_of(c.check, check_kinds())) bad("experiment.check", "unknown check '" + c.check + "'");
  if (c.n_paths < 1) bad("experiment.n_paths", "n_paths must be >= 1");
  if (c.h < 0) bad("experiment.h", "h must be >= 0 (0 selects t/200)");
  if (c.output.empty()) bad("experiment.output", "output directory must be non-empty");

  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    std::string key = detail::bounds_key_for(e.what());
    r.fail(key.empty() ? 0 : r.line("bounds." + key), std::string("bounds") + (key.empty() ? "" : "." + key) + ": " +
                                                           e.what());
  }
  if (b.resolution < 0) bad("bounds.resolution", "resolution must be >= 0");
  if (c.kind == "verify" && c.check == "weighted-l2" && !(b.beta < b.alpha))
    bad("bounds.beta", "hessian tail bound needs beta < alpha");

  auto check_field = [&](const FieldSpec& f, const std::string& sec) {
    if (!one_of(f.kind, field_kinds())) bad(sec + ".field", "unknown field '" + f.kind + "'");
    if (f.index < 0 || f.index >= c.manifold.dim) bad(sec + ".index", "coordinate index out of range");
    if (!f.centre.empty() && int(f.centre.size()) != c.manifold.dim)
      bad(sec + ".centre", "centre needs " + std::to_string(c.manifold.dim) + " coordinates");
    if (!(f.width > 0)) bad(sec + ".width", "width must be > 0");
    if (!(f.radius > 0)) bad(sec + ".radius", "radius must be > 0");
  };
  auto check_points = [&](const std::vector<std::vector<double>>& pts, const std::string& key) {
    for (const auto& p : pts)
      if (int(p.size()) != c.manifold.dim) bad(key, "each point needs " + std::to_string(c.manifold.dim) + " coordinates");
  };

  if (c.kind == "estimate") {
    if (!one_of(es.quantity, {"pt", "grad", "hess", "green-hess"}))
      bad("estimate.quantity", "quantity must be pt, grad, hess or green-hess");
    check_field(es.field, "estimate");
    check_points(es.points, "estimate.points");
    if (!(es.t > 0)) bad("estimate.t", "t must be > 0");
    if (!one_of(es.mode, {"bismut", "mixed"})) bad("estimate.mode", "mode must be bismut or mixed");
    if (!(es.sigma > 0)) bad("estimate.sigma", "sigma must be > 0");
    if (es.theta < 0) bad("estimate.theta", "theta must be >= 0");
    if (es.time_nodes < 2) bad("estimate.time_nodes", "time_nodes must be >= 2");
    if (es.steps_per_node < 1) bad("estimate.steps_per_node", "steps_per_node must be >= 1");
    std::size_t want = es.quantity == "grad" ? 1 : 2;
    for (const auto& comp : es.components) {
      if (es.quantity == "pt") bad("estimate.components", "pt has no components");
      if (comp.size() != want) bad("estimate.components", "each component needs " + std::to_string(want) + " indices");
      for (int i : comp)
        if (i >= c.manifold.dim) bad("estimate.components", "frame index out of range");
    }
  }
  if (c.kind == "simulate") {
    if (!(c.simulate.t > 0)) bad("simulate.t", "t must be > 0");
    if (c.simulate.paths < 1) bad("simulate.paths", "paths must be >= 1");
    if (!c.simulate.start.empty() && int(c.simulate.start.size()) != c.manifold.dim)
      bad("simulate.start", "start needs " + std::to_string(c.manifold.dim) + " coordinates");
  }
  bool is_cz = c.kind == "czscan" || (c.kind == "verify" && c.check == "czscan");
  if (is_cz) {
    bool torus = c.manifold.kind == "torus", s2 = c.manifold.kind == "sphere" && c.manifold.dim == 2;
    if (!torus && !s2) bad("manifold.kind", "czscan needs a torus or the 2-sphere");
    if (!one_of(cz.family, {"random", "harmonic"})) bad("czscan.family", "family must be random or harmonic");
    if (cz.family == "harmonic" && !s2) bad("czscan.family", "harmonic family needs the 2-sphere");
    if (cz.size < 1) bad("czscan.size", "size must be >= 1");
    if (cz.degree < 1) bad("czscan.degree", "degree must be >= 1");
    if (cz.p.empty()) bad("czscan.p", "p must be non-empty");
    for (double p : cz.p)
      if (!(p > 1)) bad("czscan.p", "p must be > 1");
    if (!(cz.sigma > 0)) bad("czscan.sigma", "sigma must be > 0");
    if (!one_of(cz.mode, {"exact-spectral", "mc"})) bad("czscan.mode", "mode must be exact-spectral or mc");
    if (cz.resolution < 0) bad("czscan.resolution", "resolution must be >= 0");
  }
  if (c.kind == "verify" && c.check == "kato") {
    if (!one_of(c.kato.potential, potential_kinds())) bad("kato.potential", "unknown potential '" + c.kato.potential + "'");
    if (c.kato.t_list.empty()) bad("kato.t_list", "t_list must be non-empty");
    for (double t : c.kato.t_list)
      if (!(t > 0)) bad("kato.t_list", "times must be > 0");
    if (c.kato.n_points < 1) bad("kato.n_points", "n_points must be >= 1");
    if (c.kato.steps < 1) bad("kato.steps", "steps must be >= 1");
    if (!(c.kato.cap > 0)) bad("kato.cap", "cap must be > 0");
    if (c.n_paths < 1000) bad("experiment.n_paths", "kato needs n_paths >= 1000");
  }
  if (c.kind == "verify" && c.check == "gaffney") {
    if (!(c.gaffney.p >= 2)) bad("gaffney.p", "p must be >= 2");
    if (!(c.gaffney.e_radius > 0)) bad("gaffney.e_radius", "radius must be > 0");
    if (!(c.gaffney.f_radius > 0)) bad("gaffney.f_radius", "radius must be > 0");
    for (const char* k : {"e_centre", "f_centre"}) {
      const auto& v = std::string(k) == "e_centre" ? c.gaffney.e_centre : c.gaffney.f_centre;
      if (!v.empty() && int(v.size()) != c.manifold.dim)
        bad(std::string("gaffney.") + k, "centre needs " + std::to_string(c.manifold.dim) + " coordinates");
    }
    if (c.manifold.kind != "torus" && c.manifold.kind != "sphere")
      bad("manifold.kind", "gaffney needs a compact model");
  }
  if (c.kind == "verify" && c.check == "semigroup-bounds") {
    check_field(c.semigroup.field, "semigroup");
    check_points(c.semigroup.points, "semigroup.points");
    if (c.semigroup.n_points < 1) bad("semigroup.n_points", "n_points must be >= 1");
    if (c.n_paths < 1000) bad("experiment.n_paths", "semigroup-bounds needs n_paths >= 1000");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// ------------------------------------------------------------ serialising

namespace detail {

inline toml::array to_array(const std::vector<double>& v) {
  toml::array a;
  for (double x : v) a.push_back(x);
  return a;
}

inline toml::array to_array(const std::vector<std::vector<double>>& v) {
  toml::array a;
  for (const auto& r : v) a.push_back(to_array(r));
  return a;
}

inline toml::array to_array(const std::vector<std::vector<int>>& v) {
  toml::array a;
  for (const auto& r : v) {
    toml::array row;
    for (int x : r) row.push_back(std::int64_t(x));
    a.push_back(std::move(row));
  }
  return a;
}

inline void write_field(toml::table& t, const FieldSpec& f) {
  t.insert("field", f.kind);
  t.insert("index", std::int64_t(f.index));
  t.insert("phase", f.phase);
  t.insert("width", f.width);
  t.insert("radius", f.radius);
  t.insert("value", f.value);
  t.insert("centre", to_array(f.centre));
}

}  // namespace detail

/// Full TOML form with every default made explicit.
inline toml::table to_toml(const ExperimentConfig& c) {
  using detail::to_array;
  toml::table root;
  root.insert("manifold", toml::table{{"kind", c.manifold.kind},
                                      {"dim", std::int64_t(c.manifold.dim)},
                                      {"scale", c.manifold.scale}});
  root.insert("experiment", toml::table{{"kind", c.kind},
                                        {"check", c.check},
                                        {"seed", std::int64_t(c.seed)},
                                        {"n_paths", c.n_paths},
                                        {"h", c.h},
                                        {"output", c.output}});
  const auto& b = c.bounds;
  root.insert("bounds", toml::table{{"alpha", b.alpha},
                                    {"beta", b.beta},
                                    {"gamma", b.gamma},
                                    {"sigma", b.sigma},
                                    {"K", b.K},
                                    {"theta", b.theta},
                                    {"p", b.p},
                                    {"t_grid", to_array(b.t_grid)},
                                    {"rho_grid", to_array(b.rho_grid)},
                                    {"s_grid", to_array(b.s_grid)},
                                    {"confidence", b.confidence},
                                    {"resolution", std::int64_t(b.resolution)},
                                    {"refine", b.refine}});
  const auto& e = c.estimate;
  toml::table et{{"quantity", e.quantity},
                 {"points", to_array(e.points)},
                 {"t", e.t},
                 {"components", to_array(e.components)},
                 {"mode", e.mode},
                 {"sigma", e.sigma},
                 {"theta", e.theta},
                 {"time_nodes", std::int64_t(e.time_nodes)},
                 {"steps_per_node", std::int64_t(e.steps_per_node)}};
  detail::write_field(et, e.field);
  root.insert("estimate", std::move(et));
  root.insert("simulate", toml::table{{"t", c.simulate.t},
                                      {"paths", std::int64_t(c.simulate.paths)},
                                      {"start", to_array(c.simulate.start)},
                                      {"transport", c.simulate.transport}});
  const auto& z = c.czscan;
  root.insert("czscan", toml::table{{"family", z.family},
                                    {"size", std::int64_t(z.size)},
                                    {"degree", std::int64_t(z.degree)},
                                    {"p", to_array(z.p)},
                                    {"sigma", z.sigma},
                                    {"mode", z.mode},
                                    {"resolution", std::int64_t(z.resolution)},
                                    {"refine", z.refine},
                                    {"mc_nodes", std::int64_t(z.mc_nodes)}});
  root.insert("kato", toml::table{{"potential", c.kato.potential},
                                  {"value", c.kato.value},
                                  {"cap", c.kato.cap},
                                  {"t_list", to_array(c.kato.t_list)},
                                  {"n_points", std::int64_t(c.kato.n_points)},
                                  {"steps", std::int64_t(c.kato.steps)}});
  root.insert("gaffney", toml::table{{"p", c.gaffney.p},
                                     {"e_centre", to_array(c.gaffney.e_centre)},
                                     {"e_radius", c.gaffney.e_radius},
                                     {"f_centre", to_array(c.gaffney.f_centre)},
                                     {"f_radius", c.gaffney.f_radius}});
  toml::table sg{{"n_points", std::int64_t(c.semigroup.n_points)}, {"points", to_array(c.semigroup.points)}};
  detail::write_field(sg, c.semigroup.field);
  root.insert("semigroup", std::move(sg));
  return root;
}

inline std::string to_toml_string(const ExperimentConfig& c) {
  std::ostringstream os;
  os << to_toml(c) << "\n";
  return os.str();
}

}  // namespace mheat::cli
