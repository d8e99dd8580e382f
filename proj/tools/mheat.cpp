// mheat: config-driven runner for the heat-semigroup experiments.
//
//   mheat run <config.toml> [--threads N] [--out DIR] [--seed S]
//   mheat list <manifolds|fields|potentials|checks>
//
// Exit codes: 0 every check passed or was inconclusive, 1 a check failed or the
// run aborted, 2 invalid configuration or command line.

#include "experiment.hpp"

#include "mheat/spectral.hpp"

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <json.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mheat::cli {
namespace {

constexpr const char* kVersion = "0.1.0";

// ------------------------------------------------------------------ output

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

/// RFC-4180 table: CRLF records, quoted fields where needed.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_field(r[i]);
      out += "\r\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

/// Output directory that remembers what it wrote, for the MANIFEST.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    files_.push_back({name, content.size(), fnv1a(content)});
  }

  /// Lists every file written so far; `status` is "complete" or "aborted: ...".
  void manifest(const std::string& status) {
    std::ostringstream os;
    os << "# mheat " << kVersion << " manifest: name bytes fnv1a64\n";
    for (const auto& f : files_) {
      char h[17];
      std::snprintf(h, sizeof h, "%016" PRIx64, f.hash);
      os << f.name << " " << f.bytes << " " << h << "\n";
    }
    os << "status: " << status << "\n";
    std::ofstream out(dir_ / "MANIFEST", std::ios::binary);
    out << os.str();
  }

  const fs::path& path() const { return dir_; }

 private:
  struct Entry {
    std::string name;
    std::size_t bytes;
    std::uint64_t hash;
  };
  fs::path dir_;
  std::vector<Entry> files_;
};

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json versions() {
  json v;
  v["mheat"] = kVersion;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = BOOST_LIB_VERSION;
  v["tomlplusplus"] = std::to_string(TOML_LIB_MAJOR) + "." + std::to_string(TOML_LIB_MINOR) + "." +
                      std::to_string(TOML_LIB_PATCH);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["cli11"] = CLI11_VERSION;
  v["compiler"] = __VERSION__;
  return v;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

// -------------------------------------------------------- report emitters

struct RunState {
  OutputDir& out;
  json reports = json::array();
  json tables = json::array();
  bool failed = false;
};

/// CSV with columns params..., lhs, rhs, ratio, stderr, verdict, provenance, plus
/// one gnuplot file per numeric parameter against the ratio.
void emit_report(RunState& st, const BoundReport& r, const std::string& stem) {
  std::vector<std::string> names;
  for (const auto& s : r.samples)
    for (const auto& [k, v] : s.params)
      if (std::find(names.begin(), names.end(), k) == names.end()) names.push_back(k);

  Csv csv;
  csv.header = names;
  for (const char* c : {"lhs", "rhs", "ratio", "stderr", "verdict", "provenance"}) csv.header.push_back(c);
  for (const auto& s : r.samples) {
    std::vector<std::string> row;
    for (const auto& n : names) {
      std::string cell;
      for (const auto& [k, v] : s.params)
        if (k == n) cell = num(v);
      row.push_back(cell);
    }
    row.push_back(num(s.lhs));
    row.push_back(num(s.rhs));
    row.push_back(num(s.ratio));
    row.push_back(num(s.std_error));
    row.push_back(s.verdict);
    row.push_back(s.provenance == "monte-carlo" ? "monte-carlo(stderr)" : s.provenance);
    csv.rows.push_back(std::move(row));
  }
  const std::string csv_name = stem + ".csv";
  st.out.write(csv_name, csv.str());

  json plots = json::array();
  for (const auto& n : names) {
    std::ostringstream dat;
    dat << "# " << r.inequality_id << ": " << n << " vs ratio (unreliable samples omitted)\n";
    dat << "# " << n << " ratio\n";
    for (const auto& s : r.samples) {
      if (s.verdict == "unreliable") continue;
      for (const auto& [k, v] : s.params)
        if (k == n) dat << num(v) << " " << num(s.ratio) << "\n";
    }
    std::string dat_name = stem + "." + sanitize(n) + ".dat";
    st.out.write(dat_name, dat.str());
    plots.push_back(dat_name);
  }

  std::map<std::string, int> verdicts;
  for (const auto& s : r.samples) ++verdicts[s.verdict];
  json j;
  j["inequality_id"] = r.inequality_id;
  j["passed"] = r.passed;
  j["skipped"] = r.skipped;
  j["fitted_constant"] = number_or_null(r.fitted_constant);
  j["refined_constant"] = number_or_null(r.refined_constant);
  json consts = json::object();
  for (const auto& [k, v] : r.constants) consts[k] = number_or_null(v);
  j["constants"] = consts;
  j["n_samples"] = r.samples.size();
  json vj = json::object();
  for (const auto& [k, v] : verdicts) vj[k] = v;
  j["verdicts"] = vj;
  j["notes"] = r.notes;
  j["table"] = csv_name;
  j["plots"] = plots;
  st.reports.push_back(j);
  if (!r.passed && !r.skipped) st.failed = true;
  std::cout << "  " << r.inequality_id << ": " << (r.skipped ? "skipped" : r.passed ? "passed" : "FAILED")
            << "  fitted=" << num(r.fitted_constant) << "  refined=" << num(r.refined_constant) << "\n";
}

template <std::size_t N>
void emit_reports(RunState& st, const std::array<BoundReport, N>& rs) {
  for (const auto& r : rs) emit_report(st, r, sanitize(r.inequality_id));
}

McOptions mc_options(const ExperimentConfig& c, int threads) {
  McOptions o;
  o.n_paths = c.n_paths;
  o.h = c.h;
  o.seed = c.seed;
  o.threads = threads;
  return o;
}

// ------------------------------------------------------------ experiments

void run_kato(RunState& st, const ExperimentConfig& c, const Manifold& m, int threads) {
  ScalarField v = build_potential(m, c.kato);
  auto res = kato_functional(m, v, c.kato.t_list, sample_points(m, c.kato.n_points), mc_options(c, threads),
                             c.kato.steps);
  Csv csv;
  csv.header = {"t", "functional", "functional_stderr", "exp_moment", "exp_moment_stderr", "dropped", "provenance"};
  std::ostringstream dat;
  dat << "# kato: t vs functional, exp_moment (dropped rows omitted from the moment column)\n# t functional exp_moment\n";
  for (const auto& r : res.rows) {
    csv.rows.push_back({num(r.t), num(r.functional), num(r.functional_se), num(r.exp_moment), num(r.exp_moment_se),
                        r.dropped ? "1" : "0", "monte-carlo(stderr)"});
    dat << num(r.t) << " " << num(r.functional) << " " << (r.dropped ? std::string("NaN") : num(r.exp_moment)) << "\n";
  }
  st.out.write("kato.csv", csv.str());
  st.out.write("kato.t.dat", dat.str());
  bool ok = res.monotone && res.vanishing;
  json j;
  j["inequality_id"] = "kato-functional";
  j["potential"] = c.kato.potential;
  j["passed"] = ok;
  j["C"] = number_or_null(res.C);
  j["theta"] = number_or_null(res.theta);
  j["monotone"] = res.monotone;
  j["vanishing"] = res.vanishing;
  j["notes"] = res.notes;
  j["table"] = "kato.csv";
  j["plots"] = json::array({"kato.t.dat"});
  st.reports.push_back(j);
  if (!ok) st.failed = true;
  std::cout << "  kato-functional: " << (ok ? "passed" : "FAILED") << "  C=" << num(res.C)
            << "  theta=" << num(res.theta) << "\n";
}

std::vector<BandLimited> cz_family(const ExperimentConfig& c, const Manifold& m) {
  if (c.czscan.family == "harmonic") {
    std::vector<BandLimited> fam;
    for (int l = 1; l <= c.czscan.degree && int(fam.size()) < c.czscan.size; ++l)
      for (int i = 0; i <= 2 * l && int(fam.size()) < c.czscan.size; ++i) fam.push_back(spherical_harmonic(m, l, i));
    return fam;
  }
  return random_band_limited(m, c.czscan.size, c.czscan.degree, c.seed);
}

void run_czscan(RunState& st, const ExperimentConfig& c, const Manifold& m, int threads) {
  auto fam = cz_family(c, m);
  CzScanOptions opt;
  opt.resolution = c.czscan.resolution;
  opt.refine = c.czscan.refine;
  opt.mc = mc_options(c, threads);
  opt.mc_nodes = c.czscan.mc_nodes;
  CzMode mode = c.czscan.mode == "mc" ? CzMode::mc : CzMode::exact_spectral;
  for (double p : c.czscan.p) {
    auto r = cz_scan(m, fam, p, c.czscan.sigma, mode, opt);
    emit_report(st, r, "czscan_p" + sanitize(num(p)));
  }
}

void run_verify(RunState& st, const ExperimentConfig& c, const Manifold& m, int threads) {
  BoundCheckConfig b = c.bounds;
  b.seed = c.seed;
  b.threads = threads;
  const std::string& k = c.check;
  if (k == "kernel-bounds") {
    emit_reports(st, check_kernel_bounds(m, b));
  } else if (k == "weighted-l2") {
    emit_reports(st, check_weighted_l2(m, b));
  } else if (k == "gaffney") {
    Point e = point_from(m, c.gaffney.e_centre);
    Point f = c.gaffney.f_centre.empty() ? antipode(m) : point_from(m, c.gaffney.f_centre);
    auto r = check_gaffney(m, b, c.gaffney.p, Ball{e, c.gaffney.e_radius}, Ball{f, c.gaffney.f_radius});
    emit_report(st, r, "gaffney-lp");
  } else if (k == "semigroup-bounds") {
    std::vector<Point> pts;
    for (const auto& p : c.semigroup.points) pts.push_back(point_from(m, p));
    if (pts.empty()) pts = sample_points(m, c.semigroup.n_points);
    emit_reports(st, check_semigroup_bounds(m, build_field(m, c.semigroup.field), b, mc_options(c, threads), pts));
  } else if (k == "kato") {
    run_kato(st, c, m, threads);
  } else if (k == "czscan") {
    run_czscan(st, c, m, threads);
  }
}

void run_estimate(RunState& st, const ExperimentConfig& c, const Manifold& m, int threads) {
  const auto& e = c.estimate;
  ScalarField f = build_field(m, e.field);
  McOptions opt = mc_options(c, threads);
  HessianEstimatorConfig hc;
  hc.sigma = e.sigma;
  hc.theta = e.theta;
  hc.time_nodes = e.time_nodes;
  hc.steps_per_node = e.steps_per_node;
  HessMode mode = e.mode == "bismut" ? HessMode::bismut : HessMode::mixed;
  hc.green_mode = mode;

  std::vector<std::vector<int>> comps = e.components;
  if (comps.empty()) {
    if (e.quantity == "pt") comps = {{}};
    for (int i = 0; i < m.dim() && e.quantity == "grad"; ++i) comps.push_back({i});
    for (int i = 0; i < m.dim() && (e.quantity == "hess" || e.quantity == "green-hess"); ++i)
      for (int j = i; j < m.dim(); ++j) comps.push_back({i, j});
  }
  std::vector<std::vector<double>> pts = e.points;
  if (pts.empty()) pts.push_back(std::vector<double>(std::size_t(m.dim()), 0.0));

  Csv csv;
  csv.header = {"point"};
  for (int i = 0; i < m.dim(); ++i) csv.header.push_back("x" + std::to_string(i + 1));
  for (const char* h : {"t", "quantity", "i", "j", "value", "stderr", "quadrature_error", "n_paths", "mode",
                        "provenance", "warnings"})
    csv.header.push_back(h);
  json rows = json::array();
  for (std::size_t pi = 0; pi < pts.size(); ++pi) {
    Point x = point_from(m, pts[pi]);
    Frame fr = m.frame_at(x);
    for (const auto& comp : comps) {
      McEstimate est;
      std::string qmode = "-";
      double t = e.t;
      if (e.quantity == "pt") {
        est = estimate_pt(m, f, x, t, opt);
      } else if (e.quantity == "grad") {
        est = estimate_grad(m, f, x, TangentVector{x, fr.col(comp[0])}, t, opt);
      } else if (e.quantity == "hess") {
        est = estimate_hess(m, f, x, TangentVector{x, fr.col(comp[0])}, TangentVector{x, fr.col(comp[1])}, t, hc,
                            mode, opt);
        qmode = e.mode;
      } else {
        est = estimate_green_hess(m, f, x, TangentVector{x, fr.col(comp[0])}, TangentVector{x, fr.col(comp[1])},
                                  hc, opt);
        qmode = e.mode;
        t = 0;
      }
      std::string warn;
      for (const auto& w : est.warnings) warn += (warn.empty() ? "" : "; ") + w;
      std::vector<std::string> row{std::to_string(pi)};
      for (double v : pts[pi]) row.push_back(num(v));
      row.push_back(num(t));
      row.push_back(e.quantity);
      row.push_back(comp.size() > 0 ? std::to_string(comp[0] + 1) : "");
      row.push_back(comp.size() > 1 ? std::to_string(comp[1] + 1) : "");
      row.push_back(num(est.scalar()));
      row.push_back(num(est.se()));
      row.push_back(num(est.quadrature_error));
      row.push_back(std::to_string(est.n_paths));
      row.push_back(qmode);
      row.push_back("monte-carlo(stderr)");
      row.push_back(warn);
      csv.rows.push_back(row);
      json rj;
      rj["point"] = pi;
      rj["coords"] = pts[pi];
      rj["component"] = comp;
      rj["value"] = number_or_null(est.scalar());
      rj["stderr"] = number_or_null(est.se());
      rj["quadrature_error"] = est.quadrature_error;
      rj["warnings"] = est.warnings;
      rows.push_back(rj);
      std::cout << "  point " << pi << " " << e.quantity;
      for (int i : comp) std::cout << " " << i + 1;
      std::cout << ": " << num(est.scalar()) << " +- " << num(est.se()) << "\n";
    }
  }
  st.out.write("estimates.csv", csv.str());
  json tj;
  tj["table"] = "estimates.csv";
  tj["quantity"] = e.quantity;
  tj["rows"] = rows;
  st.tables.push_back(tj);
}

void run_simulate(RunState& st, const ExperimentConfig& c, const Manifold& m) {
  const auto& s = c.simulate;
  Point x0 = point_from(m, s.start);
  double h = c.h > 0 ? c.h : s.t / 200.0;
  Csv csv;
  csv.header = {"path", "step", "time"};
  for (int i = 0; i < m.ambient_dim(); ++i) csv.header.push_back("y" + std::to_string(i));
  if (s.transport) csv.header.push_back("q_opnorm");
  csv.header.push_back("provenance");
  json plots = json::array();
  for (int p = 0; p < s.paths; ++p) {
    PathRecord rec = sample_path(m, x0, s.t, h, c.seed, std::uint64_t(p));
    std::vector<Mat> qs;
    if (s.transport) qs = damped_transport(m, rec);
    std::ostringstream dat;
    dat << "# path " << p << ": ambient coordinates per step\n";
    for (std::size_t k = 0; k < rec.points.size(); ++k) {
      std::vector<std::string> row{std::to_string(p), std::to_string(k), num(rec.times[k])};
      for (int i = 0; i < m.ambient_dim(); ++i) {
        row.push_back(num(rec.points[k].coords[i]));
        dat << (i ? " " : "") << num(rec.points[k].coords[i]);
      }
      dat << "\n";
      if (s.transport) row.push_back(num(Eigen::JacobiSVD<Eigen::MatrixXd>(Eigen::MatrixXd(qs[k])).singularValues()(0)));
      row.push_back("monte-carlo(stderr)");
      csv.rows.push_back(std::move(row));
    }
    std::string name = "path_" + std::to_string(p) + ".dat";
    st.out.write(name, dat.str());
    plots.push_back(name);
  }
  st.out.write("paths.csv", csv.str());
  json tj;
  tj["table"] = "paths.csv";
  tj["paths"] = s.paths;
  tj["h"] = h;
  tj["plots"] = plots;
  st.tables.push_back(tj);
  std::cout << "  simulated " << s.paths << " paths of " << step_count(s.t, h) << " steps\n";
}

// ------------------------------------------------------------------ commands

int cmd_run(const std::string& path, int threads, const std::string& out_override,
            std::optional<std::uint64_t> seed_override) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(path);
  } catch (const ConfigError& e) {
    std::cerr << "mheat: invalid config: " << e.what() << "\n";
    return 2;
  }
  if (seed_override) cfg.seed = *seed_override;
  // The echo keeps the configured output path so reruns into other directories compare equal.
  ExperimentConfig echo_cfg = cfg;
  if (!out_override.empty()) cfg.output = out_override;

  const auto start = std::chrono::steady_clock::now();
  OutputDir out(cfg.output);
  RunState st{out};
  std::cout << "mheat " << kVersion << ": " << cfg.kind << (cfg.kind == "verify" ? " " + cfg.check : "") << " on "
            << cfg.manifold.build().name() << " -> " << out.path().string() << "\n";
  try {
    const std::string echo = to_toml_string(echo_cfg);
    out.write("config.toml", echo);
    Manifold m = cfg.manifold.build();
    if (cfg.kind == "verify") run_verify(st, cfg, m, threads);
    else if (cfg.kind == "czscan") run_czscan(st, cfg, m, threads);
    else if (cfg.kind == "estimate") run_estimate(st, cfg, m, threads);
    else run_simulate(st, cfg, m);

    std::ostringstream cj;
    cj << toml::json_formatter{to_toml(echo_cfg)};
    json summary;
    summary["tool"] = "mheat";
    summary["versions"] = versions();
    summary["config"] = json::parse(cj.str());
    summary["experiment"] = cfg.kind;
    summary["manifold"] = cfg.manifold.build().name();
    summary["reports"] = st.reports;
    summary["tables"] = st.tables;
    summary["status"] = st.failed ? "fail" : "pass";
    summary["exit_code"] = st.failed ? 1 : 0;
    out.write("summary.json", summary.dump(2) + "\n");
    out.manifest("complete");
  } catch (const std::exception& e) {
    out.manifest(std::string("aborted: ") + e.what());
    std::cerr << "mheat: run aborted: " << e.what() << "\n";
    return 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "status: " << (st.failed ? "fail" : "pass") << "  wall-clock " << secs << " s\n";
  return st.failed ? 1 : 0;
}

int cmd_list(const std::string& kind) {
  if (kind == "manifolds") {
    std::cout << "euclidean    R^d, 1 <= d <= " << kMaxDim << ", flat; closed-form heat kernel\n"
              << "torus        (R/2piZ)^d, 1 <= d <= " << kMaxDim << ", flat; image-sum heat kernel\n"
              << "sphere       S^d(r), 2 <= d <= " << kMaxDim << ", Ric = (d-1)/r^2; kernel oracle for d = 2\n"
              << "hyperbolic   H^d(a), 2 <= d <= " << kMaxDim
              << ", Ric = -(d-1)/a^2; kernel oracle for d = 2, 3\n";
  } else if (kind == "fields") {
    std::cout << "constant            value\n"
              << "coordinate          index (ambient coordinate)\n"
              << "coordinate-squared  index\n"
              << "norm-squared        squared ambient norm\n"
              << "sine                index, phase (torus and R^d)\n"
              << "cosine              index\n"
              << "gaussian-bump       centre, width\n"
              << "compact-bump        centre, radius (smooth, compactly supported)\n";
  } else if (kind == "potentials") {
    std::cout << "zero               V = 0\n"
              << "constant           V = value\n"
              << "curvature          V = |R|^2 + |div-curvature term|^2 at the origin (constant on models)\n"
              << "inverse-distance   V = 1/d(o, x), capped at cap\n";
  } else if (kind == "checks") {
    std::cout << "kernel-bounds      Gaussian upper bounds for p_t and its Hessian\n"
              << "weighted-l2        weighted L2 bounds for the kernel, its Hessian and the Hessian tail\n"
              << "gaffney            Lp Davies-Gaffney off-diagonal decay between disjoint balls\n"
              << "semigroup-bounds   pointwise and Lp bounds for t Hess P_t f, Hessian domination\n"
              << "kato               Kato functional and exponential moment of a potential\n"
              << "czscan             Calderon-Zygmund ratios for band-limited families\n";
  } else {
    std::cerr << "mheat: unknown list kind '" << kind << "' (manifolds, fields, potentials, checks)\n";
    return 2;
  }
  return 0;
}

}  // namespace
}  // namespace mheat::cli

int main(int argc, char** argv) {
  CLI::App app{"mheat: heat-semigroup Hessian experiments"};
  app.require_subcommand(1);

  std::string config, out, kind;
  int threads = 0;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config, "TOML config file")->required();
  auto* th = run->add_option("--threads", threads, "worker cap (default: MHEAT_THREADS, then all cores)");
  th->check(CLI::PositiveNumber);
  run->add_option("--out", out, "output directory (overrides experiment.output)");
  auto* seed_opt = run->add_option("--seed", seed, "seed (overrides experiment.seed)");

  auto* list = app.add_subcommand("list", "list built-in registries");
  list->add_option("kind", kind, "manifolds | fields | potentials | checks")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*run) {
    std::optional<std::uint64_t> s;
    if (*seed_opt) s = seed;
    return mheat::cli::cmd_run(config, threads, out, s);
  }
  return mheat::cli::cmd_list(kind);
}
