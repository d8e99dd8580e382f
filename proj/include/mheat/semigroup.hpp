#pragma once

#include "mheat/fields.hpp"
#include "mheat/montecarlo.hpp"
#include "mheat/transport.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mheat {

/// Monte Carlo estimate with matching-shape standard errors.
struct McEstimate {
  Eigen::MatrixXd value;
  Eigen::MatrixXd std_error;
  std::int64_t n_paths = 0;
  double t = 0;
  std::uint64_t seed = 0;
  std::string mode;
  std::vector<std::string> warnings;
  // Green operator only: deterministic time-quadrature error bound.
  double quadrature_error = 0;

  double scalar() const { return value(0, 0); }
  double se() const { return std_error(0, 0); }
};

/// Weight profiles of the second-order Bismut formula.
struct WeightProfile {
  std::function<double(double s, double t)> k;
  std::function<double(double s, double t)> l;

  /// k_s = max((t - 2s)/t, 0), l_s = min(1, 2(t - s)/t).
  static WeightProfile standard() {
    return {[](double s, double t) { return std::max((t - 2 * s) / t, 0.0); },
            [](double s, double t) { return std::min(1.0, 2 * (t - s) / t); }};
  }
};

enum class HessMode { bismut, mixed };

inline std::string to_string(HessMode m) { return m == HessMode::bismut ? "bismut" : "mixed"; }

struct HessianEstimatorConfig {
  WeightProfile profile = WeightProfile::standard();
  double sigma = 1.0;
  double theta = 0.0;      // fitted Kato exponential-moment rate
  int time_nodes = 40;
  double t_min = 1e-3;
  double t_max = 0.0;      // 0 selects e^{(2K + theta - sigma) T} = 1e-6
  double tail_tol = 1e-6;
  int steps_per_node = 200;
  HessMode green_mode = HessMode::mixed;
};

namespace detail {

inline double resolve_h(const McOptions& opt, double t) {
  double h = opt.h > 0 ? opt.h : t / 200.0;
  step_count(t, h);
  return h;
}

inline McEstimate pack(const Welford& acc, int rows, int cols, const McOptions& opt, double t,
                       std::string mode) {
  McEstimate e;
  e.value.resize(rows, cols);
  e.std_error.resize(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      std::size_t k = std::size_t(i * cols + j);
      e.value(i, j) = acc.mean[k];
      e.std_error(i, j) = acc.stderr_of(k);
    }
  e.n_paths = effective_paths(opt);
  e.t = t;
  e.seed = opt.seed;
  e.mode = std::move(mode);
  if (!e.value.allFinite()) throw std::runtime_error("estimate is not finite");
  return e;
}

inline double checked(double v, const char* what) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << what << ": integrand is not finite at a path endpoint";
    throw std::runtime_error(os.str());
  }
  return v;
}

// Ambient vector from frame components.
inline Vec ambient(const Frame& fr, const Vec& c) { return fr * c; }

}  // namespace detail

/// P_t f(x) = E^x[f(X_t)].
inline McEstimate estimate_pt(const Manifold& m, const ScalarField& f, const Point& x, double t,
                              const McOptions& opt) {
  const double h = detail::resolve_h(opt, t);
  const int n = step_count(t, h);
  auto acc = run_paths(opt, 1, [&](std::uint64_t stream, double sign, double* out) {
    GeodesicWalker walk(m, x, h, opt.seed, stream, sign);
    for (int k = 0; k < n; ++k) walk.step();
    out[0] = detail::checked(f.eval(walk.point()), "estimate_pt");
  });
  return detail::pack(acc, 1, 1, opt, t, "pt");
}

/// d P_t f(v) = E^x[<grad f(X_t), Q_t v>].
inline McEstimate estimate_grad(const Manifold& m, const ScalarField& f, const Point& x,
                                const TangentVector& v, double t, const McOptions& opt) {
  if (!f.grad) throw std::invalid_argument("estimate_grad: field has no gradient oracle");
  const double h = detail::resolve_h(opt, t);
  const int n = step_count(t, h);
  const int d = m.dim();
  const Vec vf = frame_components(m, m.frame_at(x), v.comps);
  TransportIntegrator integ(m);
  auto acc = run_paths(opt, 1, [&](std::uint64_t stream, double sign, double* out) {
    GeodesicWalker walk(m, x, h, opt.seed, stream, sign);
    Mat q = Mat::Identity(d, d);
    for (int k = 0; k < n; ++k) {
      const Vec& db = walk.draw();
      integ.step(walk.point(), walk.frame(), db, h, q, nullptr, 0);
      walk.advance();
    }
    Vec qv = detail::ambient(walk.frame(), q * vf);
    out[0] = detail::checked(m.inner(f.grad(walk.point()), qv), "estimate_grad");
  });
  return detail::pack(acc, 1, 1, opt, t, "derivative");
}

/// Hess P_t f(v, w).
///
/// bismut: E[f(X_t) (-1/2 int k' <W_s(v,w), dB> + 1/4 int_{t/2}^t l' <Q_s w, dB>
///                    * int_0^{t/2} k' <Q_s v, dB>)];
/// mixed:  E[Hess f(Q_t v, Q_t w) + df(W_t(v, w))].
/// The factors 1/2, 1/4 account for dB having quadratic variation 2 ds.
inline McEstimate estimate_hess(const Manifold& m, const ScalarField& f, const Point& x,
                                const TangentVector& v, const TangentVector& w, double t,
                                const HessianEstimatorConfig& cfg, HessMode mode,
                                const McOptions& opt) {
  if (mode == HessMode::mixed && (!f.grad || !f.hess))
    throw std::invalid_argument("estimate_hess: mixed mode needs gradient and Hessian oracles");
  const double h = detail::resolve_h(opt, t);
  const int n = step_count(t, h);
  const int d = m.dim();
  const Frame fr0 = m.frame_at(x);
  const Vec vf = frame_components(m, fr0, v.comps);
  const Vec wf = frame_components(m, fr0, w.comps);
  TransportIntegrator integ(m);

  std::vector<double> kdot(static_cast<std::size_t>(n)), ldot(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    double s0 = k * h, s1 = (k + 1) * h;
    kdot[std::size_t(k)] = (cfg.profile.k(s1, t) - cfg.profile.k(s0, t)) / h;
    ldot[std::size_t(k)] = (cfg.profile.l(s1, t) - cfg.profile.l(s0, t)) / h;
  }
  const int half = n / 2;  // nodes s_k < t/2 (n is even for the default grid)

  auto acc = run_paths(opt, 1, [&](std::uint64_t stream, double sign, double* out) {
    GeodesicWalker walk(m, x, h, opt.seed, stream, sign);
    Mat q = Mat::Identity(d, d);
    WTrack tr{vf, wf, Vec::Zero(d)};
    double i_w = 0, i_v = 0, i_l = 0;
    for (int k = 0; k < n; ++k) {
      const Vec& db = walk.draw();
      if (mode == HessMode::bismut) {
        double kd = kdot[std::size_t(k)], ld = ldot[std::size_t(k)];
        if (kd != 0) {
          i_w += kd * tr.value.dot(db);
          if (k < half) i_v += kd * (q * vf).dot(db);
        }
        if (k >= half && ld != 0) i_l += ld * (q * wf).dot(db);
      }
      integ.step(walk.point(), walk.frame(), db, h, q, &tr, 1);
      walk.advance();
    }
    if (mode == HessMode::bismut) {
      double fx = detail::checked(f.eval(walk.point()), "estimate_hess");
      out[0] = fx * (-0.5 * i_w + 0.25 * i_l * i_v);
    } else {
      const Frame& fr = walk.frame();
      Mat hf = f.hess(walk.point(), fr);
      Vec a = q * vf, b = q * wf;
      Vec gf = frame_components(m, fr, f.grad(walk.point()));
      out[0] = detail::checked(a.dot(hf * b) + gf.dot(tr.value), "estimate_hess");
    }
  });
  McEstimate e = detail::pack(acc, 1, 1, opt, t, to_string(mode));
  if (e.se() > std::abs(e.scalar()))
    e.warnings.push_back(to_string(mode) + " estimate: stderr exceeds |value|" +
                         (mode == HessMode::bismut ? " (weight variance grows like 1/t^2)" : ""));
  return e;
}

/// Moments along shared paths used by the domination check.
struct HessMoments {
  McEstimate hess;            // d x d matrix Hess P_t f(e_i, e_j) in the frame at x (mixed mode)
  McEstimate hess_f_sq;       // P_t |Hess f|_HS^2
  McEstimate df_sq;           // P_t |df|^2
  McEstimate w_sq;            // d x d matrix E|W_t(e_i, e_j)|^2
  McEstimate q_sq;            // E|Q_t|_op^2
};

inline HessMoments estimate_hess_moments(const Manifold& m, const ScalarField& f, const Point& x,
                                         double t, const McOptions& opt) {
  if (!f.grad || !f.hess) throw std::invalid_argument("estimate_hess_moments: needs oracles");
  const double h = detail::resolve_h(opt, t);
  const int n = step_count(t, h);
  const int d = m.dim();
  const int dd = d * d;
  TransportIntegrator integ(m);
  const int dim = 2 * dd + 3;
  auto acc = run_paths(opt, dim, [&](std::uint64_t stream, double sign, double* out) {
    GeodesicWalker walk(m, x, h, opt.seed, stream, sign);
    Mat q = Mat::Identity(d, d);
    WTrack tracks[kMaxDim * kMaxDim];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        tracks[i * d + j] = WTrack{Vec::Unit(d, i), Vec::Unit(d, j), Vec::Zero(d)};
    for (int k = 0; k < n; ++k) {
      const Vec& db = walk.draw();
      integ.step(walk.point(), walk.frame(), db, h, q, tracks, dd);
      walk.advance();
    }
    const Frame& fr = walk.frame();
    Mat hf = f.hess(walk.point(), fr);
    Vec gf = frame_components(m, fr, f.grad(walk.point()));
    Mat hp = q.transpose() * hf * q;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        out[i * d + j] = hp(i, j) + gf.dot(tracks[i * d + j].value);
        out[dd + i * d + j] = tracks[i * d + j].value.squaredNorm();
      }
    out[2 * dd] = hf.squaredNorm();
    out[2 * dd + 1] = gf.squaredNorm();
    Eigen::JacobiSVD<Mat> svd(q);
    double qn = svd.singularValues()(0);
    out[2 * dd + 2] = qn * qn;
    for (int i = 0; i < dim; ++i) detail::checked(out[i], "estimate_hess_moments");
  });
  auto slice = [&](int off, int rows, int cols, const char* mode) {
    Welford part(rows * cols);
    part.n = acc.n;
    for (int i = 0; i < rows * cols; ++i) {
      part.mean[std::size_t(i)] = acc.mean[std::size_t(off + i)];
      part.m2[std::size_t(i)] = acc.m2[std::size_t(off + i)];
    }
    return detail::pack(part, rows, cols, opt, t, mode);
  };
  HessMoments r;
  r.hess = slice(0, d, d, "mixed");
  r.w_sq = slice(dd, d, d, "w-moment");
  r.hess_f_sq = slice(2 * dd, 1, 1, "pt");
  r.df_sq = slice(2 * dd + 1, 1, 1, "pt");
  r.q_sq = slice(2 * dd + 2, 1, 1, "q-moment");
  return r;
}

/// Log-spaced time nodes of the Green-operator quadrature.
inline std::vector<double> green_nodes(const Manifold& m, const HessianEstimatorConfig& cfg,
                                       std::vector<std::string>* warnings = nullptr) {
  if (cfg.time_nodes < 3) throw std::invalid_argument("time_nodes must be >= 3");
  const double rate = cfg.sigma - 2 * m.ricci_lower_bound() - cfg.theta;
  double t_max = cfg.t_max;
  if (rate <= 0 && warnings)
    warnings->push_back("sigma <= 2K + theta: the resolvent integral is not guaranteed to converge");
  if (t_max <= 0) t_max = rate > 0 ? std::log(1.0 / cfg.tail_tol) / rate : 20.0 / cfg.sigma;
  std::vector<double> nodes(static_cast<std::size_t>(cfg.time_nodes));
  const double a = std::log(cfg.t_min), b = std::log(t_max);
  for (int i = 0; i < cfg.time_nodes; ++i)
    nodes[std::size_t(i)] = std::exp(a + (b - a) * i / (cfg.time_nodes - 1));
  return nodes;
}

/// T f(v, w) = int_0^inf e^{-sigma t} Hess P_t f(v, w) dt.
///
/// Trapezoid rule in log t over independent per-node estimates plus the head
/// segment g(t_0) t_0. The reported quadrature error is |T_h - T_2h| (every
/// other node) plus head and tail bounds.
inline McEstimate estimate_green_hess(const Manifold& m, const ScalarField& f, const Point& x,
                                      const TangentVector& v, const TangentVector& w,
                                      const HessianEstimatorConfig& cfg, const McOptions& opt) {
  if (!(cfg.sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  std::vector<std::string> warnings;
  auto nodes = green_nodes(m, cfg, &warnings);
  const int nn = int(nodes.size());
  std::vector<double> g(static_cast<std::size_t>(nn)), se(static_cast<std::size_t>(nn));
  std::int64_t paths = 0;
  for (int i = 0; i < nn; ++i) {
    double t = nodes[std::size_t(i)];
    McOptions o = opt;
    o.h = t / cfg.steps_per_node;
    o.seed = mix_seed(opt.seed, std::uint64_t(i));
    McEstimate e = estimate_hess(m, f, x, v, w, t, cfg, cfg.green_mode, o);
    double wt = std::exp(-cfg.sigma * t) * t;  // dt = t d(log t)
    g[std::size_t(i)] = wt * e.scalar();
    se[std::size_t(i)] = wt * e.se();
    paths += e.n_paths;
  }
  // Weights on g_i = e^{-sigma t_i} Hess P_{t_i} f * t_i; node 0 also carries the head [0, t_0].
  const double dl = std::log(nodes[1] / nodes[0]);
  std::vector<double> w1(static_cast<std::size_t>(nn), dl), w2(static_cast<std::size_t>(nn), 0.0);
  w1.front() = w1.back() = 0.5 * dl;
  const int last2 = ((nn - 1) / 2) * 2;
  for (int i = 0; i <= last2; i += 2) w2[std::size_t(i)] = (i == 0 || i == last2) ? dl : 2 * dl;
  if (last2 < nn - 1) {
    w2[std::size_t(last2)] += 0.5 * dl;
    w2[std::size_t(nn - 1)] += 0.5 * dl;
  }
  double val = g[0], val2 = g[0], var = 0;
  for (int i = 0; i < nn; ++i) {
    val += w1[std::size_t(i)] * g[std::size_t(i)];
    val2 += w2[std::size_t(i)] * g[std::size_t(i)];
    double wi = w1[std::size_t(i)] + (i == 0 ? 1.0 : 0.0);
    var += wi * wi * se[std::size_t(i)] * se[std::size_t(i)];
  }
  const double rate = cfg.sigma - 2 * m.ricci_lower_bound() - cfg.theta;
  double tail = std::abs(g[std::size_t(nn - 1)]) / nodes.back() / std::max(rate, 1e-12);
  double head_err = std::abs(g[0] - g[1] * nodes[0] / nodes[1]);

  McEstimate e;
  e.value = Eigen::MatrixXd::Constant(1, 1, val);
  e.std_error = Eigen::MatrixXd::Constant(1, 1, std::sqrt(var));
  e.n_paths = paths;
  e.t = nodes.back();
  e.seed = opt.seed;
  e.mode = "green-" + to_string(cfg.green_mode);
  e.quadrature_error = std::abs(val - val2) + tail + head_err;
  e.warnings = std::move(warnings);
  return e;
}

}  // namespace mheat
