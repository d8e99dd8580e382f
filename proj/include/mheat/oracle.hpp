#pragma once

#include "mheat/manifold.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mheat {

/// Heat kernel p_t(x, y) of P_t = e^{-t Delta} (Delta = -Delta_LB) with its x-derivatives.
struct KernelEval {
  double p = 0;
  double dp_dt = 0;
  Vec grad_x;           // ambient tangent vector at x
  double laplacian_x = 0;  // positive-Laplacian value, -trace(hess_x)
  Mat hess_x;           // in the frame supplied (default frame_at(x))
};

namespace detail {

// Radial kernel data in the distance variable rho.
struct RadialKernel {
  double f = 0, f_r = 0, f_rr = 0, f_r_over_r = 0, f_t = 0;
};

inline KernelEval assemble_radial(const Manifold& m, const Point& x, const Point& y,
                                  const Frame& fr, double rho, const RadialKernel& k) {
  const int d = m.dim();
  KernelEval e;
  e.p = k.f;
  e.dp_dt = k.f_t;
  Mat id = Mat::Identity(d, d);
  if (rho < 1e-12) {
    e.grad_x = Vec::Zero(m.ambient_dim());
    e.hess_x = k.f_rr * id;
  } else {
    // grad rho at x = -log_x(y) / rho
    Vec dir = -m.log(x, y) / rho;
    e.grad_x = k.f_r * dir;
    Vec n(d);
    for (int i = 0; i < d; ++i) n[i] = m.inner(dir, fr.col(i));
    Mat nn = n * n.transpose();
    e.hess_x = k.f_rr * nn + k.f_r_over_r * m.rho_cot(rho) * (id - nn);
  }
  e.laplacian_x = -e.hess_x.trace();
  return e;
}

// Periodic 1-d kernel on R / 2 pi Z by the image sum; values g, g', g'', dg/dt.
struct Wrapped1d {
  double g = 0, g1 = 0, g2 = 0, gt = 0;
};

inline Wrapped1d wrapped_gaussian(double u, double t) {
  Wrapped1d r;
  const double norm = 1.0 / std::sqrt(4.0 * kPi * t);
  u -= 2.0 * kPi * std::nearbyint(u / (2.0 * kPi));
  for (int n = 0;; ++n) {
    bool small = true;
    for (int s : {1, -1}) {
      if (n == 0 && s == -1) continue;
      double z = u + s * 2.0 * kPi * n;
      double term = norm * std::exp(-z * z / (4.0 * t));
      r.g += term;
      r.g1 += term * (-z / (2.0 * t));
      r.g2 += term * (z * z / (4.0 * t * t) - 1.0 / (2.0 * t));
      r.gt += term * (z * z / (4.0 * t * t) - 1.0 / (2.0 * t));
      if (term * (1.0 + z * z / (t * t)) > 1e-14 * r.g) small = false;
    }
    if (n > 0 && small) break;
    if (n > 100000) throw std::runtime_error("wrapped Gaussian: image sum did not converge");
  }
  return r;
}

// Legendre heat sum on the unit S^2 as a function of c = cos(rho):
// F = sum (2l+1)/(4 pi) e^{-l(l+1)t} P_l(c), with dF/dc, d2F/dc2 and dF/dt.
struct LegendreSum {
  double f = 0, f1 = 0, f2 = 0, ft = 0;
};

inline LegendreSum legendre_heat_sum(double c, double t) {
  if (t < 1e-4) throw std::domain_error("spectral heat sum: truncation unreliable for t < 1e-4");
  c = std::clamp(c, -1.0, 1.0);
  LegendreSum s;
  // P_l, P'_l, P''_l by the three-term recursions
  double p0 = 1, p1 = c;
  double d0 = 0, d1 = 1;
  double s0 = 0, s1 = 0;
  const int l_cap = 200000;
  for (int l = 0; l < l_cap; ++l) {
    double pl = l == 0 ? p0 : p1;
    double dl = l == 0 ? d0 : d1;
    double sl = l == 0 ? s0 : s1;
    double ll = double(l) * (l + 1);
    double coef = (2.0 * l + 1) / (4.0 * kPi) * std::exp(-ll * t);
    s.f += coef * pl;
    s.f1 += coef * dl;
    s.f2 += coef * sl;
    s.ft += -ll * coef * pl;
    // |P_l| <= 1, |P'_l| <= l(l+1)/2, |P''_l| <= l^4 / 8
    double bound = coef * (1.0 + ll + ll * ll);
    if (l > 2 && bound < 1e-14 * std::max(1.0, std::abs(s.f))) return s;
    if (l >= 1) {
      double pn = ((2.0 * l + 1) * c * p1 - l * p0) / (l + 1);
      double dn = d0 + (2.0 * l + 1) * p1;
      double sn = s0 + (2.0 * l + 1) * d1;
      p0 = p1, p1 = pn, d0 = d1, d1 = dn, s0 = s1, s1 = sn;
    }
  }
  throw std::domain_error("spectral heat sum: truncation unreliable (term bound exceeded)");
}

// H^3 (curvature -1) kernel in units a = 1.
inline RadialKernel h3_kernel(double r, double t) {
  RadialKernel k;
  double ratio = r < 1e-8 ? 1.0 : r / std::sinh(r);
  k.f = std::pow(4.0 * kPi * t, -1.5) * ratio * std::exp(-t - r * r / (4.0 * t));
  double gr, grr, gr_over_r;
  if (r < 1e-3) {
    double r2 = r * r;
    gr = -r / 3.0 + r * r2 / 45.0 - r / (2.0 * t);
    grr = -1.0 / 3.0 + r2 / 15.0 - 1.0 / (2.0 * t);
    gr_over_r = -1.0 / 3.0 + r2 / 45.0 - 1.0 / (2.0 * t);
  } else {
    double sh = std::sinh(r);
    gr = 1.0 / r - 1.0 / std::tanh(r) - r / (2.0 * t);
    grr = -1.0 / (r * r) + 1.0 / (sh * sh) - 1.0 / (2.0 * t);
    gr_over_r = gr / r;
  }
  k.f_r = k.f * gr;
  k.f_rr = k.f * (grr + gr * gr);
  k.f_r_over_r = k.f * gr_over_r;
  k.f_t = k.f * (-1.5 / t - 1.0 + r * r / (4.0 * t * t));
  return k;
}

// H^2 (curvature -1) kernel value in units a = 1:
// sqrt(2) e^{-t/4} (4 pi t)^{-3/2} int_r^inf s e^{-s^2/4t} / sqrt(cosh s - cosh r) ds,
// with s = r + v^2 and cosh s - cosh r = 2 sinh(r + v^2/2) sinh(v^2/2).
inline double h2_kernel_value(double r, double t) {
  r = std::abs(r);
  auto integrand = [&](double v) {
    if (v == 0.0) return r == 0.0 ? 0.0 : 2.0 * r / std::sqrt(std::sinh(r));
    double v2 = v * v;
    double den = std::sqrt(2.0 * std::sinh(r + 0.5 * v2) * std::sinh(0.5 * v2));
    return (r + v2) * std::exp(-(2.0 * r * v2 + v2 * v2) / (4.0 * t)) * 2.0 * v / den;
  };
  // Beyond vmax the exponent (2 r v^2 + v^4) / 4t exceeds 50.
  double vmax = std::pow(200.0 * t, 0.25);
  if (r > 0) vmax = std::min(vmax, std::sqrt(100.0 * t / r));
  double err = 0;
  double val = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, vmax,
                                                                               20, 1e-13, &err);
  return std::sqrt(2.0) * std::exp(-t / 4.0) * std::pow(4.0 * kPi * t, -1.5) *
         std::exp(-r * r / (4.0 * t)) * val;
}

// Central difference with one Richardson step: error O(h^4).
template <class F>
double richardson_d1(F&& f, double x, double h) {
  auto d = [&](double s) { return (f(x + s) - f(x - s)) / (2.0 * s); };
  return (4.0 * d(0.5 * h) - d(h)) / 3.0;
}
template <class F>
double richardson_d2(F&& f, double x, double h, double f0) {
  auto d = [&](double s) { return (f(x + s) - 2.0 * f0 + f(x - s)) / (s * s); };
  return (4.0 * d(0.5 * h) - d(h)) / 3.0;
}

inline RadialKernel h2_kernel(double r, double t) {
  // Step 1e-3: for second differences at 1e-5 round-off (~1e-13 / h^2) dominates.
  const double hr = 1e-3, ht = 1e-3 * t;
  RadialKernel k;
  auto fr = [&](double s) { return h2_kernel_value(s, t); };  // even in s
  k.f = fr(r);
  k.f_r = richardson_d1(fr, r, hr);
  k.f_rr = richardson_d2(fr, r, hr, k.f);
  k.f_r_over_r = r < 1e-3 ? k.f_rr : k.f_r / r;
  auto ft = [&](double s) { return h2_kernel_value(r, s); };
  k.f_t = richardson_d1(ft, t, ht);
  return k;
}

}  // namespace detail

/// Heat kernel with derivatives in x. Supported: R^d, T^d, S^1, S^2, H^2, H^3.
inline KernelEval heat_kernel(const Manifold& m, const Point& x, const Point& y, double t,
                              const Frame& fr) {
  if (!(t > 0)) throw std::invalid_argument("heat_kernel: t must be > 0");
  const int d = m.dim();
  const double a = m.scale();
  switch (m.kind()) {
    case ModelKind::euclidean: {
      Vec r = x.coords - y.coords;
      double r2 = r.squaredNorm();
      KernelEval e;
      e.p = std::pow(4.0 * kPi * t, -0.5 * d) * std::exp(-r2 / (4.0 * t));
      e.dp_dt = e.p * (r2 / (4.0 * t * t) - 0.5 * d / t);
      e.grad_x = (-e.p / (2.0 * t)) * r;
      Vec rf = fr.transpose() * r;
      e.hess_x = e.p * (rf * rf.transpose() / (4.0 * t * t) - Mat::Identity(d, d) / (2.0 * t));
      e.laplacian_x = -e.hess_x.trace();
      return e;
    }
    case ModelKind::torus: {
      detail::Wrapped1d g[kMaxDim];
      for (int i = 0; i < d; ++i) g[i] = detail::wrapped_gaussian(x.coords[i] - y.coords[i], t);
      auto prod_except = [&](int i, int j) {
        double p = 1;
        for (int k = 0; k < d; ++k)
          if (k != i && k != j) p *= g[k].g;
        return p;
      };
      KernelEval e;
      e.p = prod_except(-1, -1);
      e.dp_dt = 0;
      e.grad_x = Vec::Zero(d);
      Mat hc(d, d);
      for (int i = 0; i < d; ++i) {
        e.dp_dt += g[i].gt * prod_except(i, -1);
        e.grad_x[i] = g[i].g1 * prod_except(i, -1);
        for (int j = 0; j < d; ++j)
          hc(i, j) = i == j ? g[i].g2 * prod_except(i, -1) : g[i].g1 * g[j].g1 * prod_except(i, j);
      }
      e.hess_x = fr.transpose() * hc * fr;
      e.laplacian_x = -e.hess_x.trace();
      return e;
    }
    case ModelKind::sphere: {
      if (d > 2) throw std::invalid_argument("heat_kernel: spheres are supported for d <= 2 only");
      const double tau = t / (a * a);
      double rho = m.distance(x, y);
      if (d == 1) {
        // circle of length 2 pi a: (1/(2 pi a)) (1 + 2 sum e^{-k^2 tau} cos(k rho / a))
        if (tau < 1e-4) throw std::domain_error("spectral heat sum: truncation unreliable for t < 1e-4");
        detail::RadialKernel k;
        double th = rho / a;
        k.f = 1.0;
        for (int n = 1;; ++n) {
          double e = 2.0 * std::exp(-double(n) * n * tau);
          k.f += e * std::cos(n * th);
          k.f_r += -e * n * std::sin(n * th) / a;
          k.f_rr += -e * n * n * std::cos(n * th) / (a * a);
          k.f_t += -e * n * n * std::cos(n * th) / (a * a);
          if (e * (1.0 + double(n) * n * n * n) < 1e-15) break;
          if (n > 1000000) throw std::domain_error("spectral heat sum: truncation unreliable");
        }
        double norm = 1.0 / (2.0 * kPi * a);
        k.f *= norm, k.f_r *= norm, k.f_rr *= norm, k.f_t *= norm;
        k.f_r_over_r = k.f_rr;
        return detail::assemble_radial(m, x, y, fr, rho, k);
      }
      // c = <x, y> / a^2; grad c = (y - c x) / a^2; Hess c = -(c / a^2) g.
      double c = x.coords.dot(y.coords) / (a * a);
      auto s = detail::legendre_heat_sum(c, tau);
      const double sc = 1.0 / (a * a);
      KernelEval e;
      e.p = sc * s.f;
      e.dp_dt = sc * s.ft / (a * a);
      Vec gc = (y.coords - c * x.coords) / (a * a);
      e.grad_x = sc * s.f1 * gc;
      Vec gcf = fr.transpose() * gc;
      e.hess_x = sc * (s.f2 * gcf * gcf.transpose() - s.f1 * (c / (a * a)) * Mat::Identity(d, d));
      e.laplacian_x = -e.hess_x.trace();
      return e;
    }
    case ModelKind::hyperbolic: {
      double rho = m.distance(x, y);
      const double tau = t / (a * a), r = rho / a;
      detail::RadialKernel k;
      if (d == 3) k = detail::h3_kernel(r, tau);
      else if (d == 2) k = detail::h2_kernel(r, tau);
      else throw std::invalid_argument("heat_kernel: hyperbolic space supported for d in {2, 3}");
      // p^{(a)}(t, rho) = a^{-d} p^{(1)}(t / a^2, rho / a)
      double s = std::pow(a, -d);
      k.f *= s;
      k.f_r *= s / a;
      k.f_rr *= s / (a * a);
      k.f_r_over_r *= s / (a * a);
      k.f_t *= s / (a * a);
      return detail::assemble_radial(m, x, y, fr, rho, k);
    }
  }
  throw std::logic_error("heat_kernel: unknown model");
}

inline KernelEval heat_kernel(const Manifold& m, const Point& x, const Point& y, double t) {
  return heat_kernel(m, x, y, t, m.frame_at(x));
}

/// Whether heat_kernel supports the model.
inline bool has_kernel_oracle(const Manifold& m) {
  switch (m.kind()) {
    case ModelKind::euclidean:
    case ModelKind::torus: return true;
    case ModelKind::sphere: return m.dim() <= 2;
    case ModelKind::hyperbolic: return m.dim() == 2 || m.dim() == 3;
  }
  return false;
}

/// Absolute accuracy of heat_kernel values at time t. Spectral sums (spheres) cancel
/// terms of size up to p_t(x, x), so values below roundoff of the diagonal are noise;
/// closed forms, image sums and positive integrals are relatively accurate (floor 0).
inline double kernel_accuracy_floor(const Manifold& m, double t) {
  if (m.kind() != ModelKind::sphere) return 0.0;
  Point o = m.origin();
  return 1e-13 * heat_kernel(m, o, o, t).p;
}

// ----------------------------------------------------------------- quadrature

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  x.assign(std::size_t(n), 0.0);
  w.assign(std::size_t(n), 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = z;
      for (int l = 1; l < n; ++l) {
        double p2 = ((2.0 * l + 1) * z * p1 - l * p0) / (l + 1);
        p0 = p1, p1 = p2;
      }
      if (n == 1) p1 = z, p0 = 1;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      double p0 = 1, p1 = z;
      for (int l = 1; l < n; ++l) {
        double p2 = ((2.0 * l + 1) * z * p1 - l * p0) / (l + 1);
        p0 = p1, p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
    }
    x[std::size_t(i)] = -z;
    x[std::size_t(n - 1 - i)] = z;
    w[std::size_t(i)] = w[std::size_t(n - 1 - i)] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

struct GridSpec {
  int resolution = 64;  // nodes per direction (sphere: Gauss-Legendre nodes in z)
  double radius = 0;    // R^d box half-width / H^2 cutoff; 0 selects 10 / 12
  double t_ref = 1.0;   // time scale for the reported Gaussian tail bound
  Point centre;         // R^d / H^2 grid centre (defaults to the origin)
};

/// Nodes and volume weights on a model; noncompact grids carry a truncation radius
/// and a Gaussian tail bound e^{-R^2 / (4 t_ref)} scaled by the volume growth.
struct QuadratureGrid {
  std::vector<Point> nodes;
  std::vector<double> weights;
  int degree = 0;            // trigonometric / harmonic exactness degree
  int resolution = 0;
  double truncation_radius = kInf;
  double tail_bound = 0;
  // Structured layout: per-axis counts (torus / box) or (z, phi) counts (sphere) or (rho, phi) (H^2).
  std::vector<int> shape;
  std::vector<std::vector<double>> axes;  // per-axis coordinates

  std::size_t size() const { return nodes.size(); }
  double total_weight() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }
};

inline QuadratureGrid quadrature_grid(const Manifold& m, const GridSpec& spec) {
  const int d = m.dim();
  const int n = spec.resolution;
  if (n < 2) throw std::invalid_argument("quadrature_grid: resolution must be >= 2");
  QuadratureGrid g;
  g.resolution = n;
  auto tensor = [&](const std::vector<double>& axis, const std::vector<double>& wts, double shift) {
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) total *= axis.size();
    if (total > 20000000) throw std::invalid_argument("quadrature_grid: grid too large");
    g.nodes.reserve(total);
    g.weights.reserve(total);
    std::vector<std::size_t> idx(std::size_t(d), 0);
    for (std::size_t c = 0; c < total; ++c) {
      Vec x(d);
      double w = 1;
      for (int i = 0; i < d; ++i) {
        x[i] = axis[idx[std::size_t(i)]] + (spec.centre.coords.size() == d ? spec.centre.coords[i] : 0.0) * shift;
        w *= wts[idx[std::size_t(i)]];
      }
      g.nodes.push_back(Point{x});
      g.weights.push_back(w);
      for (int i = d - 1; i >= 0; --i) {
        if (++idx[std::size_t(i)] < axis.size()) break;
        idx[std::size_t(i)] = 0;
      }
    }
    g.shape.assign(std::size_t(d), int(axis.size()));
    g.axes.assign(std::size_t(d), axis);
  };
  switch (m.kind()) {
    case ModelKind::torus: {
      std::vector<double> axis(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n), 2.0 * kPi / n);
      for (int i = 0; i < n; ++i) axis[std::size_t(i)] = 2.0 * kPi * i / n;
      tensor(axis, w, 0.0);
      g.degree = n - 1;
      return g;
    }
    case ModelKind::euclidean: {
      const double L = spec.radius > 0 ? spec.radius : 10.0;
      std::vector<double> axis(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n), 2.0 * L / n);
      for (int i = 0; i < n; ++i) axis[std::size_t(i)] = -L + (i + 0.5) * 2.0 * L / n;
      tensor(axis, w, 1.0);
      g.truncation_radius = L;
      g.tail_bound = std::exp(-L * L / (4.0 * spec.t_ref));
      return g;
    }
    case ModelKind::sphere: {
      const double a = m.scale();
      if (d == 1) {
        for (int i = 0; i < n; ++i) {
          double phi = 2.0 * kPi * i / n;
          Vec x(2);
          x << a * std::cos(phi), a * std::sin(phi);
          g.nodes.push_back(Point{x});
          g.weights.push_back(2.0 * kPi * a / n);
        }
        g.degree = n - 1;
        g.shape = {n};
        return g;
      }
      if (d != 2) throw std::invalid_argument("quadrature_grid: spheres supported for d <= 2");
      std::vector<double> z, wz;
      gauss_legendre(n, z, wz);
      const int nphi = 2 * n;
      std::vector<double> phis(static_cast<std::size_t>(nphi));
      for (int j = 0; j < nphi; ++j) phis[std::size_t(j)] = 2.0 * kPi * j / nphi;
      for (int i = 0; i < n; ++i) {
        double st = std::sqrt(std::max(0.0, 1.0 - z[std::size_t(i)] * z[std::size_t(i)]));
        for (int j = 0; j < nphi; ++j) {
          Vec x(3);
          x << a * st * std::cos(phis[std::size_t(j)]), a * st * std::sin(phis[std::size_t(j)]),
              a * z[std::size_t(i)];
          g.nodes.push_back(Point{x});
          g.weights.push_back(a * a * wz[std::size_t(i)] * 2.0 * kPi / nphi);
        }
      }
      g.degree = n - 1;  // exact for products up to degree 2n - 1
      g.shape = {n, nphi};
      g.axes = {z, phis};
      return g;
    }
    case ModelKind::hyperbolic: {
      if (d != 2) throw std::invalid_argument("quadrature_grid: hyperbolic grids supported for d = 2");
      const double a = m.scale();
      const double R = spec.radius > 0 ? spec.radius : 12.0;
      Point c = spec.centre.coords.size() == 3 ? spec.centre : m.origin();
      Frame fr = m.frame_at(c);
      std::vector<double> r, wr;
      gauss_legendre(n, r, wr);
      const int nphi = 2 * n;
      std::vector<double> rho(static_cast<std::size_t>(n)), phis(static_cast<std::size_t>(nphi));
      for (int i = 0; i < n; ++i) rho[std::size_t(i)] = 0.5 * R * (r[std::size_t(i)] + 1.0);
      for (int j = 0; j < nphi; ++j) phis[std::size_t(j)] = 2.0 * kPi * j / nphi;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < nphi; ++j) {
          double p = phis[std::size_t(j)];
          Vec u = rho[std::size_t(i)] * (std::cos(p) * fr.col(0) + std::sin(p) * fr.col(1));
          g.nodes.push_back(m.exp(c, u));
          g.weights.push_back(0.5 * R * wr[std::size_t(i)] * a * std::sinh(rho[std::size_t(i)] / a) *
                              2.0 * kPi / nphi);
        }
      g.truncation_radius = R;
      g.tail_bound = std::exp(-R * R / (4.0 * spec.t_ref) + R / a);
      g.shape = {n, nphi};
      g.axes = {rho, phis};
      return g;
    }
  }
  throw std::logic_error("quadrature_grid: unknown model");
}

inline QuadratureGrid quadrature_grid(const Manifold& m, int resolution) {
  GridSpec s;
  s.resolution = resolution;
  return quadrature_grid(m, s);
}

/// (sum w_i |f_i|^p)^{1/p}, or max |f_i| for p = inf. Scaled by max |f| so
/// deep Gaussian tails neither underflow nor overflow.
inline double lp_norm(const QuadratureGrid& grid, const std::vector<double>& f, double p) {
  if (!(p >= 1)) throw std::invalid_argument("lp_norm: p must be >= 1");
  if (f.size() != grid.weights.size()) throw std::invalid_argument("lp_norm: size mismatch");
  double mx = 0;
  for (double v : f) {
    if (!std::isfinite(v)) throw std::invalid_argument("lp_norm: non-finite node value");
    mx = std::max(mx, std::abs(v));
  }
  if (std::isinf(p) || mx == 0) return mx;
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += grid.weights[i] * std::pow(std::abs(f[i]) / mx, p);
  return mx * std::pow(s, 1.0 / p);
}

/// sum w_i f_i.
inline double integrate(const QuadratureGrid& grid, const std::vector<double>& f) {
  if (f.size() != grid.weights.size()) throw std::invalid_argument("integrate: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += grid.weights[i] * f[i];
  return s;
}

}  // namespace mheat
