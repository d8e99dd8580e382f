#pragma once

#include "mheat/manifold.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

namespace mheat {

/// Test function with exact derivative oracles.
///
/// `grad` returns an ambient tangent vector, `hess` the Hessian in the given
/// orthonormal frame, and `laplacian` the value of the positive Laplacian
/// Delta = -trace(Hess) (the geometric Laplace-Beltrami operator is -Delta).
struct ScalarField {
  std::string name;
  std::function<double(const Point&)> eval;
  std::function<Vec(const Point&)> grad;
  std::function<Mat(const Point&, const Frame&)> hess;
  std::function<double(const Point&)> laplacian;
  double support_radius = kInf;

  bool has_derivatives() const { return bool(grad) && bool(hess) && bool(laplacian); }
};

namespace fields {

namespace detail {

// Fills the Laplacian from the Hessian oracle.
inline void attach_laplacian(const Manifold& m, ScalarField& f) {
  auto hess = f.hess;
  f.laplacian = [m, hess](const Point& x) { return -hess(x, m.frame_at(x)).trace(); };
}

// Radial profile phi(rho) about a centre; phi_over_rho = phi'(rho) / rho with
// its finite limit phi''(0) at the centre.
struct RadialProfile {
  std::function<double(double)> phi;
  std::function<double(double)> dphi;
  std::function<double(double)> d2phi;
  std::function<double(double)> dphi_over_rho;
};

inline ScalarField radial(const Manifold& m, const Point& c, std::string name, RadialProfile prof,
                          double support) {
  ScalarField f;
  f.name = std::move(name);
  f.support_radius = support;
  f.eval = [m, c, prof](const Point& x) { return prof.phi(m.distance(x, c)); };
  f.grad = [m, c, prof](const Point& x) -> Vec {
    double rho = m.distance(x, c);
    if (rho == 0.0) return Vec::Zero(m.ambient_dim());
    return (-prof.dphi(rho) / rho) * m.log(x, c);
  };
  f.hess = [m, c, prof](const Point& x, const Frame& fr) -> Mat {
    const int d = m.dim();
    double rho = m.distance(x, c);
    Mat h = Mat::Identity(d, d);
    if (rho < 1e-12) return prof.d2phi(0.0) * h;
    Vec n(d);
    Vec dir = -m.log(x, c) / rho;
    for (int i = 0; i < d; ++i) n[i] = m.inner(dir, fr.col(i));
    Mat nn = n * n.transpose();
    return prof.d2phi(rho) * nn + prof.dphi_over_rho(rho) * m.rho_cot(rho) * (h - nn);
  };
  attach_laplacian(m, f);
  return f;
}

}  // namespace detail

inline ScalarField constant(const Manifold& m, double value) {
  ScalarField f;
  f.name = "constant";
  f.eval = [value](const Point&) { return value; };
  f.grad = [m](const Point&) -> Vec { return Vec::Zero(m.ambient_dim()); };
  f.hess = [m](const Point&, const Frame&) -> Mat { return Mat::Zero(m.dim(), m.dim()); };
  f.laplacian = [](const Point&) { return 0.0; };
  return f;
}

/// Restriction of the ambient coordinate x_i (linear functions on every embedding).
inline ScalarField coordinate(const Manifold& m, int i) {
  if (i < 0 || i >= m.ambient_dim()) throw std::invalid_argument("coordinate: index out of range");
  if (m.kind() == ModelKind::torus)
    throw std::invalid_argument("coordinate: not a function on the torus (use sine/cosine)");
  ScalarField f;
  f.name = "coordinate" + std::to_string(i);
  f.eval = [i](const Point& x) { return x.coords[i]; };
  // On the hyperboloid x_i = <J e_i, x>_L is linear for the Minkowski form.
  f.grad = [m, i](const Point& x) -> Vec {
    Vec e = Vec::Zero(m.ambient_dim());
    e[i] = (m.kind() == ModelKind::hyperbolic && i == 0) ? -1.0 : 1.0;
    return m.project_tangent(x, e);
  };
  f.hess = [m, i](const Point& x, const Frame&) -> Mat {
    double k = m.sectional_curvature();  // Hess = -kappa * l * g on both embeddings
    return (-k * x.coords[i]) * Mat::Identity(m.dim(), m.dim());
  };
  detail::attach_laplacian(m, f);
  return f;
}

/// x_i^2 on Euclidean space.
inline ScalarField coordinate_squared(const Manifold& m, int i) {
  if (m.kind() != ModelKind::euclidean) throw std::invalid_argument("coordinate_squared: Euclidean only");
  ScalarField f;
  f.name = "square" + std::to_string(i);
  f.eval = [i](const Point& x) { return x.coords[i] * x.coords[i]; };
  f.grad = [m, i](const Point& x) -> Vec {
    Vec g = Vec::Zero(m.ambient_dim());
    g[i] = 2.0 * x.coords[i];
    return g;
  };
  f.hess = [i](const Point&, const Frame& fr) -> Mat {
    Vec row = fr.row(i).transpose();
    return 2.0 * row * row.transpose();
  };
  detail::attach_laplacian(m, f);
  return f;
}

/// |x|^2 on Euclidean space.
inline ScalarField norm_squared(const Manifold& m) {
  if (m.kind() != ModelKind::euclidean) throw std::invalid_argument("norm_squared: Euclidean only");
  ScalarField f;
  f.name = "norm_squared";
  f.eval = [](const Point& x) { return x.coords.squaredNorm(); };
  f.grad = [](const Point& x) -> Vec { return 2.0 * x.coords; };
  f.hess = [](const Point&, const Frame& fr) -> Mat { return 2.0 * fr.transpose() * fr; };
  detail::attach_laplacian(m, f);
  return f;
}

/// sin(x_i) (torus or Euclidean space).
inline ScalarField sine(const Manifold& m, int i, double phase = 0.0) {
  if (!m.flat()) throw std::invalid_argument("sine: flat models only");
  if (i < 0 || i >= m.dim()) throw std::invalid_argument("sine: index out of range");
  ScalarField f;
  f.name = "sine" + std::to_string(i);
  f.eval = [i, phase](const Point& x) { return std::sin(x.coords[i] + phase); };
  f.grad = [m, i, phase](const Point& x) -> Vec {
    Vec g = Vec::Zero(m.ambient_dim());
    g[i] = std::cos(x.coords[i] + phase);
    return g;
  };
  f.hess = [i, phase](const Point& x, const Frame& fr) -> Mat {
    Vec row = fr.row(i).transpose();
    return -std::sin(x.coords[i] + phase) * row * row.transpose();
  };
  detail::attach_laplacian(m, f);
  return f;
}

inline ScalarField cosine(const Manifold& m, int i) {
  ScalarField f = sine(m, i, kPi / 2);
  f.name = "cosine" + std::to_string(i);
  return f;
}

/// exp(-rho^2 / width^2) about `centre`.
inline ScalarField gaussian_bump(const Manifold& m, const Point& centre, double width) {
  if (!(width > 0)) throw std::invalid_argument("gaussian_bump: width must be > 0");
  double w2 = width * width;
  detail::RadialProfile p;
  p.phi = [w2](double r) { return std::exp(-r * r / w2); };
  p.dphi = [w2](double r) { return -2.0 * r / w2 * std::exp(-r * r / w2); };
  p.d2phi = [w2](double r) { return (4.0 * r * r / (w2 * w2) - 2.0 / w2) * std::exp(-r * r / w2); };
  p.dphi_over_rho = [w2](double r) { return -2.0 / w2 * std::exp(-r * r / w2); };
  return detail::radial(m, centre, "gaussian_bump", p, kInf);
}

/// Compactly supported bump exp(1 - 1/(1 - (rho/R)^2)) for rho < R.
inline ScalarField compact_bump(const Manifold& m, const Point& centre, double radius) {
  if (!(radius > 0)) throw std::invalid_argument("compact_bump: radius must be > 0");
  double r2 = radius * radius;
  detail::RadialProfile p;
  // phi = exp(1 - 1/(1-s)), s = rho^2/R^2
  p.phi = [r2](double r) {
    double s = r * r / r2;
    return s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
  };
  p.dphi_over_rho = [r2](double r) {
    double s = r * r / r2;
    if (s >= 1.0) return 0.0;
    double q = 1.0 - s;
    return -2.0 / (r2 * q * q) * std::exp(1.0 - 1.0 / q);
  };
  p.dphi = [p](double r) { return r * p.dphi_over_rho(r); };
  p.d2phi = [r2](double r) {
    double s = r * r / r2;
    if (s >= 1.0) return 0.0;
    double q = 1.0 - s;
    double e = std::exp(1.0 - 1.0 / q);
    // d/dr [ r * g(r) ] with g = -2/(R^2 q^2) e
    double g = -2.0 / (r2 * q * q) * e;
    double dg = -2.0 / r2 * e * (4.0 * r / (r2 * q * q * q) - 2.0 * r / (r2 * q * q * q * q));
    return g + r * dg;
  };
  return detail::radial(m, centre, "compact_bump", p, radius);
}

}  // namespace fields
}  // namespace mheat
