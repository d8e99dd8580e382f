#pragma once

#include "mheat/fields.hpp"

#include <cmath>
#include <functional>

namespace mheat {

/// Finite differences through the exponential map. Second derivatives along
/// geodesics are exactly Hess f(v, v), so these are independent of the oracles.
namespace fd {

inline constexpr double kDefaultStep = 1e-4;

/// Frame components of grad f (central differences, step h).
inline Vec gradient(const Manifold& m, const std::function<double(const Point&)>& f,
                    const Point& x, const Frame& fr, double h = kDefaultStep) {
  const int d = m.dim();
  Vec g(d);
  for (int i = 0; i < d; ++i) {
    Vec e = fr.col(i);
    g[i] = (f(m.exp(x, h * e)) - f(m.exp(x, -h * e))) / (2.0 * h);
  }
  return g;
}

/// Hessian in the frame, via second differences along geodesics and polarisation.
inline Mat hessian(const Manifold& m, const std::function<double(const Point&)>& f,
                   const Point& x, const Frame& fr, double h = kDefaultStep) {
  const int d = m.dim();
  const double f0 = f(x);
  auto second = [&](const Vec& v) {
    return (f(m.exp(x, h * v)) - 2.0 * f0 + f(m.exp(x, -h * v))) / (h * h);
  };
  Mat hm(d, d);
  for (int i = 0; i < d; ++i) hm(i, i) = second(fr.col(i));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      Vec a = fr.col(i), b = fr.col(j);
      hm(i, j) = hm(j, i) = 0.25 * (second(a + b) - second(a - b));
    }
  return hm;
}

}  // namespace fd

/// Residual |d(Delta_LB f) - tr Hess(df) + df(Ric#)| at x, with derivatives of
/// the Hessian and Laplacian oracles taken by central differences along
/// geodesics in parallel-transported frames.
///
/// The commutation identity holds for the geometric Laplacian Delta_LB = div grad
/// (the sign for which the Bochner/Weitzenboeck formula reads as written), i.e.
/// Delta_LB = -f.laplacian.
inline double commutation_residual(const Manifold& m, const ScalarField& f, const Point& x,
                                   double h = fd::kDefaultStep) {
  if (!f.has_derivatives()) throw std::invalid_argument("commutation_residual: field lacks oracles");
  const int d = m.dim();
  const Frame fr = m.frame_at(x);

  Vec grad_frame(d);
  Vec g = f.grad(x);
  for (int i = 0; i < d; ++i) grad_frame[i] = m.inner(g, fr.col(i));

  // d(Delta_LB f)(e_k)
  Vec d_lap(d);
  for (int k = 0; k < d; ++k) {
    Vec e = fr.col(k);
    double lp = -f.laplacian(m.exp(x, h * e));
    double lm = -f.laplacian(m.exp(x, -h * e));
    d_lap[k] = (lp - lm) / (2.0 * h);
  }

  // tr Hess(df)(e_k) = sum_i (nabla_{e_i} Hess f)(e_i, e_k)
  Vec tr_hess_df = Vec::Zero(d);
  for (int i = 0; i < d; ++i) {
    Vec u = fr.col(i);
    Frame fp(fr.rows(), d), fm(fr.rows(), d);
    for (int b = 0; b < d; ++b) {
      fp.col(b) = m.transport(x, h * u, fr.col(b));
      fm.col(b) = m.transport(x, -h * u, fr.col(b));
    }
    Mat hp = f.hess(m.exp(x, h * u), fp);
    Mat hm = f.hess(m.exp(x, -h * u), fm);
    Mat dh = (hp - hm) / (2.0 * h);
    for (int k = 0; k < d; ++k) tr_hess_df[k] += dh(i, k);
  }

  Vec ric_df = m.ricci_constant() * grad_frame;
  return (d_lap - tr_hess_df + ric_df).norm();
}

}  // namespace mheat
