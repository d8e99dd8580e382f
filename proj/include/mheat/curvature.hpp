#pragma once

#include "mheat/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mheat {

/// Curvature quantities at a point, as components in an orthonormal frame.
///
/// riemann(i,j,k,l) = <R(e_i, e_j) e_k, e_l> with R(X,Y)Z = nabla_X nabla_Y Z - ...,
/// so that constant curvature kappa reads R(X,Y)Z = kappa (<Y,Z> X - <X,Z> Y).
struct CurvaturePackage {
  int dim = 0;
  std::vector<double> riemann;           // d^4
  Mat ricci;                             // d x d, Ric(e_j, e_k) = sum_i R(i,j,k,i)
  std::vector<double> ricci_sharp_grad;  // d^3, (nabla_{e_a} Ric)(e_b, e_c)
  std::vector<double> dstar_r;           // d^3, <d*R(e_i, e_j), e_k>
  double r_opnorm = 0.0;                 // sup_{|v1|,|v2|<=1} |R^{#,#}(v1, v2)|_HS

  double R(int i, int j, int k, int l) const {
    return riemann[((i * dim + j) * dim + k) * dim + l];
  }
  double grad_ric(int a, int b, int c) const { return ricci_sharp_grad[(a * dim + b) * dim + c]; }
  double dstar(int i, int j, int k) const { return dstar_r[(i * dim + j) * dim + k]; }

  /// R(u, v) w in frame components.
  Vec apply(const Vec& u, const Vec& v, const Vec& w) const {
    Vec out = Vec::Zero(dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) {
        double uv = u[i] * v[j];
        if (uv == 0.0) continue;
        for (int k = 0; k < dim; ++k) {
          double c = uv * w[k];
          if (c == 0.0) continue;
          for (int l = 0; l < dim; ++l) out[l] += c * R(i, j, k, l);
        }
      }
    return out;
  }

  /// (nabla Ric# + d*R)(u, v) in frame components, with (nabla Ric#)(u, v) = (nabla_u Ric#)(v).
  Vec divergence_term(const Vec& u, const Vec& v) const {
    Vec out = Vec::Zero(dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        for (int k = 0; k < dim; ++k)
          out[k] += u[i] * v[j] * (grad_ric(i, j, k) + dstar(i, j, k));
    return out;
  }

  /// |R^{#,#}(v1, v2)|_HS with R^{#,#}(v1, v2)(a, b) = R(a, v1, v2, b).
  double hs_norm(const Vec& v1, const Vec& v2) const {
    double s = 0;
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) {
        double m = 0;
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) m += R(a, i, j, b) * v1[i] * v2[j];
        s += m * m;
      }
    return std::sqrt(s);
  }
};

namespace detail {

// Second fundamental form of the level set {F = c} in the (pseudo-)Euclidean
// ambient space, from finite differences of F. Returns (II in the frame, eps)
// with eps = sign <n, n>. Central differences are exact for quadratic F.
inline std::pair<Mat, double> second_fundamental_form(const Manifold& m, const Point& x,
                                                      const Frame& fr) {
  const int n = m.ambient_dim();
  const int d = m.dim();
  // Large steps: central differences are exact for quadratic F, and second
  // differences along frame directions keep round-off at eps |F| / step^2.
  const double step = 0.5 * m.scale();
  auto F = [&](const Vec& y) { return m.embedding_constraint(y); };
  Vec grad(n);
  for (int a = 0; a < n; ++a) {
    Vec ea = Vec::Zero(n);
    ea[a] = step;
    grad[a] = (F(x.coords + ea) - F(x.coords - ea)) / (2 * step);
  }
  Mat hess(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      Vec p = step * (fr.col(i) + fr.col(j)), q = step * (fr.col(i) - fr.col(j));
      double v = (F(x.coords + p) - F(x.coords + q) - F(x.coords - q) + F(x.coords - p)) /
                 (4 * step * step);
      hess(i, j) = hess(j, i) = v;
    }
  Mat j = m.ambient_metric();  // J^{-1} = J
  Vec n_grad = j * grad;
  double nn = m.inner(n_grad, n_grad);
  double eps = nn < 0 ? -1.0 : 1.0;
  double len = std::sqrt(std::abs(nn));
  return {hess / len, eps};
}

inline std::vector<double> riemann_gauss(const Manifold& m, const Point& x, const Frame& fr) {
  const int d = m.dim();
  std::vector<double> r(static_cast<std::size_t>(d * d * d * d), 0.0);
  if (m.flat() || d == 1) return r;
  auto [ii, eps] = second_fundamental_form(m, x, fr);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l)
          r[((i * d + j) * d + k) * d + l] = eps * (ii(j, k) * ii(i, l) - ii(i, k) * ii(j, l));
  return r;
}

inline Mat ricci_from(const std::vector<double>& r, int d) {
  Mat ric = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) ric(j, k) += r[((i * d + j) * d + k) * d + i];
  return ric;
}

// Ambient isometry L of the model with L x = origin. Curvature components in
// a frame are isometry invariant, and near the origin the embedding is well
// conditioned (far out on the hyperboloid, frame vectors have ambient size
// cosh(rho) and level-set differences lose ~cosh^2(rho) digits).
inline Mat normalizing_isometry(const Manifold& m, const Point& x) {
  const int n = m.ambient_dim();
  const double a = m.scale();
  Mat L = Mat::Identity(n, n);
  if (m.kind() == ModelKind::sphere) {
    Vec u = x.coords / a;
    u[n - 1] -= 1.0;
    double uu = u.squaredNorm();
    if (uu > 1e-30) L -= (2.0 / uu) * u * u.transpose();  // Householder reflection
  } else if (m.kind() == ModelKind::hyperbolic) {
    // Inverse of the boost taking (a, 0) to x = (x0, y).
    double x0 = x.coords[0];
    Vec y = x.coords.tail(n - 1);
    L(0, 0) = x0 / a;
    L.block(0, 1, 1, n - 1) = -y.transpose() / a;
    L.block(1, 0, n - 1, 1) = -y / a;
    L.block(1, 1, n - 1, n - 1) += y * y.transpose() / (a * (x0 + a));
  }
  return L;
}

// Deterministic direction set on S^{d-1}.
inline std::vector<Vec> unit_directions(int d, int count) {
  std::vector<Vec> dirs;
  if (d == 1) {
    Vec v(1);
    v[0] = 1.0;
    dirs.push_back(v);
    return dirs;
  }
  if (d == 2) {
    for (int k = 0; k < count; ++k) {
      Vec v(2);
      v << std::cos(2 * kPi * k / count), std::sin(2 * kPi * k / count);
      dirs.push_back(v);
    }
    return dirs;
  }
  // Frame axes, then a Kronecker (golden-ratio) sequence mapped through
  // normalised coordinates in [-1, 1]^d.
  for (int i = 0; i < d && int(dirs.size()) < count; ++i) {
    Vec v = Vec::Zero(d);
    v[i] = 1.0;
    dirs.push_back(v);
  }
  double alpha[kMaxDim];
  for (int i = 0; i < d; ++i) alpha[i] = std::fmod(std::sqrt(2.0 + 3.0 * i) * 0.6180339887, 1.0);
  for (int k = 1; int(dirs.size()) < count; ++k) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = 2.0 * std::fmod(k * alpha[i] + 0.5, 1.0) - 1.0;
    if (v.norm() < 1e-3) continue;
    dirs.push_back(v.normalized());
  }
  return dirs;
}

// Maximise g(v1, v2) over pairs of unit vectors: grid, then pattern search.
template <class G>
double maximize_over_unit_pairs(int d, G&& g, int grid = 64) {
  auto dirs = unit_directions(d, grid);
  double best = -1;
  Vec b1, b2;
  for (const auto& v1 : dirs)
    for (const auto& v2 : dirs) {
      double val = g(v1, v2);
      if (val > best) best = val, b1 = v1, b2 = v2;
    }
  for (double step = 0.05; step > 1e-7; step *= 0.3) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int which = 0; which < 2; ++which)
        for (int i = 0; i < d; ++i)
          for (double sgn : {-1.0, 1.0}) {
            Vec c1 = b1, c2 = b2;
            Vec& c = which == 0 ? c1 : c2;
            c[i] += sgn * step;
            c.normalize();
            double val = g(c1, c2);
            if (val > best + 1e-15) best = val, b1 = c1, b2 = c2, improved = true;
          }
    }
  }
  return best;
}

}  // namespace detail

inline CurvaturePackage curvature_package_normalized(const Manifold& m, const Point& x,
                                                     const Frame& fr);

/// Riemann tensor via the Gauss equation of the embedding, Ricci by contraction,
/// nabla Ric# and d*R by differences of Ric along geodesics in transported
/// frames, and |R|(x) by maximisation over pairs of unit directions.
inline CurvaturePackage curvature_package(const Manifold& m, const Point& x, const Frame& fr) {
  const int d = m.dim();
  {
    Mat gram(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) gram(a, b) = m.inner(fr.col(a), fr.col(b));
    if ((gram - Mat::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-8)
      throw std::invalid_argument("curvature_package: frame is not orthonormal");
  }
  if (m.embedded()) {
    Mat L = detail::normalizing_isometry(m, x);
    Point xo = m.retract(L * x.coords);
    Frame fo = L * fr;
    m.orthonormalize(xo, fo);
    return curvature_package_normalized(m, xo, fo);
  }
  return curvature_package_normalized(m, x, fr);
}

/// Package assembly at a point where the embedding is well conditioned.
inline CurvaturePackage curvature_package_normalized(const Manifold& m, const Point& x,
                                                     const Frame& fr) {
  const int d = m.dim();
  CurvaturePackage pkg;
  pkg.dim = d;
  pkg.riemann = detail::riemann_gauss(m, x, fr);
  pkg.ricci = detail::ricci_from(pkg.riemann, d);

  pkg.ricci_sharp_grad.assign(std::size_t(d * d * d), 0.0);
  pkg.dstar_r.assign(std::size_t(d * d * d), 0.0);
  if (!m.flat()) {
    const double delta = 1e-2 * m.scale();
    for (int a = 0; a < d; ++a) {
      Vec u = fr.col(a);
      Frame fp(fr.rows(), d), fm(fr.rows(), d);
      for (int b = 0; b < d; ++b) {
        fp.col(b) = m.transport(x, delta * u, fr.col(b));
        fm.col(b) = m.transport(x, -delta * u, fr.col(b));
      }
      Point xp = m.exp(x, delta * u), xm = m.exp(x, -delta * u);
      Mat rp = detail::ricci_from(detail::riemann_gauss(m, xp, fp), d);
      Mat rm = detail::ricci_from(detail::riemann_gauss(m, xm, fm), d);
      Mat dr = (rp - rm) / (2 * delta);
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c) pkg.ricci_sharp_grad[(a * d + b) * d + c] = dr(b, c);
    }
    // <d*R(v1, v2), v3> = <(nabla_{v3} Ric#)(v1), v2> - <(nabla_{v2} Ric#)(v3), v1>
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          pkg.dstar_r[(i * d + j) * d + k] = pkg.grad_ric(k, i, j) - pkg.grad_ric(j, k, i);
  }

  if (!m.flat() && d >= 2)
    pkg.r_opnorm = detail::maximize_over_unit_pairs(
        d, [&](const Vec& v1, const Vec& v2) { return pkg.hs_norm(v1, v2); });
  return pkg;
}

}  // namespace mheat
