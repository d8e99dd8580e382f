#pragma once

#include "mheat/types.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace mheat {

enum class ModelKind { euclidean, torus, sphere, hyperbolic };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::euclidean: return "euclidean";
    case ModelKind::torus: return "torus";
    case ModelKind::sphere: return "sphere";
    case ModelKind::hyperbolic: return "hyperbolic";
  }
  return "unknown";
}

/// A model Riemannian manifold with constant sectional curvature.
///
/// Sphere S^d(r) sits in R^{d+1}; hyperbolic space H^d(a) of curvature -1/a^2
/// is the upper sheet of the hyperboloid <x,x>_L = -a^2 in Minkowski space
/// R^{d,1} (time-like coordinate first); the flat torus (R / 2 pi Z)^d uses a
/// periodic chart with coordinates reduced to [0, 2 pi).
class Manifold {
 public:
  static Manifold euclidean(int d) { return Manifold(ModelKind::euclidean, d, 1.0); }
  static Manifold torus(int d) { return Manifold(ModelKind::torus, d, 1.0); }
  static Manifold sphere(int d, double radius = 1.0) {
    return Manifold(ModelKind::sphere, d, radius);
  }
  static Manifold hyperbolic(int d, double curvature_scale = 1.0) {
    return Manifold(ModelKind::hyperbolic, d, curvature_scale);
  }

  ModelKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int ambient_dim() const { return embedded() ? dim_ + 1 : dim_; }
  /// Sphere radius or hyperbolic curvature scale; 1 on flat models.
  double scale() const { return scale_; }
  bool embedded() const { return kind_ == ModelKind::sphere || kind_ == ModelKind::hyperbolic; }
  bool compact() const { return kind_ == ModelKind::sphere || kind_ == ModelKind::torus; }
  bool flat() const { return kind_ == ModelKind::euclidean || kind_ == ModelKind::torus; }

  /// Constant sectional curvature kappa.
  double sectional_curvature() const {
    switch (kind_) {
      case ModelKind::sphere: return 1.0 / (scale_ * scale_);
      case ModelKind::hyperbolic: return -1.0 / (scale_ * scale_);
      default: return 0.0;
    }
  }
  /// Ric = ricci_constant() * g.
  double ricci_constant() const { return (dim_ - 1) * sectional_curvature(); }
  /// K >= 0 with Ric >= -K.
  double ricci_lower_bound() const { return std::max(0.0, -ricci_constant()); }

  std::string name() const {
    return to_string(kind_) + "(d=" + std::to_string(dim_) +
           (embedded() ? ", scale=" + fmt_double(scale_) : "") + ")";
  }

  // ---------------------------------------------------------------- metric

  double inner(const Vec& u, const Vec& v) const {
    if (kind_ == ModelKind::hyperbolic) return u.dot(v) - 2.0 * u[0] * v[0];
    return u.dot(v);
  }
  double norm(const Vec& v) const { return std::sqrt(std::max(0.0, inner(v, v))); }

  /// Base point: origin, north pole (last coordinate) or hyperboloid vertex.
  Point origin() const {
    Vec x = Vec::Zero(ambient_dim());
    if (kind_ == ModelKind::sphere) x[dim_] = scale_;
    if (kind_ == ModelKind::hyperbolic) x[0] = scale_;
    return Point{x};
  }

  /// Distance of x from the embedding constraint (0 on flat models).
  double constraint_residual(const Point& x) const {
    switch (kind_) {
      case ModelKind::sphere: return std::abs(x.coords.norm() - scale_);
      case ModelKind::hyperbolic:
        // Time coordinate against its value on the upper sheet (no cancellation).
        return std::abs(x.coords[0] - std::sqrt(scale_ * scale_ + x.coords.tail(dim_).squaredNorm()));
      case ModelKind::torus: {
        double r = 0;
        for (int i = 0; i < dim_; ++i)
          if (x.coords[i] < 0 || x.coords[i] >= 2 * kPi) r = std::max(r, 1.0);
        return r;
      }
      default: return 0.0;
    }
  }

  /// Level-set function F with M = {F = level}, used by the curvature package.
  double embedding_constraint(const Vec& x) const {
    return kind_ == ModelKind::hyperbolic ? inner(x, x) : x.squaredNorm();
  }
  /// Ambient metric matrix (Euclidean or Minkowski).
  Mat ambient_metric() const {
    Mat j = Mat::Identity(ambient_dim(), ambient_dim());
    if (kind_ == ModelKind::hyperbolic) j(0, 0) = -1.0;
    return j;
  }

  /// Maps an ambient vector back onto the manifold.
  Point retract(const Vec& y) const {
    Vec x = y;
    switch (kind_) {
      case ModelKind::sphere: x *= scale_ / y.norm(); break;
      case ModelKind::hyperbolic:
        x[0] = std::sqrt(scale_ * scale_ + y.tail(dim_).squaredNorm());
        break;
      case ModelKind::torus:
        for (int i = 0; i < dim_; ++i) {
          double c = std::fmod(y[i], 2 * kPi);
          if (c < 0) c += 2 * kPi;
          if (c >= 2 * kPi) c = 0.0;
          x[i] = c;
        }
        break;
      case ModelKind::euclidean: break;
    }
    return Point{x};
  }

  Vec project_tangent(const Point& p, const Vec& v) const {
    const Vec& x = p.coords;
    switch (kind_) {
      case ModelKind::sphere: return v - (v.dot(x) / (scale_ * scale_)) * x;
      case ModelKind::hyperbolic: return v + (inner(v, x) / (scale_ * scale_)) * x;
      default: return v;
    }
  }

  /// Orthonormal frame at x (Gram-Schmidt over projected ambient axes).
  Frame frame_at(const Point& x) const {
    const int n = ambient_dim();
    Frame f(n, dim_);
    int filled = 0;
    for (int a = 0; a < n && filled < dim_; ++a) {
      Vec e = Vec::Zero(n);
      e[a] = 1.0;
      Vec v = project_tangent(x, e);
      for (int b = 0; b < filled; ++b) v -= inner(v, f.col(b)) * f.col(b);
      double nv = norm(v);
      if (nv < 1e-6) continue;
      f.col(filled++) = v / nv;
    }
    if (filled != dim_) throw std::logic_error("frame_at: degenerate tangent space");
    return f;
  }

  /// Re-orthonormalises a transported frame (drift is pure round-off on model spaces).
  void orthonormalize(const Point& x, Frame& f) const {
    for (int b = 0; b < dim_; ++b) {
      Vec v = project_tangent(x, f.col(b));
      for (int c = 0; c < b; ++c) v -= inner(v, f.col(c)) * f.col(c);
      f.col(b) = v / norm(v);
    }
  }

  // ------------------------------------------------------------- geodesics

  /// Exponential map exp_x(u).
  Point exp(const Point& p, const Vec& u) const {
    const Vec& x = p.coords;
    switch (kind_) {
      case ModelKind::euclidean: return Point{x + u};
      case ModelKind::torus: return retract(x + u);
      case ModelKind::sphere: {
        double len = u.norm();
        if (len == 0.0) return p;
        double th = len / scale_;
        return retract(std::cos(th) * x + (scale_ * std::sin(th) / len) * u);
      }
      case ModelKind::hyperbolic: {
        double len = norm(u);
        if (len == 0.0) return p;
        double th = len / scale_;
        return retract(std::cosh(th) * x + (scale_ * std::sinh(th) / len) * u);
      }
    }
    return p;
  }

  /// Parallel transport of e from x to exp_x(u) along the geodesic.
  Vec transport(const Point& p, const Vec& u, const Vec& e) const {
    if (flat()) return e;
    const Vec& x = p.coords;
    double len = norm(u);
    if (len == 0.0) return e;
    Vec uh = u / len;
    double th = len / scale_;
    double c = inner(e, uh);
    if (kind_ == ModelKind::sphere)
      return e + c * ((std::cos(th) - 1.0) * uh - (std::sin(th) / scale_) * x);
    return e + c * ((std::cosh(th) - 1.0) * uh + (std::sinh(th) / scale_) * x);
  }

  /// Geodesic distance (closed form on every model).
  double distance(const Point& p, const Point& q) const {
    const Vec& x = p.coords;
    const Vec& y = q.coords;
    switch (kind_) {
      case ModelKind::euclidean: return (x - y).norm();
      case ModelKind::torus: return wrapped_difference(x, y).norm();
      case ModelKind::sphere: {
        double chord = (x - y).norm() / (2.0 * scale_);
        return 2.0 * scale_ * std::asin(std::min(1.0, chord));
      }
      case ModelKind::hyperbolic: {
        Vec d = x - y;
        double chord = std::sqrt(std::max(0.0, inner(d, d)));
        return 2.0 * scale_ * std::asinh(chord / (2.0 * scale_));
      }
    }
    return 0.0;
  }

  /// Inverse exponential map: the initial velocity of the minimal geodesic x -> y.
  Vec log(const Point& p, const Point& q) const {
    const Vec& x = p.coords;
    const Vec& y = q.coords;
    switch (kind_) {
      case ModelKind::euclidean: return y - x;
      case ModelKind::torus: return wrapped_difference(x, y);
      default: break;
    }
    double rho = distance(p, q);
    if (rho == 0.0) return Vec::Zero(ambient_dim());
    Vec w = project_tangent(p, y);
    double nw = norm(w);
    if (nw < 1e-300) w = frame_at(p).col(0), nw = 1.0;  // antipode: any direction
    return (rho / nw) * w;
  }

  /// Largest possible distance (infinite on non-compact models).
  double diameter() const {
    switch (kind_) {
      case ModelKind::torus: return kPi * std::sqrt(double(dim_));
      case ModelKind::sphere: return kPi * scale_;
      default: return kInf;
    }
  }

  /// (rho * ct(rho)) where ct is the logarithmic derivative of the Jacobi field,
  /// so that Hess rho = ct(rho) (g - d rho (x) d rho). Stable at rho -> 0.
  double rho_cot(double rho) const {
    double u = rho / scale_;
    switch (kind_) {
      case ModelKind::sphere: return u < 1e-4 ? 1.0 - u * u / 3.0 : u / std::tan(u);
      case ModelKind::hyperbolic: return u < 1e-4 ? 1.0 + u * u / 3.0 : u / std::tanh(u);
      default: return 1.0;
    }
  }

  // ---------------------------------------------------------------- volume

  /// Volume of the geodesic ball of radius r (independent of the centre).
  double ball_volume(double r) const {
    if (!(r > 0)) return 0.0;
    const double s = scale_;
    switch (kind_) {
      case ModelKind::euclidean: return unit_ball_volume(dim_) * std::pow(r, dim_);
      case ModelKind::torus: return torus_ball_volume(dim_, r);
      case ModelKind::sphere: {
        double rr = std::min(r, kPi * s);
        if (dim_ == 1) return 2.0 * rr;
        if (dim_ == 2) return 2.0 * kPi * s * s * (1.0 - std::cos(rr / s));
        return sphere_area(dim_ - 1) * std::pow(s, dim_ - 1) *
               integrate([&](double u) { return std::pow(std::sin(u / s), dim_ - 1); }, 0.0, rr);
      }
      case ModelKind::hyperbolic: {
        if (dim_ == 1) return 2.0 * r;
        if (dim_ == 2) return 2.0 * kPi * s * s * (std::cosh(r / s) - 1.0);
        if (dim_ == 3)
          return 4.0 * kPi * s * s * s * (std::sinh(2.0 * r / s) / 4.0 - r / (2.0 * s));
        return sphere_area(dim_ - 1) * std::pow(s, dim_ - 1) *
               integrate([&](double u) { return std::pow(std::sinh(u / s), dim_ - 1); }, 0.0, r);
      }
    }
    return 0.0;
  }

  /// Total volume (infinite on non-compact models).
  double total_volume() const {
    if (kind_ == ModelKind::torus) return std::pow(2.0 * kPi, dim_);
    if (kind_ == ModelKind::sphere) return ball_volume(kPi * scale_);
    return kInf;
  }

  /// C with V(x, 2r) <= 2^d exp(2 C r) V(x, r) for all r > 0.
  double doubling_constant() const {
    if (kind_ == ModelKind::hyperbolic) return (dim_ - 1) / (2.0 * scale_);
    return 0.0;
  }

  static double unit_ball_volume(int d) {
    return std::pow(kPi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
  }
  /// Area of the unit sphere S^k in R^{k+1}.
  static double sphere_area(int k) {
    return 2.0 * std::pow(kPi, (k + 1) / 2.0) / std::tgamma((k + 1) / 2.0);
  }

  Vec wrapped_difference(const Vec& x, const Vec& y) const {
    Vec d = y - x;
    for (int i = 0; i < d.size(); ++i) d[i] -= 2.0 * kPi * std::nearbyint(d[i] / (2.0 * kPi));
    return d;
  }

  bool operator==(const Manifold& o) const {
    return kind_ == o.kind_ && dim_ == o.dim_ && scale_ == o.scale_;
  }

 private:
  Manifold(ModelKind k, int d, double s) : kind_(k), dim_(d), scale_(s) {
    if (d < 1 || d > kMaxDim)
      throw std::invalid_argument("manifold dimension must lie in [1, " +
                                  std::to_string(kMaxDim) + "]");
    if (!(s > 0) || !std::isfinite(s))
      throw std::invalid_argument("manifold scale must be positive and finite");
  }

  template <class F>
  static double integrate(F&& f, double a, double b) {
    if (b <= a) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-13);
  }

  // Ball in the flat torus = Euclidean ball intersected with the centred cube
  // [-pi, pi]^d (valid for every r, including balls wrapping around).
  static double torus_ball_volume(int d, double r) {
    if (r >= kPi * std::sqrt(double(d))) return std::pow(2.0 * kPi, d);
    if (d == 1) return 2.0 * std::min(r, kPi);
    if (r <= kPi) return unit_ball_volume(d) * std::pow(r, d);
    double a = std::min(r, kPi);
    return integrate(
        [&](double x) { return torus_ball_volume(d - 1, std::sqrt(std::max(0.0, r * r - x * x))); },
        -a, a);
  }

  static std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

  ModelKind kind_;
  int dim_;
  double scale_;
};

/// Moves from x along the geodesic with initial velocity v for time h.
inline Point geodesic_step(const Manifold& m, const Point& x, const Vec& v, double h) {
  if (!(h > 0) || !std::isfinite(h)) throw std::invalid_argument("geodesic_step: step must be > 0");
  if (!v.allFinite()) throw std::invalid_argument("geodesic_step: non-finite velocity");
  return m.exp(x, h * v);
}

struct DistanceVolume {
  double rho;
  double vol;
  double doubling_ratio;
};

inline DistanceVolume distance_volume(const Manifold& m, const Point& x, const Point& y, double r) {
  if (!(r > 0)) throw std::invalid_argument("distance_volume: radius must be > 0");
  double v = m.ball_volume(r);
  return {m.distance(x, y), v, m.ball_volume(2.0 * r) / v};
}

}  // namespace mheat
