#pragma once

#include "mheat/curvature.hpp"
#include "mheat/manifold.hpp"
#include "mheat/rng.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mheat {

/// Frame components <v, e_i> of an ambient tangent vector.
inline Vec frame_components(const Manifold& m, const Frame& fr, const Vec& v) {
  Vec c(fr.cols());
  for (int i = 0; i < fr.cols(); ++i) c[i] = m.inner(v, fr.col(i));
  return c;
}

/// Number of steps t / h, rejecting grids that do not tile [0, t].
inline int step_count(double t, double h) {
  if (!(t > 0) || !std::isfinite(t)) throw std::invalid_argument("time horizon must be > 0");
  if (!(h > 0) || h > t * (1 + 1e-12)) throw std::invalid_argument("step must satisfy 0 < h <= t");
  double n = t / h;
  double r = std::nearbyint(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, r))
    throw std::invalid_argument("t / h must be an integer");
  return int(r);
}

/// Geodesic random walk with a parallel-transported orthonormal frame.
///
/// Each step draws anti-development increments dB in R^d with variance 2h per
/// coordinate (generator Delta_LB), moves along the geodesic with initial
/// velocity sum_i dB_i e_i and transports the frame exactly.
class GeodesicWalker {
 public:
  GeodesicWalker(const Manifold& m, const Point& x0, double h, std::uint64_t seed,
                 std::uint64_t stream, double sign = 1.0)
      : m_(&m),
        x_(x0),
        frame_(m.frame_at(x0)),
        noise_(seed, stream),
        sd_(std::sqrt(2.0 * h) * sign),
        db_(Vec::Zero(m.dim())) {}

  const Point& point() const { return x_; }
  const Frame& frame() const { return frame_; }
  /// Increment of the last step, in frame coordinates of the node it started from.
  const Vec& increment() const { return db_; }
  std::uint64_t steps() const { return k_; }

  /// Draws the next increment without moving (so transport processes can use
  /// the left-point state), then `advance()` applies it.
  const Vec& draw() {
    const int d = m_->dim();
    double z[kMaxDim + 1];
    noise_.normals(k_, d, z);
    for (int i = 0; i < d; ++i) db_[i] = sd_ * z[i];
    return db_;
  }

  void advance() {
    Vec u = frame_ * db_;
    move(u);
    ++k_;
    if (!x_.coords.allFinite()) {
      std::ostringstream os;
      os << "path aborted: non-finite coordinates at step " << k_;
      throw std::runtime_error(os.str());
    }
  }

  void step() {
    draw();
    advance();
  }

 private:
  void move(const Vec& u) {
    const Manifold& m = *m_;
    switch (m.kind()) {
      case ModelKind::euclidean: x_.coords += u; return;
      case ModelKind::torus: x_ = m.retract(x_.coords + u); return;
      case ModelKind::sphere:
      case ModelKind::hyperbolic: {
        double len = m.norm(u);
        if (len == 0.0) return;
        const double a = m.scale();
        const double th = len / a;
        const bool sph = m.kind() == ModelKind::sphere;
        const double c = sph ? std::cos(th) : std::cosh(th);
        const double s = sph ? std::sin(th) : std::sinh(th);
        Vec uh = u / len;
        Vec nx = (sph ? -s / a : s / a) * x_.coords + (c - 1.0) * uh;
        for (int b = 0; b < frame_.cols(); ++b) {
          double cb = m.inner(frame_.col(b), uh);
          frame_.col(b) += cb * nx;
        }
        x_ = m.retract(c * x_.coords + (a * s) * uh);
        if ((k_ & 31) == 31) {
          m.orthonormalize(x_, frame_);
        } else {
          for (int b = 0; b < frame_.cols(); ++b) frame_.col(b) = m.project_tangent(x_, frame_.col(b));
        }
        return;
      }
    }
  }

  const Manifold* m_;
  Point x_;
  Frame frame_;
  GaussianStream noise_;
  double sd_;
  Vec db_;
  std::uint64_t k_ = 0;
};

/// Where transport updates take their curvature from.
enum class CurvatureSource {
  analytic,  // closed-form constant-curvature operators
  package    // numerically assembled curvature_package tensors
};

/// One tracked W_t(v, w) component: v, w in initial-frame coordinates, value in
/// the current transported frame.
struct WTrack {
  Vec v, w, value;
};

/// Steps the damped transport Q and the W process along a walk.
///
/// Q_{k+1} = exp(-h Ric#) Q_k and
/// W_{k+1} = exp(-h Ric#) [W_k + R(dB_k, Q_k v) Q_k w - h (d*R + nabla Ric#)(Q_k v, Q_k w)],
/// all in transported-frame coordinates (so the parallel transport is implicit).
class TransportIntegrator {
 public:
  explicit TransportIntegrator(const Manifold& m, CurvatureSource src = CurvatureSource::analytic)
      : m_(&m), src_(src) {}

  void step(const Point& x, const Frame& fr, const Vec& db, double h, Mat& q,
            WTrack* tracks, int n_tracks) const {
    if (src_ == CurvatureSource::analytic) {
      const double kappa = m_->sectional_curvature();
      const double decay = std::exp(-m_->ricci_constant() * h);
      for (int t = 0; t < n_tracks; ++t) {
        if (kappa != 0.0) {
          Vec a = q * tracks[t].v;
          Vec b = q * tracks[t].w;
          // R(dB, a) b = kappa (<a, b> dB - <dB, b> a)
          tracks[t].value += kappa * (a.dot(b) * db - db.dot(b) * a);
        }
        tracks[t].value *= decay;
      }
      q *= decay;
      return;
    }
    CurvaturePackage pkg = curvature_package(*m_, x, fr);
    Eigen::SelfAdjointEigenSolver<Mat> es(pkg.ricci);
    Mat e = es.eigenvectors() *
            (-h * es.eigenvalues().array()).exp().matrix().asDiagonal() *
            es.eigenvectors().transpose();
    for (int t = 0; t < n_tracks; ++t) {
      Vec a = q * tracks[t].v;
      Vec b = q * tracks[t].w;
      Vec next = tracks[t].value + pkg.apply(db, a, b) - h * pkg.divergence_term(a, b);
      tracks[t].value = e * next;
    }
    q = e * q;
  }

 private:
  const Manifold* m_;
  CurvatureSource src_;
};

/// One discretised Brownian trajectory with its frames and increments.
struct PathRecord {
  double t = 0, h = 0;
  std::vector<double> times;
  std::vector<Point> points;
  std::vector<Frame> frames;
  std::vector<Vec> increments;  // frame coordinates, one per step
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
};

/// Geodesic random walk from x0 over [0, t] with step h, keyed by (seed, path_index).
inline PathRecord sample_path(const Manifold& m, const Point& x0, double t, double h,
                              std::uint64_t seed, std::uint64_t path_index) {
  const int n = step_count(t, h);
  if (m.constraint_residual(x0) > 1e-9) throw std::invalid_argument("sample_path: start point off manifold");
  PathRecord rec;
  rec.t = t;
  rec.h = t / n;
  rec.seed = seed;
  rec.path_index = path_index;
  rec.times.reserve(n + 1);
  rec.points.reserve(n + 1);
  rec.frames.reserve(n + 1);
  rec.increments.reserve(n);
  GeodesicWalker walk(m, x0, rec.h, seed, path_index);
  rec.times.push_back(0.0);
  rec.points.push_back(walk.point());
  rec.frames.push_back(walk.frame());
  for (int k = 0; k < n; ++k) {
    rec.increments.push_back(walk.draw());
    walk.advance();
    rec.times.push_back((k + 1) * rec.h);
    rec.points.push_back(walk.point());
    rec.frames.push_back(walk.frame());
  }
  return rec;
}

/// Damped parallel transport Q_k in transported-frame coordinates, Q_0 = I.
inline std::vector<Mat> damped_transport(const Manifold& m, const PathRecord& path,
                                         CurvatureSource src = CurvatureSource::analytic) {
  const int d = m.dim();
  TransportIntegrator integ(m, src);
  std::vector<Mat> qs;
  qs.reserve(path.points.size());
  Mat q = Mat::Identity(d, d);
  qs.push_back(q);
  for (std::size_t k = 0; k < path.increments.size(); ++k) {
    integ.step(path.points[k], path.frames[k], path.increments[k], path.h, q, nullptr, 0);
    qs.push_back(q);
  }
  return qs;
}

/// W_k(v, w) in transported-frame coordinates along the path, W_0 = 0.
inline std::vector<Vec> w_process(const Manifold& m, const PathRecord& path,
                                  const std::vector<Mat>& qs, const TangentVector& v,
                                  const TangentVector& w,
                                  CurvatureSource src = CurvatureSource::analytic) {
  if (qs.size() != path.points.size())
    throw std::invalid_argument("w_process: transport sequence does not match path");
  const int d = m.dim();
  TransportIntegrator integ(m, src);
  WTrack tr{frame_components(m, path.frames[0], v.comps),
            frame_components(m, path.frames[0], w.comps), Vec::Zero(d)};
  std::vector<Vec> out;
  out.reserve(path.points.size());
  out.push_back(tr.value);
  for (std::size_t k = 0; k < path.increments.size(); ++k) {
    Mat q = qs[k];
    integ.step(path.points[k], path.frames[k], path.increments[k], path.h, q, &tr, 1);
    out.push_back(tr.value);
  }
  return out;
}

}  // namespace mheat
