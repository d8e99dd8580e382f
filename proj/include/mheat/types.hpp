#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>

namespace mheat {

// Intrinsic dimension cap. Ambient vectors carry at most one extra coordinate
// (sphere / hyperboloid embeddings), so everything fits in small fixed buffers
// and the hot Monte Carlo loops never allocate.
inline constexpr int kMaxDim = 7;
inline constexpr int kMaxAmbient = kMaxDim + 1;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxAmbient, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                          kMaxAmbient, kMaxAmbient>;

/// Point of a model manifold, stored in ambient embedding coordinates.
struct Point {
  Vec coords;
};

/// Tangent vector in ambient coordinates, attached to its base point.
struct TangentVector {
  Point base;
  Vec comps;
};

/// Orthonormal tangent frame: ambient_dim x dim, one frame vector per column.
using Frame = Mat;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

}  // namespace mheat
