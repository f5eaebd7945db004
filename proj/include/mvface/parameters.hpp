#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mvface/geometry.hpp"

namespace mvface {

/// Per-view pose and lighting. The rotation is kept as a unit quaternion;
/// Euler angles appear only at I/O boundaries.
struct ViewParams {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();
  Eigen::Matrix<double, 27, 1> sh = Eigen::Matrix<double, 27, 1>::Zero();

  PoseSE3 pose() const {
    PoseSE3 p;
    p.rotation = rotation.toRotationMatrix();
    p.translation = translation;
    return p;
  }
};

/// Subject coefficients plus per-view pose/lighting.
struct ParameterVector {
  Eigen::VectorXd alpha;  // identity
  Eigen::VectorXd beta;   // expression
  Eigen::VectorXd gamma;  // albedo
  std::vector<ViewParams> views;

  int view_count() const { return static_cast<int>(views.size()); }

  /// Flat layout: alpha, beta, gamma, then per view quaternion (w,x,y,z),
  /// translation, 27 lighting coefficients. Round-trips losslessly.
  Eigen::VectorXd pack() const;
  static ParameterVector unpack(const Eigen::VectorXd& flat, int n_id, int n_exp, int n_alb,
                                int n_views);
  static int packed_size(int n_id, int n_exp, int n_alb, int n_views) {
    return n_id + n_exp + n_alb + 34 * n_views;
  }

  /// Throws unless every quaternion satisfies | ||q|| - 1 | < 1e-9.
  void validate() const;

  uint64_t hash() const;
};

}  // namespace mvface
