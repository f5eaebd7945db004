#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>

namespace mvface {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

struct BehindCameraError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Pinhole intrinsics. Integer pixel coordinates address pixel centers:
/// u = 0 is the center of column 0.
struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;
  void validate() const;
};

/// Rigid world-to-camera transform: X_cam = rotation * X_world + translation.
struct PoseSE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  PoseSE3 inverse() const;
  void validate(double tol = 1e-9) const;
};

struct PixelProjection {
  double u = 0.0, v = 0.0;
  double depth = 0.0;  // camera-space z
};

/// Projects a world point; empty when the point is not in front of the camera.
std::optional<PixelProjection> try_project(const Vec3& x_world, const PoseSE3& pose,
                                           const CameraIntrinsics& K);

/// Same as try_project but throws BehindCameraError when z <= 0.
PixelProjection project(const Vec3& x_world, const PoseSE3& pose, const CameraIntrinsics& K);

/// Transform taking target-camera coordinates to source-camera coordinates:
/// X_s = R_rel * X_t + t_rel with R_rel = R_s * R_t^T, t_rel = t_s - R_rel * t_t.
PoseSE3 relative_pose(const PoseSE3& target, const PoseSE3& source);

/// World-to-camera pose for a camera at `eye` looking at `target`.
/// `up` is the world up direction; image y points the opposite way (down).
PoseSE3 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 1, 0));

Mat3 skew(const Vec3& v);

/// Rotation exponential/log (axis-angle vector in radians).
Mat3 rotation_exp(const Vec3& omega);
Vec3 rotation_log(const Mat3& r);

double geodesic_angle_deg(const Mat3& a, const Mat3& b);

/// Euler convention used at all I/O boundaries (degrees):
/// R = Ry(yaw) * Rx(pitch) * Rz(roll). Extraction assumes |pitch| < 90 deg.
Mat3 euler_deg_to_rotation(double yaw, double pitch, double roll);
void rotation_to_euler_deg(const Mat3& r, double& yaw, double& pitch, double& roll);

}  // namespace mvface
