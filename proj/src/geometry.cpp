#include "mvface/geometry.hpp"

#include <cmath>

namespace mvface {

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Mat3 CameraIntrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image size must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw std::invalid_argument("intrinsics: principal point outside image");
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 inv;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.rotation * translation;
  return inv;
}

void PoseSE3::validate(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  if (ortho > tol) throw std::invalid_argument("pose: rotation not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > tol)
    throw std::invalid_argument("pose: rotation determinant != +1");
}

std::optional<PixelProjection> try_project(const Vec3& x_world, const PoseSE3& pose,
                                           const CameraIntrinsics& K) {
  const Vec3 xc = pose.apply(x_world);
  if (!(xc.z() > 0.0)) return std::nullopt;
  PixelProjection p;
  p.u = K.fx * xc.x() / xc.z() + K.cx;
  p.v = K.fy * xc.y() / xc.z() + K.cy;
  p.depth = xc.z();
  return p;
}

PixelProjection project(const Vec3& x_world, const PoseSE3& pose, const CameraIntrinsics& K) {
  auto p = try_project(x_world, pose, K);
  if (!p) throw BehindCameraError("project: point behind camera");
  return *p;
}

PoseSE3 relative_pose(const PoseSE3& target, const PoseSE3& source) {
  PoseSE3 rel;
  rel.rotation = source.rotation * target.rotation.transpose();
  rel.translation = source.translation - rel.rotation * target.translation;
  return rel;
}

PoseSE3 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.cross(Vec3(1, 0, 0));
  x.normalize();
  const Vec3 y = z.cross(x);  // points down in the image
  PoseSE3 pose;
  pose.rotation.row(0) = x.transpose();
  pose.rotation.row(1) = y.transpose();
  pose.rotation.row(2) = z.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Mat3 rotation_exp(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    // second-order expansion keeps exp/log round trips tight near zero
    const Mat3 w = skew(omega);
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Vec3 rotation_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

double geodesic_angle_deg(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / M_PI;
}

Mat3 euler_deg_to_rotation(double yaw, double pitch, double roll) {
  const double d2r = M_PI / 180.0;
  return (Eigen::AngleAxisd(yaw * d2r, Vec3::UnitY()) *
          Eigen::AngleAxisd(pitch * d2r, Vec3::UnitX()) *
          Eigen::AngleAxisd(roll * d2r, Vec3::UnitZ()))
      .toRotationMatrix();
}

void rotation_to_euler_deg(const Mat3& r, double& yaw, double& pitch, double& roll) {
  // R = Ry(yaw) Rx(pitch) Rz(roll):
  //   R(1,2) = -sin(pitch), R(0,2)/R(2,2) = tan(yaw), R(1,0)/R(1,1) = tan(roll)
  const double r2d = 180.0 / M_PI;
  pitch = std::asin(std::clamp(-r(1, 2), -1.0, 1.0)) * r2d;
  yaw = std::atan2(r(0, 2), r(2, 2)) * r2d;
  roll = std::atan2(r(1, 0), r(1, 1)) * r2d;
}

}  // namespace mvface
