#include "mvface/morphable_model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace mvface {

void MorphableModel::validate() const {
  const int v = vertex_count();
  if (mean_shape.size() % 3 != 0 || mean_albedo.size() != mean_shape.size())
    throw std::invalid_argument("model: mean arrays must be flat 3V");
  if (basis_id.rows() != 3 * v || basis_exp.rows() != 3 * v || basis_albedo.rows() != 3 * v)
    throw std::invalid_argument("model: basis row count must be 3V");
  if (!basis_id.allFinite() || !basis_exp.allFinite() || !basis_albedo.allFinite())
    throw std::invalid_argument("model: basis contains non-finite values");
  for (const auto& t : triangles)
    for (uint32_t idx : t)
      if (idx >= static_cast<uint32_t>(v)) throw std::invalid_argument("model: triangle index out of range");
  std::set<uint32_t> seen;
  for (uint32_t idx : landmark_indices) {
    if (idx >= static_cast<uint32_t>(v)) throw std::invalid_argument("model: landmark index out of range");
    if (!seen.insert(idx).second) throw std::invalid_argument("model: duplicate landmark index");
  }
  if (landmark_confidence.size() != static_cast<Eigen::Index>(landmark_indices.size()))
    throw std::invalid_argument("model: landmark confidence size mismatch");
  for (Eigen::Index i = 0; i < landmark_confidence.size(); ++i)
    if (!(landmark_confidence[i] > 0)) throw std::invalid_argument("model: landmark confidence must be positive");
}

Eigen::VectorXd synthesize_shape(const MorphableModel& m, const Eigen::VectorXd& alpha,
                                 const Eigen::VectorXd& beta) {
  if (alpha.size() != m.basis_id.cols() || beta.size() != m.basis_exp.cols())
    throw std::invalid_argument("synthesize_shape: coefficient dimension mismatch");
  return m.mean_shape + m.basis_id * alpha + m.basis_exp * beta;
}

Eigen::VectorXd synthesize_albedo(const MorphableModel& m, const Eigen::VectorXd& gamma) {
  if (gamma.size() != m.basis_albedo.cols())
    throw std::invalid_argument("synthesize_albedo: coefficient dimension mismatch");
  return m.mean_albedo + m.basis_albedo * gamma;
}

VertexNormals vertex_normals(const Eigen::VectorXd& vertices,
                             const std::vector<std::array<uint32_t, 3>>& triangles) {
  if (triangles.empty()) throw std::invalid_argument("vertex_normals: mesh has no triangles");
  const int v = static_cast<int>(vertices.size() / 3);
  VertexNormals out;
  out.normals = Eigen::VectorXd::Zero(3 * v);
  auto vert = [&](uint32_t i) { return Vec3(vertices[3 * i], vertices[3 * i + 1], vertices[3 * i + 2]); };
  for (const auto& t : triangles) {
    const Vec3 a = vert(t[0]), b = vert(t[1]), c = vert(t[2]);
    const Vec3 fn = (b - a).cross(c - a);  // magnitude = 2 * area
    for (uint32_t idx : t) out.normals.segment<3>(3 * idx) += fn;
  }
  for (int i = 0; i < v; ++i) {
    const double norm = out.normals.segment<3>(3 * i).norm();
    if (norm < 1e-30) {
      out.normals.segment<3>(3 * i) = Vec3(0, 0, 1);
      out.isolated.push_back(static_cast<uint32_t>(i));
    } else {
      out.normals.segment<3>(3 * i) /= norm;
    }
  }
  return out;
}

Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& n) {
  const double x = n.x(), y = n.y(), z = n.z();
  Eigen::Matrix<double, 9, 1> h;
  h[0] = 0.28209479177387814;
  h[1] = 0.4886025119029199 * y;
  h[2] = 0.4886025119029199 * z;
  h[3] = 0.4886025119029199 * x;
  h[4] = 1.0925484305920792 * x * y;
  h[5] = 1.0925484305920792 * y * z;
  h[6] = 0.31539156525252005 * (3.0 * z * z - 1.0);
  h[7] = 1.0925484305920792 * x * z;
  h[8] = 0.5462742152960396 * (x * x - y * y);
  return h;
}

Vec3 sh_shade(const Vec3& normal, const Vec3& albedo, const Eigen::Matrix<double, 27, 1>& theta) {
  const Eigen::Matrix<double, 9, 1> h = sh_basis(normal);
  Vec3 out;
  for (int c = 0; c < 3; ++c) out[c] = albedo[c] * theta.segment<9>(9 * c).dot(h);
  return out;
}

}  // namespace mvface
