#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "mvface/geometry.hpp"

namespace mvface {

/// Linear face model: a shape or albedo instance is the mean plus a
/// coefficient-weighted sum of basis columns. Vertex arrays are flat,
/// interleaved xyz (or rgb), length 3V.
struct MorphableModel {
  Eigen::VectorXd mean_shape;    // 3V, model units
  Eigen::VectorXd mean_albedo;   // 3V, rgb in [0,1]
  Eigen::MatrixXd basis_id;      // 3V x n_id
  Eigen::MatrixXd basis_exp;     // 3V x n_exp
  Eigen::MatrixXd basis_albedo;  // 3V x n_alb
  std::vector<std::array<uint32_t, 3>> triangles;
  std::vector<uint32_t> landmark_indices;
  Eigen::VectorXd landmark_confidence;

  int vertex_count() const { return static_cast<int>(mean_shape.size() / 3); }
  int n_id() const { return static_cast<int>(basis_id.cols()); }
  int n_exp() const { return static_cast<int>(basis_exp.cols()); }
  int n_alb() const { return static_cast<int>(basis_albedo.cols()); }
  int landmark_count() const { return static_cast<int>(landmark_indices.size()); }

  Vec3 vertex(const Eigen::VectorXd& flat, uint32_t i) const {
    return Vec3(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
  }

  /// Checks triangle/landmark indices, finiteness of bases, uniqueness of
  /// landmarks and positivity of confidences.
  void validate() const;
};

/// S = mean_shape + basis_id * alpha + basis_exp * beta.
Eigen::VectorXd synthesize_shape(const MorphableModel& m, const Eigen::VectorXd& alpha,
                                 const Eigen::VectorXd& beta);

/// T = mean_albedo + basis_albedo * gamma. Values are returned unclamped;
/// clamping to [0,1] happens at shading time.
Eigen::VectorXd synthesize_albedo(const MorphableModel& m, const Eigen::VectorXd& gamma);

struct VertexNormals {
  Eigen::VectorXd normals;         // 3V, unit length
  std::vector<uint32_t> isolated;  // vertices with no adjacent triangle, set to (0,0,1)
};

/// Area-weighted average of adjacent face normals, normalized per vertex.
/// Face normals follow the winding: counter-clockwise seen from outside
/// points outward.
VertexNormals vertex_normals(const Eigen::VectorXd& vertices,
                             const std::vector<std::array<uint32_t, 3>>& triangles);

/// Real spherical harmonics basis, bands 0-2, evaluated at a unit direction
/// n = (x, y, z). Ordering and constants:
///   H[0] = 0.28209479177387814                    (1 / (2 sqrt(pi)))
///   H[1] = 0.4886025119029199 * y
///   H[2] = 0.4886025119029199 * z
///   H[3] = 0.4886025119029199 * x
///   H[4] = 1.0925484305920792 * x * y
///   H[5] = 1.0925484305920792 * y * z
///   H[6] = 0.31539156525252005 * (3 z^2 - 1)
///   H[7] = 1.0925484305920792 * x * z
///   H[8] = 0.5462742152960396 * (x^2 - y^2)
Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& n);

/// Shades one surface sample: out_c = albedo_c * sum_b theta[c*9+b] * H_b(n).
/// `theta` holds 9 coefficients per color channel, channel-major (27 total).
Vec3 sh_shade(const Vec3& normal, const Vec3& albedo, const Eigen::Matrix<double, 27, 1>& theta);

}  // namespace mvface
