#pragma once

#include <cstdint>
#include <vector>

#include "mvface/geometry.hpp"
#include "mvface/image.hpp"
#include "mvface/morphable_model.hpp"

namespace mvface {

constexpr int32_t kEmptyFragment = -1;

/// Slack for the visible-vertex depth check, in model units. Generated models
/// are sized so that per-pixel depth variation across a triangle stays below
/// this value.
constexpr double kVisibleDepthSlack = 1e-3;

/// Per-pixel rasterization result: owning triangle, perspective-correct
/// barycentric weights and interpolated depth.
struct FragmentBuffer {
  int width = 0, height = 0;
  std::vector<int32_t> triangle_id;  // kEmptyFragment where uncovered
  std::vector<double> w0, w1, w2;
  std::vector<double> depth;

  size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  bool occupied(int x, int y) const { return triangle_id[index(x, y)] != kEmptyFragment; }
};

struct RenderOutputs {
  ImageRGB image;
  ImageGray depth;  // kEmptyDepth where uncovered
  FragmentBuffer fragments;
  std::vector<uint8_t> visible_vertices;
};

/// Z-buffer rasterization. Coverage: pixel center strictly inside the
/// projected triangle, top-left tie-break on edges. Triangles with any vertex
/// behind the camera and back-facing triangles (counter-clockwise winding
/// seen from outside is front) are skipped. Depth and weights are
/// perspective-correct.
FragmentBuffer rasterize(const Eigen::VectorXd& vertices,
                         const std::vector<std::array<uint32_t, 3>>& triangles,
                         const PoseSE3& pose, const CameraIntrinsics& K);

/// Interpolates normals and albedo over occupied pixels, renormalizes the
/// normal, applies spherical-harmonics shading and clamps to [0, 1].
/// Normals are taken in the frame they are given in (world frame for scene
/// rendering, so lighting is shared across views).
ImageRGB shade_fragments(const FragmentBuffer& fragments,
                         const std::vector<std::array<uint32_t, 3>>& triangles,
                         const Eigen::VectorXd& normals, const Eigen::VectorXd& albedo,
                         const Eigen::Matrix<double, 27, 1>& sh);

/// Interpolated depth where occupied, kEmptyDepth elsewhere.
ImageGray depth_map(const FragmentBuffer& fragments);

/// A vertex is visible when one of its triangles owns at least one pixel, it
/// projects inside the image, and the fragment depth at the nearest covered
/// pixel stays within kVisibleDepthSlack of the vertex depth.
std::vector<uint8_t> visible_vertex_mask(const FragmentBuffer& fragments,
                                         const Eigen::VectorXd& vertices,
                                         const std::vector<std::array<uint32_t, 3>>& triangles,
                                         const PoseSE3& pose, const CameraIntrinsics& K);

/// Full render of one view.
RenderOutputs render_view(const Eigen::VectorXd& vertices,
                          const std::vector<std::array<uint32_t, 3>>& triangles,
                          const Eigen::VectorXd& normals, const Eigen::VectorXd& albedo,
                          const Eigen::Matrix<double, 27, 1>& sh, const PoseSE3& pose,
                          const CameraIntrinsics& K);

}  // namespace mvface
