#include "mvface/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvface {

namespace {

struct ProjectedVertex {
  double u, v, z;
  bool valid;
};

inline double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Tie-break for pixels exactly on an edge, with edges normalized so the
// interior is on the positive side (y grows downward): a top edge is
// horizontal with dx > 0, a left edge has dy < 0.
inline bool top_left(double dx, double dy) { return dy == 0.0 ? dx > 0.0 : dy < 0.0; }

}  // namespace

FragmentBuffer rasterize(const Eigen::VectorXd& vertices,
                         const std::vector<std::array<uint32_t, 3>>& triangles,
                         const PoseSE3& pose, const CameraIntrinsics& K) {
  const int w = K.width, h = K.height;
  const int nv = static_cast<int>(vertices.size() / 3);

  FragmentBuffer fb;
  fb.width = w;
  fb.height = h;
  const size_t npx = static_cast<size_t>(w) * h;
  fb.triangle_id.assign(npx, kEmptyFragment);
  fb.w0.assign(npx, 0.0);
  fb.w1.assign(npx, 0.0);
  fb.w2.assign(npx, 0.0);
  fb.depth.assign(npx, std::numeric_limits<double>::infinity());

  std::vector<ProjectedVertex> proj(nv);
  std::vector<Vec3> cam(nv);
  for (int i = 0; i < nv; ++i) {
    const Vec3 x(vertices[3 * i], vertices[3 * i + 1], vertices[3 * i + 2]);
    const Vec3 xc = pose.apply(x);
    cam[i] = xc;
    if (xc.z() > 0.0) {
      proj[i] = {K.fx * xc.x() / xc.z() + K.cx, K.fy * xc.y() / xc.z() + K.cy, xc.z(), true};
    } else {
      proj[i] = {0, 0, 0, false};
    }
  }

  for (size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    const ProjectedVertex &p0 = proj[tri[0]], &p1 = proj[tri[1]], &p2 = proj[tri[2]];
    if (!p0.valid || !p1.valid || !p2.valid) continue;

    // back-face cull in camera space: front when the face normal points
    // toward the camera
    const Vec3 &c0 = cam[tri[0]], &c1 = cam[tri[1]], &c2 = cam[tri[2]];
    if ((c1 - c0).cross(c2 - c0).dot(c0) >= 0.0) continue;

    double area = edge_fn(p0.u, p0.v, p1.u, p1.v, p2.u, p2.v);
    if (std::abs(area) < 1e-14) continue;
    const double sign = area > 0.0 ? 1.0 : -1.0;
    area *= sign;

    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.u, p1.u, p2.u}))));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max({p0.u, p1.u, p2.u}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.v, p1.v, p2.v}))));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max({p0.v, p1.v, p2.v}))));
    if (x0 > x1 || y0 > y1) continue;

    // edge i is opposite vertex i, normalized interior-positive
    const double e0dx = sign * (p2.u - p1.u), e0dy = sign * (p2.v - p1.v);
    const double e1dx = sign * (p0.u - p2.u), e1dy = sign * (p0.v - p2.v);
    const double e2dx = sign * (p1.u - p0.u), e2dy = sign * (p1.v - p0.v);
    const bool tl0 = top_left(e0dx, e0dy), tl1 = top_left(e1dx, e1dy), tl2 = top_left(e2dx, e2dy);

    const double iz0 = 1.0 / p0.z, iz1 = 1.0 / p1.z, iz2 = 1.0 / p2.z;

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x, py = y;
        const double e0 = sign * edge_fn(p1.u, p1.v, p2.u, p2.v, px, py);
        const double e1 = sign * edge_fn(p2.u, p2.v, p0.u, p0.v, px, py);
        const double e2 = sign * edge_fn(p0.u, p0.v, p1.u, p1.v, px, py);
        const bool in0 = e0 > 0.0 || (e0 == 0.0 && tl0);
        const bool in1 = e1 > 0.0 || (e1 == 0.0 && tl1);
        const bool in2 = e2 > 0.0 || (e2 == 0.0 && tl2);
        if (!in0 || !in1 || !in2) continue;

        const double l0 = e0 / area, l1 = e1 / area, l2 = e2 / area;
        const double inv_z = l0 * iz0 + l1 * iz1 + l2 * iz2;
        const double z = 1.0 / inv_z;
        const size_t idx = fb.index(x, y);
        if (z < fb.depth[idx]) {
          fb.depth[idx] = z;
          fb.triangle_id[idx] = static_cast<int32_t>(t);
          fb.w0[idx] = l0 * iz0 * z;
          fb.w1[idx] = l1 * iz1 * z;
          fb.w2[idx] = l2 * iz2 * z;
        }
      }
    }
  }

  for (size_t i = 0; i < npx; ++i)
    if (fb.triangle_id[i] == kEmptyFragment) fb.depth[i] = kEmptyDepth;
  return fb;
}

ImageRGB shade_fragments(const FragmentBuffer& fragments,
                         const std::vector<std::array<uint32_t, 3>>& triangles,
                         const Eigen::VectorXd& normals, const Eigen::VectorXd& albedo,
                         const Eigen::Matrix<double, 27, 1>& sh) {
  ImageRGB im = ImageRGB::zeros(fragments.width, fragments.height);
  for (int y = 0; y < fragments.height; ++y) {
    for (int x = 0; x < fragments.width; ++x) {
      const size_t idx = fragments.index(x, y);
      const int32_t t = fragments.triangle_id[idx];
      if (t == kEmptyFragment) continue;
      const auto& tri = triangles[t];
      const double w0 = fragments.w0[idx], w1 = fragments.w1[idx], w2 = fragments.w2[idx];
      Vec3 n = w0 * normals.segment<3>(3 * tri[0]) + w1 * normals.segment<3>(3 * tri[1]) +
               w2 * normals.segment<3>(3 * tri[2]);
      const double nn = n.norm();
      if (nn < 1e-12) continue;
      n /= nn;
      Vec3 a = w0 * albedo.segment<3>(3 * tri[0]) + w1 * albedo.segment<3>(3 * tri[1]) +
               w2 * albedo.segment<3>(3 * tri[2]);
      a = a.cwiseMax(0.0).cwiseMin(1.0);
      const Vec3 rgb = sh_shade(n, a, sh);
      for (int c = 0; c < 3; ++c) im.at(x, y, c) = std::clamp(rgb[c], 0.0, 1.0);
    }
  }
  return im;
}

ImageGray depth_map(const FragmentBuffer& fragments) {
  ImageGray d = ImageGray::constant(fragments.width, fragments.height, kEmptyDepth);
  for (size_t i = 0; i < fragments.depth.size(); ++i)
    if (fragments.triangle_id[i] != kEmptyFragment) d.data[i] = fragments.depth[i];
  return d;
}

std::vector<uint8_t> visible_vertex_mask(const FragmentBuffer& fragments,
                                         const Eigen::VectorXd& vertices,
                                         const std::vector<std::array<uint32_t, 3>>& triangles,
                                         const PoseSE3& pose, const CameraIntrinsics& K) {
  const int nv = static_cast<int>(vertices.size() / 3);
  std::vector<uint8_t> tri_owns(triangles.size(), 0);
  for (size_t i = 0; i < fragments.triangle_id.size(); ++i)
    if (fragments.triangle_id[i] != kEmptyFragment) tri_owns[fragments.triangle_id[i]] = 1;

  std::vector<uint8_t> visible(nv, 0);
  for (size_t t = 0; t < triangles.size(); ++t)
    if (tri_owns[t])
      for (uint32_t idx : triangles[t]) visible[idx] = 1;

  // Depth check at the nearest covered pixel. Drops vertices whose projection
  // lands outside the image or in front of a much deeper surface (silhouette
  // vertices that lost their pixel), and vertices hidden behind a nearer one.
  for (int i = 0; i < nv; ++i) {
    if (!visible[i]) continue;
    const Vec3 x(vertices[3 * i], vertices[3 * i + 1], vertices[3 * i + 2]);
    const auto p = try_project(x, pose, K);
    if (!p || p->u < 0 || p->u > K.width - 1 || p->v < 0 || p->v > K.height - 1) {
      visible[i] = 0;
      continue;
    }
    const int px = std::clamp(static_cast<int>(std::lround(p->u)), 0, K.width - 1);
    const int py = std::clamp(static_cast<int>(std::lround(p->v)), 0, K.height - 1);
    double frag_depth = -1.0;
    for (int r = 0; r <= 8 && frag_depth < 0; ++r) {
      for (int dy = -r; dy <= r && frag_depth < 0; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
          const int qx = px + dx, qy = py + dy;
          if (qx < 0 || qx >= K.width || qy < 0 || qy >= K.height) continue;
          if (fragments.occupied(qx, qy)) {
            frag_depth = fragments.depth[fragments.index(qx, qy)];
            break;
          }
        }
      }
    }
    if (frag_depth >= 0 && std::abs(frag_depth - p->depth) > kVisibleDepthSlack) visible[i] = 0;
  }
  return visible;
}

RenderOutputs render_view(const Eigen::VectorXd& vertices,
                          const std::vector<std::array<uint32_t, 3>>& triangles,
                          const Eigen::VectorXd& normals, const Eigen::VectorXd& albedo,
                          const Eigen::Matrix<double, 27, 1>& sh, const PoseSE3& pose,
                          const CameraIntrinsics& K) {
  RenderOutputs out;
  out.fragments = rasterize(vertices, triangles, pose, K);
  out.depth = depth_map(out.fragments);
  out.image = shade_fragments(out.fragments, triangles, normals, albedo, sh);
  out.visible_vertices = visible_vertex_mask(out.fragments, vertices, triangles, pose, K);
  return out;
}

}  // namespace mvface
