#include "mvface/view_synthesis.hpp"

#include <cmath>
#include <stdexcept>

namespace mvface {

std::vector<uint8_t> covisible_vertices(const std::vector<uint8_t>& vis_target,
                                        const std::vector<uint8_t>& vis_source) {
  if (vis_target.size() != vis_source.size())
    throw std::invalid_argument("covisible_vertices: visibility length mismatch");
  std::vector<uint8_t> out(vis_target.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = vis_target[i] && vis_source[i];
  return out;
}

std::vector<uint8_t> covisible_triangles(const std::vector<uint8_t>& covis_vertices,
                                         const std::vector<std::array<uint32_t, 3>>& triangles,
                                         bool require_all_vertices) {
  std::vector<uint8_t> out(triangles.size(), 0);
  for (size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    const bool a = covis_vertices[tri[0]], b = covis_vertices[tri[1]], c = covis_vertices[tri[2]];
    out[t] = require_all_vertices ? (a && b && c) : (a || b || c);
  }
  return out;
}

CovisibleMap covisible_map(const std::vector<uint8_t>& covis_triangles,
                           const FragmentBuffer& target_fragments) {
  CovisibleMap m;
  m.width = target_fragments.width;
  m.height = target_fragments.height;
  m.mask.assign(target_fragments.triangle_id.size(), 0);
  for (size_t i = 0; i < m.mask.size(); ++i) {
    const int32_t t = target_fragments.triangle_id[i];
    if (t != kEmptyFragment && covis_triangles[t]) {
      m.mask[i] = 1;
      ++m.count;
    }
  }
  return m;
}

std::optional<WarpResult> warp_pixel(double u, double v, double depth,
                                     const PoseSE3& rel_target_to_source,
                                     const CameraIntrinsics& K_target,
                                     const CameraIntrinsics& K_source) {
  const Vec3 x_t((u - K_target.cx) / K_target.fx * depth, (v - K_target.cy) / K_target.fy * depth,
                 depth);
  const Vec3 x_s = rel_target_to_source.apply(x_t);
  if (!(x_s.z() > 0.0)) return std::nullopt;
  WarpResult w;
  w.u = K_source.fx * x_s.x() / x_s.z() + K_source.cx;
  w.v = K_source.fy * x_s.y() / x_s.z() + K_source.cy;
  w.source_depth = x_s.z();
  return w;
}

namespace {

struct Corners {
  int x0, y0, x1, y1;
  double fx, fy;
  bool inside;
};

inline Corners corners(int width, int height, double u, double v) {
  Corners c;
  c.x0 = static_cast<int>(std::floor(u));
  c.y0 = static_cast<int>(std::floor(v));
  c.x1 = c.x0 + 1;
  c.y1 = c.y0 + 1;
  c.fx = u - c.x0;
  c.fy = v - c.y0;
  c.inside = c.x0 >= 0 && c.y0 >= 0 && c.x1 < width && c.y1 < height;
  // points exactly on the last row/column still have all neighbors defined
  if (!c.inside && c.x0 >= 0 && c.y0 >= 0 && c.x0 < width && c.y0 < height && c.fx == 0.0 &&
      c.fy == 0.0) {
    c.x1 = c.x0;
    c.y1 = c.y0;
    c.inside = true;
  } else if (!c.inside) {
    if (c.fx == 0.0 && c.x0 >= 0 && c.x0 < width) c.x1 = c.x0;
    if (c.fy == 0.0 && c.y0 >= 0 && c.y0 < height) c.y1 = c.y0;
    c.inside = c.x0 >= 0 && c.y0 >= 0 && c.x1 < width && c.y1 < height;
  }
  return c;
}

}  // namespace

BilinearSample bilinear_sample(const ImageRGB& image, double u, double v) {
  BilinearSample s;
  const Corners c = corners(image.width, image.height, u, v);
  if (!c.inside) return s;
  for (int ch = 0; ch < 3; ++ch) {
    const double top = (1 - c.fx) * image.at(c.x0, c.y0, ch) + c.fx * image.at(c.x1, c.y0, ch);
    const double bot = (1 - c.fx) * image.at(c.x0, c.y1, ch) + c.fx * image.at(c.x1, c.y1, ch);
    s.value[ch] = (1 - c.fy) * top + c.fy * bot;
  }
  s.valid = true;
  return s;
}

BilinearSample bilinear_sample(const ImageGray& image, double u, double v) {
  BilinearSample s;
  const Corners c = corners(image.width, image.height, u, v);
  if (!c.inside) return s;
  const double d00 = image.at(c.x0, c.y0), d10 = image.at(c.x1, c.y0);
  const double d01 = image.at(c.x0, c.y1), d11 = image.at(c.x1, c.y1);
  if (d00 == kEmptyDepth || d10 == kEmptyDepth || d01 == kEmptyDepth || d11 == kEmptyDepth)
    return s;
  const double top = (1 - c.fx) * d00 + c.fx * d10;
  const double bot = (1 - c.fx) * d01 + c.fx * d11;
  s.value[0] = (1 - c.fy) * top + c.fy * bot;
  s.valid = true;
  return s;
}

SynthesizedView synthesize_target(const ImageRGB& source_image, const ImageGray& source_depth,
                                  const ImageGray& target_depth,
                                  const std::vector<uint8_t>& mask,
                                  const PoseSE3& rel_target_to_source,
                                  const CameraIntrinsics& K_target,
                                  const CameraIntrinsics& K_source,
                                  const SynthesisOptions& options) {
  const int w = target_depth.width, h = target_depth.height;
  SynthesizedView out;
  out.image = ImageRGB::zeros(w, h);
  out.depth = ImageGray::constant(w, h, kEmptyDepth);
  out.sampled_source_depth = ImageGray::constant(w, h, kEmptyDepth);
  out.valid.assign(static_cast<size_t>(w) * h, 0);

  const PoseSE3 rel_source_to_target = rel_target_to_source.inverse();

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      if (!mask[idx]) continue;
      const double dt = target_depth.at(x, y);
      if (dt == kEmptyDepth) continue;
      const auto warp = warp_pixel(x, y, dt, rel_target_to_source, K_target, K_source);
      if (!warp) continue;
      const BilinearSample rgb = bilinear_sample(source_image, warp->u, warp->v);
      const BilinearSample ds = bilinear_sample(source_depth, warp->u, warp->v);
      if (!rgb.valid || !ds.valid) continue;
      if (options.occlusion_depth_tol > 0 &&
          std::abs(ds.value[0] - warp->source_depth) > options.occlusion_depth_tol)
        continue;
      // transport the sampled source depth back into the target frame
      const Vec3 x_s((warp->u - K_source.cx) / K_source.fx * ds.value[0],
                     (warp->v - K_source.cy) / K_source.fy * ds.value[0], ds.value[0]);
      const Vec3 x_t = rel_source_to_target.apply(x_s);
      if (!(x_t.z() > 0.0)) continue;
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = rgb.value[c];
      out.depth.at(x, y) = x_t.z();
      out.sampled_source_depth.at(x, y) = ds.value[0];
      out.valid[idx] = 1;
      ++out.valid_count;
    }
  }
  return out;
}

}  // namespace mvface
