#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvface/geometry.hpp"
#include "mvface/image.hpp"
#include "mvface/rasterizer.hpp"

namespace mvface {

/// Binary mask of target-view pixels whose surface is visible in both the
/// target and one source view. Always a subset of the target render mask.
struct CovisibleMap {
  int width = 0, height = 0;
  std::vector<uint8_t> mask;
  int count = 0;

  bool at(int x, int y) const { return mask[static_cast<size_t>(y) * width + x] != 0; }
};

/// Elementwise AND of two per-vertex visibility masks.
std::vector<uint8_t> covisible_vertices(const std::vector<uint8_t>& vis_target,
                                        const std::vector<uint8_t>& vis_source);

/// Marks triangles adjacent to covisible vertices. The inclusive reading
/// (default) keeps a triangle when at least one vertex is covisible; the
/// exclusive reading requires all three.
std::vector<uint8_t> covisible_triangles(const std::vector<uint8_t>& covis_vertices,
                                         const std::vector<std::array<uint32_t, 3>>& triangles,
                                         bool require_all_vertices = false);

/// Paints covisible triangles through the target fragment buffer.
CovisibleMap covisible_map(const std::vector<uint8_t>& covis_triangles,
                           const FragmentBuffer& target_fragments);

struct WarpResult {
  double u = 0.0, v = 0.0;   // continuous source pixel
  double source_depth = 0.0; // z of the warped point in the source camera
};

/// Back-projects a target pixel at its depth, transports it with the relative
/// pose, and projects into the source view. Empty when the point ends up
/// behind the source camera (such pixels are dropped from losses).
std::optional<WarpResult> warp_pixel(double u, double v, double depth,
                                     const PoseSE3& rel_target_to_source,
                                     const CameraIntrinsics& K_target,
                                     const CameraIntrinsics& K_source);

struct BilinearSample {
  double value[3] = {0, 0, 0};
  bool valid = false;
};

/// Four-neighbor bilinear interpolation; invalid when any neighbor falls
/// outside the image.
BilinearSample bilinear_sample(const ImageRGB& image, double u, double v);

/// Depth variant; additionally invalid when any neighbor is an empty sample.
BilinearSample bilinear_sample(const ImageGray& image, double u, double v);

struct SynthesisOptions {
  /// Reject samples whose source depth disagrees with the warped depth by
  /// more than this (absolute, model units); set <= 0 to disable. Catches
  /// source-view occlusions the covisible map missed.
  double occlusion_depth_tol = 0.0;
};

/// Target image/depth synthesized from one source view.
struct SynthesizedView {
  ImageRGB image;               // sampled source colors at warped coordinates
  ImageGray depth;              // sampled source depth transported into the target frame
  ImageGray sampled_source_depth;  // raw bilinear source depth (source frame)
  std::vector<uint8_t> valid;   // pixels that survived warping and sampling
  int valid_count = 0;
};

/// For every masked pixel with target depth, warps into the source view and
/// bilinearly samples the source image and depth. The synthesized depth is
/// expressed in the target camera frame so it is directly comparable to the
/// target depth map. Pixels with out-of-range sampling, empty depth
/// neighbors, behind-camera warps or failed depth agreement are removed from
/// the valid mask; the loss denominators use the surviving pixels.
SynthesizedView synthesize_target(const ImageRGB& source_image, const ImageGray& source_depth,
                                  const ImageGray& target_depth,
                                  const std::vector<uint8_t>& mask,
                                  const PoseSE3& rel_target_to_source,
                                  const CameraIntrinsics& K_target,
                                  const CameraIntrinsics& K_source,
                                  const SynthesisOptions& options = {});

}  // namespace mvface
