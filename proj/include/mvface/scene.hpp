#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mvface/geometry.hpp"
#include "mvface/image.hpp"
#include "mvface/morphable_model.hpp"
#include "mvface/parameters.hpp"

namespace mvface {

/// One calibrated view: intrinsics, observed image and observed 2D landmarks.
struct ViewObservation {
  CameraIntrinsics intrinsics;
  ImageRGB image;
  Eigen::MatrixX2d landmarks;  // L x 2, pixels
};

struct ViewRig {
  std::vector<ViewObservation> views;
  int view_count() const { return static_cast<int>(views.size()); }
};

/// Multi-view rig layout: cameras on a yaw arc at a fixed distance, all
/// looking at the origin.
struct RigSpec {
  int n_views = 3;
  double yaw_spacing_deg = 20.0;  // angle between adjacent cameras
  int image_size = 128;
  double focal_px = 375.0;
  double distance = 0.085;  // orbit radius, model units
  uint64_t seed = 1;
  double landmark_noise_px = 0.0;

  std::vector<double> yaw_offsets_deg() const {
    std::vector<double> out(n_views);
    for (int i = 0; i < n_views; ++i) out[i] = (i - 0.5 * (n_views - 1)) * yaw_spacing_deg;
    return out;
  }
  CameraIntrinsics intrinsics() const {
    CameraIntrinsics k;
    k.fx = k.fy = focal_px;
    k.width = k.height = image_size;
    k.cx = 0.5 * (image_size - 1);
    k.cy = 0.5 * (image_size - 1);
    return k;
  }
};

/// A generated ground-truth scene: model, true parameters and the rig of
/// observations rendered from them.
struct Scene {
  MorphableModel model;
  ParameterVector gt_params;
  ViewRig rig;
  std::vector<ImageGray> gt_depths;  // per view, for evaluation only
  RigSpec spec;
};

}  // namespace mvface
