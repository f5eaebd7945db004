#pragma once

#include <cstddef>
#include <vector>

namespace mvface {

/// Sentinel for undefined depth samples (also the value written to depth PFMs).
constexpr double kEmptyDepth = -1.0;

/// Row-major RGB image, values nominally in [0, 1].
struct ImageRGB {
  int width = 0, height = 0;
  std::vector<double> data;  // 3 * width * height

  static ImageRGB zeros(int w, int h) {
    ImageRGB im;
    im.width = w;
    im.height = h;
    im.data.assign(static_cast<size_t>(3) * w * h, 0.0);
    return im;
  }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

/// Row-major single-channel image (depth maps, masks, weights).
struct ImageGray {
  int width = 0, height = 0;
  std::vector<double> data;

  static ImageGray constant(int w, int h, double value) {
    ImageGray im;
    im.width = w;
    im.height = h;
    im.data.assign(static_cast<size_t>(w) * h, value);
    return im;
  }
  static ImageGray zeros(int w, int h) { return constant(w, h, 0.0); }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

}  // namespace mvface
