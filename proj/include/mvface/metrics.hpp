#pragma once

#include "mvface/losses.hpp"
#include "mvface/scene.hpp"

namespace mvface {

/// Fit-quality metrics against the ground truth of a generated scene.
struct EvalMetrics {
  double rotation_error_deg = 0.0;    // mean over views, geodesic
  double translation_error_frac = 0.0;  // mean over views, relative to face depth
  double landmark_nme = 0.0;          // mean landmark error / bbox size
  double vertex_rmse = 0.0;           // model units, exact correspondence
  std::vector<double> per_view_rotation_deg;
  std::vector<double> per_view_translation_frac;
  LossReport residuals;
};

/// Rotation error is the geodesic angle per view; translation error is
/// normalized by the mean ground-truth face depth; the landmark error is
/// normalized by sqrt(w*h) of the ground-truth landmark bounding box
/// (reference landmarks are the noise-free ground-truth projections);
/// vertex RMSE compares synthesized shapes vertex by vertex.
EvalMetrics evaluate_fit(const Scene& scene, const ParameterVector& fitted,
                         const LossWeights& weights = {}, const LossOptions& options = {});

std::string metrics_to_json(const EvalMetrics& metrics, const LossWeights& weights);

}  // namespace mvface
