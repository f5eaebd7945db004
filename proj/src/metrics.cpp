#include "mvface/metrics.hpp"

#include <cmath>
#include <json.hpp>

#include "mvface/io.hpp"
#include "mvface/synth_data.hpp"

namespace mvface {

EvalMetrics evaluate_fit(const Scene& scene, const ParameterVector& fitted,
                         const LossWeights& weights, const LossOptions& options) {
  const MorphableModel& model = scene.model;
  if (fitted.alpha.size() != model.n_id() || fitted.beta.size() != model.n_exp() ||
      fitted.gamma.size() != model.n_alb() || fitted.view_count() != scene.rig.view_count())
    throw std::invalid_argument("evaluate_fit: parameter dimensions do not match the scene model");

  EvalMetrics m;
  const ParameterVector& gt = scene.gt_params;
  const double face_depth = mean_face_depth(model, gt);

  const Eigen::VectorXd gt_verts = synthesize_shape(model, gt.alpha, gt.beta);
  const Eigen::VectorXd fit_verts = synthesize_shape(model, fitted.alpha, fitted.beta);
  m.vertex_rmse = std::sqrt((gt_verts - fit_verts).squaredNorm() / model.vertex_count());

  double nme_sum = 0.0;
  for (int v = 0; v < scene.rig.view_count(); ++v) {
    const double rot =
        geodesic_angle_deg(gt.views[v].rotation.toRotationMatrix(),
                           fitted.views[v].rotation.toRotationMatrix());
    const double trans = (gt.views[v].translation - fitted.views[v].translation).norm() / face_depth;
    m.per_view_rotation_deg.push_back(rot);
    m.per_view_translation_frac.push_back(trans);
    m.rotation_error_deg += rot / scene.rig.view_count();
    m.translation_error_frac += trans / scene.rig.view_count();

    // clean reference landmarks: ground-truth projections, not the (possibly
    // noisy) observed ones
    const CameraIntrinsics& intr = scene.rig.views[v].intrinsics;
    const PoseSE3 gt_pose = gt.views[v].pose();
    const PoseSE3 fit_pose = fitted.views[v].pose();
    double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300, err = 0.0;
    for (int i = 0; i < model.landmark_count(); ++i) {
      const auto pg = project(model.vertex(gt_verts, model.landmark_indices[i]), gt_pose, intr);
      const auto pf = project(model.vertex(fit_verts, model.landmark_indices[i]), fit_pose, intr);
      umin = std::min(umin, pg.u);
      umax = std::max(umax, pg.u);
      vmin = std::min(vmin, pg.v);
      vmax = std::max(vmax, pg.v);
      err += std::hypot(pg.u - pf.u, pg.v - pf.v);
    }
    err /= model.landmark_count();
    const double bbox = std::sqrt((umax - umin) * (vmax - vmin));
    nme_sum += err / bbox;
  }
  m.landmark_nme = nme_sum / scene.rig.view_count();
  m.residuals = total_loss(model, scene.rig, fitted, weights, options);
  return m;
}

std::string metrics_to_json(const EvalMetrics& m, const LossWeights& weights) {
  nlohmann::json j;
  j["rotation_error_deg"] = m.rotation_error_deg;
  j["translation_error_frac"] = m.translation_error_frac;
  j["landmark_nme"] = m.landmark_nme;
  j["vertex_rmse"] = m.vertex_rmse;
  j["per_view_rotation_deg"] = m.per_view_rotation_deg;
  j["per_view_translation_frac"] = m.per_view_translation_frac;
  j["residuals"] = nlohmann::json::parse(report_to_json(m.residuals, weights));
  return j.dump(2);
}

}  // namespace mvface
