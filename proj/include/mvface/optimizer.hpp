#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mvface/losses.hpp"
#include "mvface/parameters.hpp"
#include "mvface/rasterizer.hpp"
#include "mvface/scene.hpp"

namespace mvface {

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Solver configuration. Finite-difference steps are per parameter group;
/// the translation step is a fraction of the face depth at initialization.
struct FitConfig {
  int max_iters = 40;
  double lambda0 = 1e-3;
  double lambda_up = 10.0;    // multiplicative, on rejected steps
  double lambda_down = 3.0;   // divisor, on accepted steps
  double lambda_max = 1e10;
  double h_rotation = 1e-3;        // radians, tangent space
  double h_translation_frac = 1e-3;  // of face depth
  double h_coefficient = 1e-3;
  double h_sh = 1e-2;
  double tol_rel_decrease = 1e-6;  // two consecutive accepted steps below -> stop
  double tol_step = 1e-9;
  bool fit_pose = true;
  bool fit_coefficients = true;
  bool fit_sh = true;
  int threads = 0;  // 0 = MVFACE_THREADS (default 1)
  LossOptions loss_options;
};

struct IterationRecord {
  int iteration = 0;
  LossReport report;   // state after this iteration's accepted step
  double lambda = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
  int rejected_proposals = 0;
  uint64_t param_hash = 0;
};

struct FitTrace {
  std::vector<IterationRecord> iterations;  // entry 0 is the initial state
  std::string termination;
};

struct FitResult {
  ParameterVector params;
  FitTrace trace;
};

struct NumericGradient {
  Eigen::VectorXd gradient;
  std::vector<uint8_t> one_sided;  // coordinates that fell back to one-sided differences
};

/// Central finite differences with per-coordinate steps. A non-finite
/// objective value at a probe point flags the coordinate and falls back to a
/// one-sided difference.
NumericGradient numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& objective,
                                 const Eigen::VectorXd& x, const Eigen::VectorXd& h);

struct GradientCheckEntry {
  double d_h = 0.0, d_h2 = 0.0, d_h4 = 0.0;  // central differences at h, h/2, h/4
  double rel_discrepancy = 0.0;
  double richardson_ratio = 0.0;  // ~4 for smooth terms; 0 when below noise
  bool ratio_defined = false;
  bool flagged = false;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> coords;
  bool any_flagged = false;
};

/// Compares central differences at steps h, h/2 and h/4. Coordinates whose
/// h/2 vs h/4 estimates disagree by more than 1e-3 relative are flagged; the
/// step-halving ratio (d_h - d_h2) / (d_h2 - d_h4) is near 4 for smooth
/// objectives.
GradientCheckReport gradient_check(const std::function<double(const Eigen::VectorXd&)>& objective,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& h,
                                   double flag_tol = 1e-3);

/// Damped least-squares fit of the combined objective. Steps are proposed
/// from a finite-difference Jacobian of a squared-residual form of the
/// objective and accepted only when the true combined loss strictly
/// decreases, so the accepted-step loss is monotone by construction.
/// Covisible maps and sampling masks are recomputed on accepted steps and
/// frozen during the finite-difference probes of a step.
FitResult fit(const MorphableModel& model, const ViewRig& rig, const ParameterVector& init,
              const FitConfig& config = {}, const LossWeights& weights = {});

std::string fit_config_to_json(const FitConfig& config);
FitConfig fit_config_from_json(const std::string& text);
std::string trace_to_json(const FitTrace& trace, const LossWeights& weights);
std::string trace_to_csv(const FitTrace& trace);

/// Loss evaluation engine shared by the solver and the gradient checker.
/// Exposes the optimizer's delta parameterization: coefficients and lighting
/// move additively, rotations move on the quaternion tangent (axis-angle,
/// left-applied, renormalized).
class Evaluator {
 public:
  Evaluator(const MorphableModel& model, const ViewRig& rig, const LossWeights& weights,
            const FitConfig& config);

  LossReport full(const ParameterVector& params) const;

  /// Rebuilds base renders, masks and the frozen pixel lists at `params`.
  void set_base(const ParameterVector& params);

  int coord_count() const { return static_cast<int>(coords_.size()); }
  int residual_count() const { return residual_size_; }
  Eigen::VectorXd steps() const;

  ParameterVector apply_delta(const Eigen::VectorXd& delta) const;

  /// Residuals and true loss at `base + delta` under the frozen base masks.
  struct FrozenEval {
    Eigen::VectorXd residuals;
    LossReport report;
  };
  FrozenEval frozen_eval(const Eigen::VectorXd& delta) const;

  /// True single-term value under frozen masks, used for gradient checks.
  /// Term names: render, landmark, regularization, pixel, depth, epipolar.
  double frozen_term(const Eigen::VectorXd& delta, const std::string& term) const;

  const ParameterVector& base_params() const { return base_params_; }
  double face_depth() const { return face_depth_; }

 private:
  struct Coord {
    enum Group { kCoeff, kRotation, kTranslation, kSh } group;
    int view;   // -1 for coefficients
    int index;  // within group
    double step;
  };
  struct PairPixel {
    int x, y;
    double base_rgb[3];
    double base_depth_in_target;
    double base_target_depth;
  };
  struct PairState {
    int target, source;
    std::vector<PairPixel> pixels;
    Eigen::VectorXd base_epi;  // 2L signed distances
    bool pixel_active = false, depth_active = false, epi_active = false;
    double occlusion_tol = 0.0;
  };
  struct ViewState {
    std::vector<int> mask_pixels;
    RenderOutputs render;
  };

  struct CurrentRenders;
  void compute_residual_layout();
  void render_current(const ParameterVector& params, CurrentRenders& cur) const;
  Eigen::VectorXd epipolar_residuals(const PairState& pair, const PoseSE3& rel) const;

  const MorphableModel& model_;
  const ViewRig& rig_;
  LossWeights weights_;
  FitConfig config_;
  int target_view_ = 0;

  ParameterVector base_params_;
  Eigen::VectorXd base_vertices_, base_normals_, base_albedo_;
  std::vector<ViewState> views_;
  std::vector<PairState> pairs_;
  double face_depth_ = 0.0;
  std::vector<Coord> coords_;
  int residual_size_ = 0;
  // block scales
  double reg_scale_id_ = 0, reg_scale_exp_ = 0, reg_scale_alb_ = 0;
  double lm_scale_ = 0, render_scale_ = 0;
  double pixel_scale_ = 0, depth_scale_ = 0, epi_scale_ = 0;
  int pixel_pairs_ = 0, depth_pairs_ = 0, epi_pairs_ = 0;
};

}  // namespace mvface
