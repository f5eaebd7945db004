#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvface/geometry.hpp"
#include "mvface/image.hpp"
#include "mvface/scene.hpp"

namespace mvface {

struct EmptyMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Trade-off weights of the combined objective. Defaults are the published
/// operating point.
struct LossWeights {
  double render = 1.9;
  double landmark = 1e-3;
  double identity = 0.2;
  double regularization = 1e-4;
  // inner regularization weights
  double reg_identity = 1.0;
  double reg_expression = 0.8;
  double reg_albedo = 3e-3;
  // combination weights
  double two_d = 1.0;
  double multiview = 1.0;
  double pixel = 0.15;
  double depth = 1e-4;
  double epipolar = 1e-3;

  void validate() const;
};

/// Term toggles and covisibility behavior, mainly for ablation runs.
struct LossOptions {
  bool use_multiview = true;
  bool use_pixel = true;
  bool use_depth = true;
  bool use_epipolar = true;
  /// When false, the covisible map is replaced by the full target render mask
  /// and the source-depth agreement guard is disabled.
  bool use_covisible = true;
  /// Exclusive covisible-triangle reading (all three vertices covisible).
  bool covisible_all_vertices = false;
  /// Depth agreement guard as a fraction of the mean face depth.
  double occlusion_depth_tol_frac = 0.01;
  /// Target view for multi-view pairs; -1 selects the middle view.
  int target_view = -1;

  int resolve_target(int n_views) const {
    return target_view >= 0 ? target_view : (n_views - 1) / 2;
  }
};

struct PairTerms {
  int target = 0, source = 0;
  double pixel = 0.0, depth = 0.0, epipolar = 0.0;
  bool pixel_valid = false, depth_valid = false, epipolar_valid = false;
  int covisible_count = 0;
  int effective_count = 0;  // covisible pixels that also sampled validly
  std::string note;         // skip reasons
};

struct ViewTerms {
  double render = 0.0, landmark = 0.0, identity = 0.0;
  int mask_count = 0;
};

/// Named scalar per loss term plus the weighted total.
/// `total` always equals the weighted recombination of the stored terms.
struct LossReport {
  double render = 0.0, landmark = 0.0, identity = 0.0, regularization = 0.0;
  double two_d = 0.0;
  double pixel = 0.0, depth = 0.0, epipolar = 0.0;
  bool pixel_active = false, depth_active = false, epipolar_active = false;
  bool identity_active = false;
  double total = 0.0;
  std::vector<ViewTerms> views;
  std::vector<PairTerms> pairs;

  /// Recomputes the weighted sum from the stored terms.
  double recombine(const LossWeights& w) const;
};

/// Optional deep-feature hook for the identity term. The default null
/// provider keeps the term inactive.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Empty optional = no embedding available (term inactive).
  virtual std::optional<Eigen::VectorXd> embed(const ImageRGB& image) const = 0;
};

class NullEmbeddingProvider : public EmbeddingProvider {
 public:
  std::optional<Eigen::VectorXd> embed(const ImageRGB&) const override { return std::nullopt; }
};

/// Mean photometric distance over the mask: per pixel, the Euclidean norm of
/// the RGB difference, weighted by per-pixel skin confidence.
double render_loss(const ImageRGB& observed, const ImageRGB& rendered,
                   const std::vector<uint8_t>& mask, const ImageGray* skin_weight = nullptr);

/// Confidence-weighted sum of squared pixel distances.
double landmark_loss(const Eigen::MatrixX2d& observed, const Eigen::MatrixX2d& projected,
                     const Eigen::VectorXd& confidence);

/// w_id * |alpha|^2 + w_exp * |beta|^2 + w_tex * |gamma|^2.
double regularization_loss(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                           const Eigen::VectorXd& gamma, const LossWeights& w);

/// Cosine distance (1 - cosine similarity) between provider embeddings.
/// `active` reports whether the provider produced embeddings.
double identity_loss(const EmbeddingProvider& provider, const ImageRGB& observed,
                     const ImageRGB& rendered, bool* active = nullptr);

/// Mean absolute color difference on the mask, averaged over channels.
/// Empty mask -> disengaged (returns nullopt).
std::optional<double> pixel_consistency_loss(const ImageRGB& synthesized,
                                             const ImageRGB& observed,
                                             const std::vector<uint8_t>& mask);

/// Scale-rectified mean absolute depth difference on the mask: the
/// synthesized depth is multiplied by the ratio sum(D_t)/sum(D_synth) before
/// differencing, which cancels any global depth scale.
std::optional<double> depth_consistency_loss(const ImageGray& synthesized_depth,
                                             const ImageGray& target_depth,
                                             const std::vector<uint8_t>& mask);

enum class EpipolarStatus { kOk, kDegenerateTranslation };

/// Symmetric epipolar distance of corresponding 2D landmarks under the
/// essential matrix E = [t]x R of the relative pose, lifted to pixel space
/// through the intrinsics. Point-to-line distances are taken in absolute
/// value and accumulated over both directions and all pairs. Pairs with a
/// vanishing line normal are skipped; a near-zero translation makes the term
/// degenerate.
double epipolar_loss(const Eigen::MatrixX2d& target_landmarks,
                     const Eigen::MatrixX2d& source_landmarks, const PoseSE3& rel_target_to_source,
                     const CameraIntrinsics& K_target, const CameraIntrinsics& K_source,
                     EpipolarStatus* status = nullptr);

/// Renders every view at the given parameters and assembles the combined
/// objective: per-view 2D terms averaged over views plus multi-view terms
/// averaged over (target, source) pairs with a fixed target view.
LossReport total_loss(const MorphableModel& model, const ViewRig& rig,
                      const ParameterVector& params, const LossWeights& weights,
                      const LossOptions& options = {},
                      const EmbeddingProvider* embedder = nullptr);

}  // namespace mvface
