#include "mvface/losses.hpp"

#include <cmath>

#include "mvface/rasterizer.hpp"
#include "mvface/view_synthesis.hpp"

namespace mvface {

void LossWeights::validate() const {
  const double all[] = {render,         landmark,   identity, regularization, reg_identity,
                        reg_expression, reg_albedo, two_d,    multiview,      pixel,
                        depth,          epipolar};
  for (double w : all)
    if (!(w >= 0)) throw std::invalid_argument("weights must be non-negative");
}

double LossReport::recombine(const LossWeights& w) const {
  const double l2d = w.render * render + w.landmark * landmark + w.identity * identity +
                     w.regularization * regularization;
  double mul = 0.0;
  if (pixel_active) mul += w.pixel * pixel;
  if (depth_active) mul += w.depth * depth;
  if (epipolar_active) mul += w.epipolar * epipolar;
  return w.two_d * l2d + w.multiview * mul;
}

double render_loss(const ImageRGB& observed, const ImageRGB& rendered,
                   const std::vector<uint8_t>& mask, const ImageGray* skin_weight) {
  if (observed.width != rendered.width || observed.height != rendered.height)
    throw std::invalid_argument("render_loss: image size mismatch");
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < observed.height; ++y) {
    for (int x = 0; x < observed.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * observed.width + x;
      if (!mask[idx]) continue;
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = observed.at(x, y, c) - rendered.at(x, y, c);
        sq += d * d;
      }
      const double w = skin_weight ? skin_weight->at(x, y) : 1.0;
      sum += w * std::sqrt(sq);
      ++count;
    }
  }
  if (count == 0) throw EmptyMaskError("render_loss: no face pixels");
  return sum / static_cast<double>(count);
}

double landmark_loss(const Eigen::MatrixX2d& observed, const Eigen::MatrixX2d& projected,
                     const Eigen::VectorXd& confidence) {
  if (observed.rows() != projected.rows() || observed.rows() != confidence.size())
    throw std::invalid_argument("landmark_loss: landmark count mismatch");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < observed.rows(); ++i)
    sum += confidence[i] * (observed.row(i) - projected.row(i)).squaredNorm();
  return sum;
}

double regularization_loss(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                           const Eigen::VectorXd& gamma, const LossWeights& w) {
  return w.reg_identity * alpha.squaredNorm() + w.reg_expression * beta.squaredNorm() +
         w.reg_albedo * gamma.squaredNorm();
}

double identity_loss(const EmbeddingProvider& provider, const ImageRGB& observed,
                     const ImageRGB& rendered, bool* active) {
  const auto e1 = provider.embed(observed);
  const auto e2 = provider.embed(rendered);
  if (!e1 || !e2 || e1->size() != e2->size() || e1->norm() == 0 || e2->norm() == 0) {
    if (active) *active = false;
    return 0.0;
  }
  if (active) *active = true;
  return 1.0 - e1->dot(*e2) / (e1->norm() * e2->norm());
}

std::optional<double> pixel_consistency_loss(const ImageRGB& synthesized,
                                             const ImageRGB& observed,
                                             const std::vector<uint8_t>& mask) {
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < observed.height; ++y) {
    for (int x = 0; x < observed.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * observed.width + x;
      if (!mask[idx]) continue;
      double d = 0.0;
      for (int c = 0; c < 3; ++c) d += std::abs(synthesized.at(x, y, c) - observed.at(x, y, c));
      sum += d / 3.0;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::optional<double> depth_consistency_loss(const ImageGray& synthesized_depth,
                                             const ImageGray& target_depth,
                                             const std::vector<uint8_t>& mask) {
  double sum_target = 0.0, sum_synth = 0.0;
  long count = 0;
  for (int y = 0; y < target_depth.height; ++y) {
    for (int x = 0; x < target_depth.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * target_depth.width + x;
      if (!mask[idx]) continue;
      sum_target += target_depth.at(x, y);
      sum_synth += synthesized_depth.at(x, y);
      ++count;
    }
  }
  if (count == 0 || !(sum_synth > 0)) return std::nullopt;
  const double scale = sum_target / sum_synth;
  double sum = 0.0;
  for (int y = 0; y < target_depth.height; ++y) {
    for (int x = 0; x < target_depth.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * target_depth.width + x;
      if (!mask[idx]) continue;
      sum += std::abs(scale * synthesized_depth.at(x, y) - target_depth.at(x, y));
    }
  }
  return sum / static_cast<double>(count);
}

double epipolar_loss(const Eigen::MatrixX2d& target_landmarks,
                     const Eigen::MatrixX2d& source_landmarks, const PoseSE3& rel_target_to_source,
                     const CameraIntrinsics& K_target, const CameraIntrinsics& K_source,
                     EpipolarStatus* status) {
  if (target_landmarks.rows() != source_landmarks.rows())
    throw std::invalid_argument("epipolar_loss: landmark count mismatch");
  if (rel_target_to_source.translation.norm() < 1e-9) {
    if (status) *status = EpipolarStatus::kDegenerateTranslation;
    return 0.0;
  }
  if (status) *status = EpipolarStatus::kOk;

  const Mat3 e = skew(rel_target_to_source.translation) * rel_target_to_source.rotation;
  const Mat3 f = K_source.inverse_matrix().transpose() * e * K_target.inverse_matrix();
  const Mat3 ft = f.transpose();

  double sum = 0.0;
  for (Eigen::Index i = 0; i < target_landmarks.rows(); ++i) {
    const Vec3 p(target_landmarks(i, 0), target_landmarks(i, 1), 1.0);
    const Vec3 q(source_landmarks(i, 0), source_landmarks(i, 1), 1.0);
    const Vec3 fp = f * p;    // epipolar line of p in the source image
    const Vec3 ftq = ft * q;  // epipolar line of q in the target image
    const double num = std::abs(q.dot(fp));
    const double den_fwd = std::sqrt(fp.x() * fp.x() + fp.y() * fp.y());
    const double den_rev = std::sqrt(ftq.x() * ftq.x() + ftq.y() * ftq.y());
    if (den_fwd > 0) sum += num / den_fwd;
    if (den_rev > 0) sum += num / den_rev;
  }
  return sum;
}

LossReport total_loss(const MorphableModel& model, const ViewRig& rig,
                      const ParameterVector& params, const LossWeights& weights,
                      const LossOptions& options, const EmbeddingProvider* embedder) {
  const int n_views = rig.view_count();
  if (params.view_count() != n_views)
    throw std::invalid_argument("total_loss: parameter/rig view count mismatch");

  const Eigen::VectorXd vertices = synthesize_shape(model, params.alpha, params.beta);
  const Eigen::VectorXd albedo = synthesize_albedo(model, params.gamma);
  const Eigen::VectorXd normals = vertex_normals(vertices, model.triangles).normals;

  std::vector<RenderOutputs> renders(n_views);
  std::vector<std::vector<uint8_t>> masks(n_views);
  for (int v = 0; v < n_views; ++v) {
    renders[v] = render_view(vertices, model.triangles, normals, albedo, params.views[v].sh,
                             params.views[v].pose(), rig.views[v].intrinsics);
    masks[v].assign(renders[v].fragments.triangle_id.size(), 0);
    for (size_t i = 0; i < masks[v].size(); ++i)
      masks[v][i] = renders[v].fragments.triangle_id[i] != kEmptyFragment;
  }

  NullEmbeddingProvider null_provider;
  const EmbeddingProvider& provider = embedder ? *embedder : null_provider;

  LossReport rep;
  rep.views.resize(n_views);
  double face_depth_sum = 0.0;
  for (int v = 0; v < n_views; ++v) {
    const auto& view = rig.views[v];
    const PoseSE3 pose = params.views[v].pose();
    ViewTerms& vt = rep.views[v];
    vt.render = render_loss(view.image, renders[v].image, masks[v]);
    for (uint8_t m : masks[v]) vt.mask_count += m;

    Eigen::MatrixX2d projected(model.landmark_count(), 2);
    for (int i = 0; i < model.landmark_count(); ++i) {
      const Vec3 x = model.vertex(vertices, model.landmark_indices[i]);
      const auto p = project(x, pose, view.intrinsics);
      projected(i, 0) = p.u;
      projected(i, 1) = p.v;
    }
    vt.landmark = landmark_loss(view.landmarks, projected, model.landmark_confidence);

    bool id_active = false;
    vt.identity = identity_loss(provider, view.image, renders[v].image, &id_active);
    rep.identity_active = rep.identity_active || id_active;

    double depth_sum = 0.0;
    for (int i = 0; i < model.vertex_count(); ++i)
      depth_sum += pose.apply(model.vertex(vertices, i)).z();
    face_depth_sum += depth_sum / model.vertex_count();

    rep.render += vt.render / n_views;
    rep.landmark += vt.landmark / n_views;
    rep.identity += vt.identity / n_views;
  }
  rep.regularization = regularization_loss(params.alpha, params.beta, params.gamma, weights);
  const double mean_face_depth = face_depth_sum / n_views;

  if (options.use_multiview && n_views >= 2) {
    const int target = options.resolve_target(n_views);
    SynthesisOptions synth_opt;
    if (options.use_covisible && options.occlusion_depth_tol_frac > 0)
      synth_opt.occlusion_depth_tol = options.occlusion_depth_tol_frac * mean_face_depth;

    int pixel_n = 0, depth_n = 0, epi_n = 0;
    for (int s = 0; s < n_views; ++s) {
      if (s == target) continue;
      PairTerms pt;
      pt.target = target;
      pt.source = s;
      const PoseSE3 rel =
          relative_pose(params.views[target].pose(), params.views[s].pose());

      std::vector<uint8_t> pair_mask;
      if (options.use_covisible) {
        const auto covis_v = covisible_vertices(renders[target].visible_vertices,
                                                renders[s].visible_vertices);
        const auto covis_t =
            covisible_triangles(covis_v, model.triangles, options.covisible_all_vertices);
        const CovisibleMap cm = covisible_map(covis_t, renders[target].fragments);
        pair_mask = cm.mask;
        pt.covisible_count = cm.count;
      } else {
        pair_mask = masks[target];
        for (uint8_t m : pair_mask) pt.covisible_count += m;
      }

      const SynthesizedView synth = synthesize_target(
          rig.views[s].image, renders[s].depth, renders[target].depth, pair_mask, rel,
          rig.views[target].intrinsics, rig.views[s].intrinsics, synth_opt);
      pt.effective_count = synth.valid_count;

      if (options.use_pixel) {
        const auto lp = pixel_consistency_loss(synth.image, rig.views[target].image, synth.valid);
        if (lp) {
          pt.pixel = *lp;
          pt.pixel_valid = true;
          rep.pixel += *lp;
          ++pixel_n;
        } else {
          pt.note += "pixel term skipped (no valid overlap); ";
        }
      }
      if (options.use_depth) {
        const auto ld = depth_consistency_loss(synth.depth, renders[target].depth, synth.valid);
        if (ld) {
          pt.depth = *ld;
          pt.depth_valid = true;
          rep.depth += *ld;
          ++depth_n;
        } else {
          pt.note += "depth term skipped (no valid overlap); ";
        }
      }
      if (options.use_epipolar) {
        EpipolarStatus st;
        const double le = epipolar_loss(rig.views[target].landmarks, rig.views[s].landmarks, rel,
                                        rig.views[target].intrinsics, rig.views[s].intrinsics, &st);
        if (st == EpipolarStatus::kOk) {
          pt.epipolar = le;
          pt.epipolar_valid = true;
          rep.epipolar += le;
          ++epi_n;
        } else {
          pt.note += "epipolar term skipped (pure rotation); ";
        }
      }
      rep.pairs.push_back(std::move(pt));
    }
    if (pixel_n > 0) {
      rep.pixel /= pixel_n;
      rep.pixel_active = true;
    }
    if (depth_n > 0) {
      rep.depth /= depth_n;
      rep.depth_active = true;
    }
    if (epi_n > 0) {
      rep.epipolar /= epi_n;
      rep.epipolar_active = true;
    }
  }

  rep.two_d = weights.render * rep.render + weights.landmark * rep.landmark +
              weights.identity * rep.identity + weights.regularization * rep.regularization;
  rep.total = rep.recombine(weights);
  return rep;
}

}  // namespace mvface
