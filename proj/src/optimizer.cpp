#include "mvface/optimizer.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "mvface/io.hpp"
#include "mvface/rasterizer.hpp"
#include "mvface/util.hpp"
#include "mvface/view_synthesis.hpp"

namespace mvface {

NumericGradient numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& objective,
                                 const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
  NumericGradient out;
  out.gradient.setZero(x.size());
  out.one_sided.assign(x.size(), 0);
  const double f0 = objective(x);
  if (!std::isfinite(f0)) throw std::invalid_argument("numeric_gradient: objective not finite at x");
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h[i];
    xm[i] -= h[i];
    const double fp = objective(xp);
    const double fm = objective(xm);
    if (std::isfinite(fp) && std::isfinite(fm)) {
      out.gradient[i] = (fp - fm) / (2.0 * h[i]);
    } else if (std::isfinite(fp)) {
      out.gradient[i] = (fp - f0) / h[i];
      out.one_sided[i] = 1;
    } else if (std::isfinite(fm)) {
      out.gradient[i] = (f0 - fm) / h[i];
      out.one_sided[i] = 1;
    } else {
      out.one_sided[i] = 1;
    }
  }
  return out;
}

GradientCheckReport gradient_check(const std::function<double(const Eigen::VectorXd&)>& objective,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& h,
                                   double flag_tol) {
  GradientCheckReport rep;
  rep.coords.resize(x.size());
  const NumericGradient g1 = numeric_gradient(objective, x, h);
  const NumericGradient g2 = numeric_gradient(objective, x, (h / 2.0).eval());
  const NumericGradient g4 = numeric_gradient(objective, x, (h / 4.0).eval());
  double scale = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) scale = std::max(scale, std::abs(g4.gradient[i]));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    auto& e = rep.coords[i];
    e.d_h = g1.gradient[i];
    e.d_h2 = g2.gradient[i];
    e.d_h4 = g4.gradient[i];
    const double denom = std::max({std::abs(e.d_h4), 1e-3 * scale, 1e-12});
    e.rel_discrepancy = std::abs(e.d_h2 - e.d_h4) / denom;
    const double diff_low = e.d_h2 - e.d_h4;
    const double noise = 1e-9 * (scale + 1.0);
    if (std::abs(diff_low) > noise) {
      e.richardson_ratio = (e.d_h - e.d_h2) / diff_low;
      e.ratio_defined = true;
    }
    e.flagged = e.rel_discrepancy > flag_tol;
    rep.any_flagged = rep.any_flagged || e.flagged;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Evaluator

struct Evaluator::CurrentRenders {
  // per view: render to take fragments/depth from, image to shade from
  std::vector<const RenderOutputs*> render;
  std::vector<const ImageRGB*> image;
  std::vector<RenderOutputs> owned_renders;
  std::vector<ImageRGB> owned_images;
};

Evaluator::Evaluator(const MorphableModel& model, const ViewRig& rig, const LossWeights& weights,
                     const FitConfig& config)
    : model_(model), rig_(rig), weights_(weights), config_(config) {
  target_view_ = config.loss_options.resolve_target(rig.view_count());
}

LossReport Evaluator::full(const ParameterVector& params) const {
  return total_loss(model_, rig_, params, weights_, config_.loss_options);
}

void Evaluator::set_base(const ParameterVector& params) {
  base_params_ = params;
  base_vertices_ = synthesize_shape(model_, params.alpha, params.beta);
  base_albedo_ = synthesize_albedo(model_, params.gamma);
  base_normals_ = vertex_normals(base_vertices_, model_.triangles).normals;

  const int n_views = rig_.view_count();
  views_.assign(n_views, {});
  double depth_sum = 0.0;
  for (int v = 0; v < n_views; ++v) {
    views_[v].render =
        render_view(base_vertices_, model_.triangles, base_normals_, base_albedo_,
                    params.views[v].sh, params.views[v].pose(), rig_.views[v].intrinsics);
    auto& mp = views_[v].mask_pixels;
    const auto& ids = views_[v].render.fragments.triangle_id;
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] != kEmptyFragment) mp.push_back(static_cast<int>(i));
    const PoseSE3 pose = params.views[v].pose();
    double s = 0.0;
    for (int i = 0; i < model_.vertex_count(); ++i)
      s += pose.apply(model_.vertex(base_vertices_, i)).z();
    depth_sum += s / model_.vertex_count();
  }
  if (face_depth_ == 0.0) face_depth_ = depth_sum / n_views;

  pairs_.clear();
  const LossOptions& opt = config_.loss_options;
  if (opt.use_multiview && n_views >= 2) {
    for (int s = 0; s < n_views; ++s) {
      if (s == target_view_) continue;
      PairState pair;
      pair.target = target_view_;
      pair.source = s;
      const PoseSE3 rel =
          relative_pose(params.views[target_view_].pose(), params.views[s].pose());

      std::vector<uint8_t> mask;
      if (opt.use_covisible) {
        const auto cv = covisible_vertices(views_[target_view_].render.visible_vertices,
                                           views_[s].render.visible_vertices);
        const auto ct = covisible_triangles(cv, model_.triangles, opt.covisible_all_vertices);
        mask = covisible_map(ct, views_[target_view_].render.fragments).mask;
      } else {
        mask.assign(views_[target_view_].render.fragments.triangle_id.size(), 0);
        for (int idx : views_[target_view_].mask_pixels) mask[idx] = 1;
      }
      SynthesisOptions sopt;
      if (opt.use_covisible && opt.occlusion_depth_tol_frac > 0)
        sopt.occlusion_depth_tol = opt.occlusion_depth_tol_frac * (depth_sum / n_views);
      pair.occlusion_tol = sopt.occlusion_depth_tol;

      const SynthesizedView synth = synthesize_target(
          rig_.views[s].image, views_[s].render.depth, views_[target_view_].render.depth, mask,
          rel, rig_.views[target_view_].intrinsics, rig_.views[s].intrinsics, sopt);
      const int w = views_[target_view_].render.depth.width;
      for (int y = 0; y < views_[target_view_].render.depth.height; ++y)
        for (int x = 0; x < w; ++x) {
          if (!synth.valid[static_cast<size_t>(y) * w + x]) continue;
          PairPixel pp;
          pp.x = x;
          pp.y = y;
          for (int c = 0; c < 3; ++c) pp.base_rgb[c] = synth.image.at(x, y, c);
          pp.base_depth_in_target = synth.depth.at(x, y);
          pp.base_target_depth = views_[target_view_].render.depth.at(x, y);
          pair.pixels.push_back(pp);
        }
      pair.pixel_active = opt.use_pixel && !pair.pixels.empty();
      double synth_sum = 0.0;
      for (const auto& pp : pair.pixels) synth_sum += pp.base_depth_in_target;
      pair.depth_active = opt.use_depth && !pair.pixels.empty() && synth_sum > 0;
      pair.epi_active = opt.use_epipolar && rel.translation.norm() >= 1e-9;
      pair.base_epi = pair.epi_active
                          ? epipolar_residuals(pair, rel)
                          : Eigen::VectorXd::Zero(2 * rig_.views[s].landmarks.rows());
      pairs_.push_back(std::move(pair));
    }
  }

  // optimizer coordinates
  coords_.clear();
  const double h_trans = config_.h_translation_frac * face_depth_;
  if (config_.fit_coefficients) {
    const int nc = model_.n_id() + model_.n_exp() + model_.n_alb();
    for (int i = 0; i < nc; ++i) coords_.push_back({Coord::kCoeff, -1, i, config_.h_coefficient});
  }
  if (config_.fit_pose)
    for (int v = 0; v < n_views; ++v) {
      for (int i = 0; i < 3; ++i) coords_.push_back({Coord::kRotation, v, i, config_.h_rotation});
      for (int i = 0; i < 3; ++i) coords_.push_back({Coord::kTranslation, v, i, h_trans});
    }
  if (config_.fit_sh)
    for (int v = 0; v < n_views; ++v)
      for (int i = 0; i < 27; ++i) coords_.push_back({Coord::kSh, v, i, config_.h_sh});

  compute_residual_layout();
}

void Evaluator::compute_residual_layout() {
  const int n_views = rig_.view_count();
  const int n_lm = model_.landmark_count();
  const LossWeights& w = weights_;

  reg_scale_id_ = std::sqrt(w.two_d * w.regularization * w.reg_identity);
  reg_scale_exp_ = std::sqrt(w.two_d * w.regularization * w.reg_expression);
  reg_scale_alb_ = std::sqrt(w.two_d * w.regularization * w.reg_albedo);
  lm_scale_ = std::sqrt(w.two_d * w.landmark / n_views);
  render_scale_ = std::sqrt(w.two_d * w.render / n_views);

  pixel_pairs_ = depth_pairs_ = epi_pairs_ = 0;
  for (const auto& p : pairs_) {
    pixel_pairs_ += p.pixel_active;
    depth_pairs_ += p.depth_active;
    epi_pairs_ += p.epi_active;
  }
  pixel_scale_ = pixel_pairs_ ? std::sqrt(w.multiview * w.pixel / pixel_pairs_) : 0.0;
  depth_scale_ = depth_pairs_ ? std::sqrt(w.multiview * w.depth / depth_pairs_) : 0.0;
  epi_scale_ = epi_pairs_ ? std::sqrt(w.multiview * w.epipolar / epi_pairs_) : 0.0;

  int n = model_.n_id() + model_.n_exp() + model_.n_alb();
  n += n_views * 2 * n_lm;
  for (const auto& v : views_) n += 3 * static_cast<int>(v.mask_pixels.size());
  for (const auto& p : pairs_) {
    if (p.pixel_active) n += 3 * static_cast<int>(p.pixels.size());
    if (p.depth_active) n += static_cast<int>(p.pixels.size());
    if (p.epi_active) n += 2 * n_lm;
  }
  residual_size_ = n;
}

Eigen::VectorXd Evaluator::steps() const {
  Eigen::VectorXd h(coords_.size());
  for (size_t i = 0; i < coords_.size(); ++i) h[i] = coords_[i].step;
  return h;
}

ParameterVector Evaluator::apply_delta(const Eigen::VectorXd& delta) const {
  ParameterVector p = base_params_;
  const int n_id = model_.n_id(), n_exp = model_.n_exp();
  std::vector<Vec3> omega(p.view_count(), Vec3::Zero());
  for (size_t i = 0; i < coords_.size(); ++i) {
    const double d = delta[i];
    if (d == 0.0) continue;
    const Coord& c = coords_[i];
    switch (c.group) {
      case Coord::kCoeff:
        if (c.index < n_id)
          p.alpha[c.index] += d;
        else if (c.index < n_id + n_exp)
          p.beta[c.index - n_id] += d;
        else
          p.gamma[c.index - n_id - n_exp] += d;
        break;
      case Coord::kRotation:
        omega[c.view][c.index] += d;
        break;
      case Coord::kTranslation:
        p.views[c.view].translation[c.index] += d;
        break;
      case Coord::kSh:
        p.views[c.view].sh[c.index] += d;
        break;
    }
  }
  for (int v = 0; v < p.view_count(); ++v) {
    if (omega[v].squaredNorm() == 0.0) continue;
    const double angle = omega[v].norm();
    const Quat dq(Eigen::AngleAxisd(angle, omega[v] / angle));
    p.views[v].rotation = (dq * p.views[v].rotation).normalized();
  }
  return p;
}

Eigen::VectorXd Evaluator::epipolar_residuals(const PairState& pair, const PoseSE3& rel) const {
  const auto& lm_t = rig_.views[pair.target].landmarks;
  const auto& lm_s = rig_.views[pair.source].landmarks;
  Eigen::VectorXd res(2 * lm_t.rows());
  if (rel.translation.norm() < 1e-9) return pair.base_epi;
  const Mat3 e = skew(rel.translation) * rel.rotation;
  const Mat3 f = rig_.views[pair.source].intrinsics.inverse_matrix().transpose() * e *
                 rig_.views[pair.target].intrinsics.inverse_matrix();
  const Mat3 ft = f.transpose();
  for (Eigen::Index i = 0; i < lm_t.rows(); ++i) {
    const Vec3 p(lm_t(i, 0), lm_t(i, 1), 1.0);
    const Vec3 q(lm_s(i, 0), lm_s(i, 1), 1.0);
    const Vec3 fp = f * p;
    const Vec3 ftq = ft * q;
    const double num = q.dot(fp);
    const double den_fwd = std::sqrt(fp.x() * fp.x() + fp.y() * fp.y());
    const double den_rev = std::sqrt(ftq.x() * ftq.x() + ftq.y() * ftq.y());
    res[2 * i] = den_fwd > 0 ? num / den_fwd : (pair.base_epi.size() ? pair.base_epi[2 * i] : 0.0);
    res[2 * i + 1] =
        den_rev > 0 ? num / den_rev : (pair.base_epi.size() ? pair.base_epi[2 * i + 1] : 0.0);
  }
  return res;
}

void Evaluator::render_current(const ParameterVector& params, CurrentRenders& cur) const {
  const int n_views = rig_.view_count();
  const bool geometry_dirty = params.alpha != base_params_.alpha || params.beta != base_params_.beta;
  const bool albedo_dirty = params.gamma != base_params_.gamma;

  const Eigen::VectorXd* verts = &base_vertices_;
  const Eigen::VectorXd* normals = &base_normals_;
  const Eigen::VectorXd* albedo = &base_albedo_;
  Eigen::VectorXd new_verts, new_normals, new_albedo;
  if (geometry_dirty) {
    new_verts = synthesize_shape(model_, params.alpha, params.beta);
    new_normals = vertex_normals(new_verts, model_.triangles).normals;
    verts = &new_verts;
    normals = &new_normals;
  }
  if (albedo_dirty) {
    new_albedo = synthesize_albedo(model_, params.gamma);
    albedo = &new_albedo;
  }

  cur.render.assign(n_views, nullptr);
  cur.image.assign(n_views, nullptr);
  cur.owned_renders.clear();
  cur.owned_images.clear();
  cur.owned_renders.reserve(n_views);
  cur.owned_images.reserve(n_views);

  for (int v = 0; v < n_views; ++v) {
    const bool pose_dirty = params.views[v].rotation.coeffs() != base_params_.views[v].rotation.coeffs() ||
                            params.views[v].translation != base_params_.views[v].translation;
    const bool sh_dirty = params.views[v].sh != base_params_.views[v].sh;
    if (geometry_dirty || pose_dirty) {
      cur.owned_renders.push_back(render_view(*verts, model_.triangles, *normals, *albedo,
                                              params.views[v].sh, params.views[v].pose(),
                                              rig_.views[v].intrinsics));
      cur.render[v] = &cur.owned_renders.back();
      cur.image[v] = &cur.owned_renders.back().image;
    } else if (albedo_dirty || sh_dirty) {
      cur.owned_images.push_back(shade_fragments(views_[v].render.fragments, model_.triangles,
                                                 *normals, *albedo, params.views[v].sh));
      cur.render[v] = &views_[v].render;
      cur.image[v] = &cur.owned_images.back();
    } else {
      cur.render[v] = &views_[v].render;
      cur.image[v] = &views_[v].render.image;
    }
  }
}

Evaluator::FrozenEval Evaluator::frozen_eval(const Eigen::VectorXd& delta) const {
  const ParameterVector params = apply_delta(delta);
  CurrentRenders cur;
  render_current(params, cur);

  const bool geometry_dirty = params.alpha != base_params_.alpha || params.beta != base_params_.beta;
  const Eigen::VectorXd* verts = &base_vertices_;
  Eigen::VectorXd new_verts;
  if (geometry_dirty) {
    new_verts = synthesize_shape(model_, params.alpha, params.beta);
    verts = &new_verts;
  }

  FrozenEval out;
  out.residuals.setZero(residual_size_);
  LossReport& rep = out.report;
  const int n_views = rig_.view_count();
  const int n_lm = model_.landmark_count();
  rep.views.resize(n_views);

  int off = 0;
  // regularization block
  for (Eigen::Index i = 0; i < params.alpha.size(); ++i)
    out.residuals[off++] = reg_scale_id_ * params.alpha[i];
  for (Eigen::Index i = 0; i < params.beta.size(); ++i)
    out.residuals[off++] = reg_scale_exp_ * params.beta[i];
  for (Eigen::Index i = 0; i < params.gamma.size(); ++i)
    out.residuals[off++] = reg_scale_alb_ * params.gamma[i];
  rep.regularization = regularization_loss(params.alpha, params.beta, params.gamma, weights_);

  for (int v = 0; v < n_views; ++v) {
    const PoseSE3 pose = params.views[v].pose();
    const PoseSE3 base_pose = base_params_.views[v].pose();
    // landmarks
    double lm_sum = 0.0;
    for (int i = 0; i < n_lm; ++i) {
      const Vec3 x = model_.vertex(*verts, model_.landmark_indices[i]);
      auto p = try_project(x, pose, rig_.views[v].intrinsics);
      if (!p) p = try_project(model_.vertex(base_vertices_, model_.landmark_indices[i]), base_pose,
                              rig_.views[v].intrinsics);
      const double du = p ? p->u - rig_.views[v].landmarks(i, 0) : 0.0;
      const double dv = p ? p->v - rig_.views[v].landmarks(i, 1) : 0.0;
      const double c = std::sqrt(model_.landmark_confidence[i]);
      out.residuals[off++] = lm_scale_ * c * du;
      out.residuals[off++] = lm_scale_ * c * dv;
      lm_sum += model_.landmark_confidence[i] * (du * du + dv * dv);
    }
    rep.views[v].landmark = lm_sum;
    rep.landmark += lm_sum / n_views;

    // render term over the frozen mask
    const auto& mask = views_[v].mask_pixels;
    const double scale = render_scale_ / std::sqrt(static_cast<double>(mask.size()));
    const auto& frag = cur.render[v]->fragments;
    const ImageRGB& img = *cur.image[v];
    const ImageRGB& base_img = views_[v].render.image;
    const ImageRGB& obs = rig_.views[v].image;
    double rsum = 0.0;
    for (int idx : mask) {
      const bool covered = frag.triangle_id[idx] != kEmptyFragment;
      double sq = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double re = covered ? img.data[3 * static_cast<size_t>(idx) + c]
                                  : base_img.data[3 * static_cast<size_t>(idx) + c];
        const double d = re - obs.data[3 * static_cast<size_t>(idx) + c];
        out.residuals[off++] = scale * d;
        sq += d * d;
      }
      rsum += std::sqrt(sq);
    }
    rep.views[v].render = rsum / mask.size();
    rep.views[v].mask_count = static_cast<int>(mask.size());
    rep.render += rep.views[v].render / n_views;
  }

  // pair terms over frozen pixel lists
  int pixel_n = 0, depth_n = 0, epi_n = 0;
  for (const auto& pair : pairs_) {
    const PoseSE3 rel =
        relative_pose(params.views[pair.target].pose(), params.views[pair.source].pose());
    const PoseSE3 rel_inv = rel.inverse();
    const CameraIntrinsics& kt = rig_.views[pair.target].intrinsics;
    const CameraIntrinsics& ks = rig_.views[pair.source].intrinsics;
    const ImageGray& tgt_depth = cur.render[pair.target]->depth;
    const ImageGray& src_depth = cur.render[pair.source]->depth;
    const ImageRGB& src_obs = rig_.views[pair.source].image;
    const ImageRGB& tgt_obs = rig_.views[pair.target].image;

    const size_t npx = pair.pixels.size();
    std::vector<double> cur_rgb(3 * npx), cur_dt(npx), cur_dsyn(npx);
    for (size_t k = 0; k < npx; ++k) {
      const auto& pp = pair.pixels[k];
      // defaults: frozen base values
      cur_rgb[3 * k] = pp.base_rgb[0];
      cur_rgb[3 * k + 1] = pp.base_rgb[1];
      cur_rgb[3 * k + 2] = pp.base_rgb[2];
      cur_dt[k] = pp.base_target_depth;
      cur_dsyn[k] = pp.base_depth_in_target;
      const double dt = tgt_depth.at(pp.x, pp.y);
      if (dt == kEmptyDepth) continue;
      const auto warp = warp_pixel(pp.x, pp.y, dt, rel, kt, ks);
      if (!warp) continue;
      const BilinearSample rgb = bilinear_sample(src_obs, warp->u, warp->v);
      const BilinearSample ds = bilinear_sample(src_depth, warp->u, warp->v);
      if (!rgb.valid || !ds.valid) continue;
      if (pair.occlusion_tol > 0 && std::abs(ds.value[0] - warp->source_depth) > pair.occlusion_tol)
        continue;
      const Vec3 xs((warp->u - ks.cx) / ks.fx * ds.value[0], (warp->v - ks.cy) / ks.fy * ds.value[0],
                    ds.value[0]);
      const Vec3 xt = rel_inv.apply(xs);
      if (!(xt.z() > 0)) continue;
      cur_rgb[3 * k] = rgb.value[0];
      cur_rgb[3 * k + 1] = rgb.value[1];
      cur_rgb[3 * k + 2] = rgb.value[2];
      cur_dt[k] = dt;
      cur_dsyn[k] = xt.z();
    }

    PairTerms pt;
    pt.target = pair.target;
    pt.source = pair.source;
    pt.effective_count = static_cast<int>(npx);
    if (pair.pixel_active) {
      const double s = pixel_scale_ / std::sqrt(3.0 * npx);
      double sum = 0.0;
      for (size_t k = 0; k < npx; ++k) {
        const auto& pp = pair.pixels[k];
        double a = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double d = cur_rgb[3 * k + c] - tgt_obs.at(pp.x, pp.y, c);
          out.residuals[off++] = s * d;
          a += std::abs(d);
        }
        sum += a / 3.0;
      }
      pt.pixel = sum / npx;
      pt.pixel_valid = true;
      rep.pixel += pt.pixel;
      ++pixel_n;
    }
    if (pair.depth_active) {
      double sum_t = 0.0, sum_s = 0.0;
      for (size_t k = 0; k < npx; ++k) {
        sum_t += cur_dt[k];
        sum_s += cur_dsyn[k];
      }
      const double ratio = sum_s > 0 ? sum_t / sum_s : 1.0;
      const double s = depth_scale_ / std::sqrt(static_cast<double>(npx));
      double sum = 0.0;
      for (size_t k = 0; k < npx; ++k) {
        const double d = ratio * cur_dsyn[k] - cur_dt[k];
        out.residuals[off++] = s * d;
        sum += std::abs(d);
      }
      pt.depth = sum / npx;
      pt.depth_valid = true;
      rep.depth += pt.depth;
      ++depth_n;
    }
    if (pair.epi_active) {
      const Eigen::VectorXd res = epipolar_residuals(pair, rel);
      double sum = 0.0;
      for (Eigen::Index i = 0; i < res.size(); ++i) {
        out.residuals[off++] = epi_scale_ * res[i];
        sum += std::abs(res[i]);
      }
      pt.epipolar = sum;
      pt.epipolar_valid = true;
      rep.epipolar += sum;
      ++epi_n;
    }
    rep.pairs.push_back(std::move(pt));
  }
  if (pixel_n) {
    rep.pixel /= pixel_n;
    rep.pixel_active = true;
  }
  if (depth_n) {
    rep.depth /= depth_n;
    rep.depth_active = true;
  }
  if (epi_n) {
    rep.epipolar /= epi_n;
    rep.epipolar_active = true;
  }
  rep.two_d = weights_.render * rep.render + weights_.landmark * rep.landmark +
              weights_.identity * rep.identity + weights_.regularization * rep.regularization;
  rep.total = rep.recombine(weights_);
  return out;
}

double Evaluator::frozen_term(const Eigen::VectorXd& delta, const std::string& term) const {
  const FrozenEval fe = frozen_eval(delta);
  if (term == "render") return fe.report.render;
  if (term == "landmark") return fe.report.landmark;
  if (term == "regularization") return fe.report.regularization;
  if (term == "pixel") return fe.report.pixel;
  if (term == "depth") return fe.report.depth;
  if (term == "epipolar") return fe.report.epipolar;
  if (term == "total") return fe.report.total;
  throw std::invalid_argument("unknown loss term: " + term);
}

// ---------------------------------------------------------------------------
// fit

FitResult fit(const MorphableModel& model, const ViewRig& rig, const ParameterVector& init,
              const FitConfig& config, const LossWeights& weights) {
  init.validate();
  weights.validate();
  Evaluator ev(model, rig, weights, config);

  LossReport rep;
  try {
    rep = ev.full(init);
  } catch (const EmptyMaskError&) {
    throw FitError("fit: initialization renders no pixels in at least one view");
  }

  FitResult result;
  result.params = init;
  double lambda = config.lambda0;
  const int threads = config.threads > 0 ? config.threads : env_thread_cap();

  IterationRecord rec0;
  rec0.iteration = 0;
  rec0.report = rep;
  rec0.lambda = lambda;
  rec0.accepted = true;
  rec0.param_hash = init.hash();
  result.trace.iterations.push_back(rec0);

  auto pair_term_lost = [](const LossReport& before, const LossReport& after) {
    if (before.pairs.size() != after.pairs.size()) return true;
    for (size_t i = 0; i < before.pairs.size(); ++i) {
      if (before.pairs[i].pixel_valid && !after.pairs[i].pixel_valid) return true;
      if (before.pairs[i].depth_valid && !after.pairs[i].depth_valid) return true;
      if (before.pairs[i].epipolar_valid && !after.pairs[i].epipolar_valid) return true;
    }
    return false;
  };

  int below_tol = 0;
  result.trace.termination = "max_iterations";
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    ev.set_base(result.params);
    const Eigen::VectorXd h = ev.steps();
    const int nc = ev.coord_count();
    const Eigen::VectorXd r0 = ev.frozen_eval(Eigen::VectorXd::Zero(nc)).residuals;

    Eigen::MatrixXd jac(r0.size(), nc);
    parallel_for(nc, threads, [&](int i) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(nc);
      d[i] = h[i];
      jac.col(i) = (ev.frozen_eval(d).residuals - r0) / h[i];
    });

    const Eigen::MatrixXd hess = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r0;

    IterationRecord rec;
    rec.iteration = iter;
    bool accepted = false;
    ParameterVector candidate;
    LossReport cand_rep;
    Eigen::VectorXd step;
    while (lambda <= config.lambda_max) {
      Eigen::MatrixXd a = hess;
      for (int i = 0; i < nc; ++i) a(i, i) += lambda * std::max(hess(i, i), 1e-12);
      step = a.ldlt().solve(-grad);
      candidate = ev.apply_delta(step);
      bool usable = true;
      try {
        cand_rep = ev.full(candidate);
      } catch (const EmptyMaskError&) {
        usable = false;
      }
      if (usable && !pair_term_lost(rep, cand_rep) && cand_rep.total < rep.total) {
        accepted = true;
        break;
      }
      lambda *= config.lambda_up;
      ++rec.rejected_proposals;
    }

    if (!accepted) {
      rec.report = rep;
      rec.lambda = lambda;
      rec.accepted = false;
      rec.param_hash = result.params.hash();
      result.trace.iterations.push_back(rec);
      result.trace.termination = "stalled";
      break;
    }

    const double rel = (rep.total - cand_rep.total) / std::max(rep.total, 1e-300);
    result.params = candidate;
    rep = cand_rep;
    lambda = std::max(lambda / config.lambda_down, 1e-12);
    rec.report = rep;
    rec.lambda = lambda;
    rec.step_norm = step.norm();
    rec.accepted = true;
    rec.param_hash = result.params.hash();
    result.trace.iterations.push_back(rec);

    if (rec.step_norm < config.tol_step) {
      result.trace.termination = "step_tolerance";
      break;
    }
    if (rel < config.tol_rel_decrease) {
      if (++below_tol >= 2) {
        result.trace.termination = "loss_tolerance";
        break;
      }
    } else {
      below_tol = 0;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// JSON / CSV

using nlohmann::json;

std::string fit_config_to_json(const FitConfig& c) {
  json j;
  j["max_iters"] = c.max_iters;
  j["lambda0"] = c.lambda0;
  j["lambda_up"] = c.lambda_up;
  j["lambda_down"] = c.lambda_down;
  j["lambda_max"] = c.lambda_max;
  j["h_rotation"] = c.h_rotation;
  j["h_translation_frac"] = c.h_translation_frac;
  j["h_coefficient"] = c.h_coefficient;
  j["h_sh"] = c.h_sh;
  j["tol_rel_decrease"] = c.tol_rel_decrease;
  j["tol_step"] = c.tol_step;
  j["fit_pose"] = c.fit_pose;
  j["fit_coefficients"] = c.fit_coefficients;
  j["fit_sh"] = c.fit_sh;
  j["threads"] = c.threads;
  j["loss_options"] = {{"use_multiview", c.loss_options.use_multiview},
                       {"use_pixel", c.loss_options.use_pixel},
                       {"use_depth", c.loss_options.use_depth},
                       {"use_epipolar", c.loss_options.use_epipolar},
                       {"use_covisible", c.loss_options.use_covisible},
                       {"covisible_all_vertices", c.loss_options.covisible_all_vertices},
                       {"occlusion_depth_tol_frac", c.loss_options.occlusion_depth_tol_frac},
                       {"target_view", c.loss_options.target_view}};
  return j.dump(2);
}

FitConfig fit_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  FitConfig c;
  auto get = [&](const json& node, const char* key, auto& field) {
    if (node.contains(key)) field = node.at(key).get<std::decay_t<decltype(field)>>();
  };
  get(j, "max_iters", c.max_iters);
  get(j, "lambda0", c.lambda0);
  get(j, "lambda_up", c.lambda_up);
  get(j, "lambda_down", c.lambda_down);
  get(j, "lambda_max", c.lambda_max);
  get(j, "h_rotation", c.h_rotation);
  get(j, "h_translation_frac", c.h_translation_frac);
  get(j, "h_coefficient", c.h_coefficient);
  get(j, "h_sh", c.h_sh);
  get(j, "tol_rel_decrease", c.tol_rel_decrease);
  get(j, "tol_step", c.tol_step);
  get(j, "fit_pose", c.fit_pose);
  get(j, "fit_coefficients", c.fit_coefficients);
  get(j, "fit_sh", c.fit_sh);
  get(j, "threads", c.threads);
  if (j.contains("loss_options")) {
    const json& o = j.at("loss_options");
    get(o, "use_multiview", c.loss_options.use_multiview);
    get(o, "use_pixel", c.loss_options.use_pixel);
    get(o, "use_depth", c.loss_options.use_depth);
    get(o, "use_epipolar", c.loss_options.use_epipolar);
    get(o, "use_covisible", c.loss_options.use_covisible);
    get(o, "covisible_all_vertices", c.loss_options.covisible_all_vertices);
    get(o, "occlusion_depth_tol_frac", c.loss_options.occlusion_depth_tol_frac);
    get(o, "target_view", c.loss_options.target_view);
  }
  return c;
}

namespace {
std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}
}  // namespace

std::string trace_to_json(const FitTrace& trace, const LossWeights& weights) {
  json j;
  j["termination"] = trace.termination;
  j["iterations"] = json::array();
  for (const auto& it : trace.iterations) {
    json ji;
    ji["iteration"] = it.iteration;
    ji["lambda"] = it.lambda;
    ji["step_norm"] = it.step_norm;
    ji["accepted"] = it.accepted;
    ji["rejected_proposals"] = it.rejected_proposals;
    ji["param_hash"] = hash_hex(it.param_hash);
    ji["report"] = json::parse(report_to_json(it.report, weights));
    j["iterations"].push_back(ji);
  }
  return j.dump(2);
}

std::string trace_to_csv(const FitTrace& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,total,render,landmark,regularization,pixel,depth,epipolar,lambda,step_norm,"
        "accepted,rejected_proposals,param_hash\n";
  for (const auto& it : trace.iterations) {
    os << it.iteration << "," << it.report.total << "," << it.report.render << ","
       << it.report.landmark << "," << it.report.regularization << "," << it.report.pixel << ","
       << it.report.depth << "," << it.report.epipolar << "," << it.lambda << "," << it.step_norm
       << "," << (it.accepted ? 1 : 0) << "," << it.rejected_proposals << ","
       << hash_hex(it.param_hash) << "\n";
  }
  return os.str();
}

}  // namespace mvface
