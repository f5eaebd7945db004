#include "mvface/synth_data.hpp"

#include <cmath>
#include <json.hpp>

#include "mvface/io.hpp"
#include "mvface/losses.hpp"
#include "mvface/rasterizer.hpp"
#include "mvface/util.hpp"

namespace mvface {

namespace {

constexpr double kCapAngleRad = 70.0 * M_PI / 180.0;
constexpr double kFaceScale = 0.01;  // nominal face radius, model units

Vec3 random_unit(Rng& rng) {
  for (;;) {
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

void quantize_f32(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i]);
}
void quantize_f32(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
}
void quantize_f32(ImageRGB& im) {
  for (auto& x : im.data) x = static_cast<float>(x);
}
void quantize_f32(ImageGray& im) {
  for (auto& x : im.data) x = static_cast<float>(x);
}

/// Smooth low-frequency scalar field over normalized positions.
struct SmoothField {
  static constexpr int kWaves = 3;
  double amp[kWaves];
  Vec3 freq[kWaves];
  double phase[kWaves];

  static SmoothField draw(Rng& rng) {
    SmoothField f;
    for (int m = 0; m < kWaves; ++m) {
      f.amp[m] = rng.normal();
      f.freq[m] = Vec3(rng.uniform_range(-2.5, 2.5), rng.uniform_range(-2.5, 2.5),
                       rng.uniform_range(-2.5, 2.5));
      f.phase[m] = rng.uniform_range(0, 2 * M_PI);
    }
    return f;
  }
  double eval(const Vec3& p_normalized) const {
    double s = 0;
    for (int m = 0; m < kWaves; ++m) s += amp[m] * std::sin(freq[m].dot(p_normalized) + phase[m]);
    return s;
  }
};

/// Draws a 3V deformation field, one smooth component per axis, optionally
/// weighted toward the lower face (expression-like).
Eigen::VectorXd draw_deformation(Rng& rng, const Eigen::VectorXd& mean, bool lower_face) {
  const int v = static_cast<int>(mean.size() / 3);
  SmoothField fields[3] = {SmoothField::draw(rng), SmoothField::draw(rng), SmoothField::draw(rng)};
  Eigen::VectorXd col(3 * v);
  for (int i = 0; i < v; ++i) {
    const Vec3 p = mean.segment<3>(3 * i) / kFaceScale;
    double w = 1.0;
    if (lower_face) w = std::exp(-std::pow((p.y() + 0.55) / 0.5, 2.0)) + 0.05;
    for (int a = 0; a < 3; ++a) col[3 * i + a] = w * fields[a].eval(p);
  }
  return col;
}

/// Two-pass modified Gram-Schmidt against previous columns, then rescale so
/// the per-vertex RMS displacement equals `rms`.
void orthogonalize_column(Eigen::MatrixXd& basis, int col, const Eigen::VectorXd& raw, double rms,
                          const Eigen::MatrixXd* also_against = nullptr) {
  Eigen::VectorXd c = raw;
  for (int pass = 0; pass < 2; ++pass) {
    if (also_against)
      for (int j = 0; j < also_against->cols(); ++j) {
        const auto prev = also_against->col(j);
        c -= prev * (prev.dot(c) / prev.squaredNorm());
      }
    for (int j = 0; j < col; ++j) {
      const auto prev = basis.col(j);
      c -= prev * (prev.dot(c) / prev.squaredNorm());
    }
  }
  const int v = static_cast<int>(raw.size() / 3);
  basis.col(col) = c * (rms * std::sqrt(static_cast<double>(v)) / c.norm());
}

}  // namespace

MorphableModel generate_model(uint64_t seed, int vertex_count, int n_id, int n_exp, int n_alb) {
  if (vertex_count < 12) throw std::invalid_argument("generate_model: need at least 12 vertices");
  Rng rng(seed);

  // ring/segment grid for the cap; apex at the pole
  const int segments = std::max(8, static_cast<int>(std::lround(std::sqrt(vertex_count - 1))));
  const int rings = std::max(3, (vertex_count - 1) / segments);
  const int v = 1 + rings * segments;

  const Vec3 semi_axes(0.0100, 0.0118, 0.0085);
  const double nose_amp = 0.32, nose_width = 0.26;       // radians of polar angle
  const Vec3 chin_dir(0.0, -std::sin(0.6), std::cos(0.6));  // second bump breaks symmetry
  const double chin_amp = 0.10, chin_width = 0.22;

  MorphableModel m;
  m.mean_shape.resize(3 * v);
  auto place = [&](int idx, double polar, double azimuth) {
    const Vec3 dir(std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth),
                   std::cos(polar));
    double r = 1.0 + nose_amp * std::exp(-std::pow(polar / nose_width, 2.0));
    const double chin_ang = std::acos(std::clamp(dir.dot(chin_dir), -1.0, 1.0));
    r += chin_amp * std::exp(-std::pow(chin_ang / chin_width, 2.0));
    m.mean_shape.segment<3>(3 * idx) = (r * dir.array() * semi_axes.array()).matrix();
  };
  place(0, 0.0, 0.0);
  for (int ri = 1; ri <= rings; ++ri)
    for (int si = 0; si < segments; ++si)
      place(1 + (ri - 1) * segments + si, kCapAngleRad * ri / rings, 2 * M_PI * si / segments);

  // winding: counter-clockwise seen from outside (+z side)
  auto ring_vertex = [&](int ri, int si) { return 1 + (ri - 1) * segments + ((si % segments + segments) % segments); };
  for (int si = 0; si < segments; ++si)
    m.triangles.push_back({0u, static_cast<uint32_t>(ring_vertex(1, si)),
                           static_cast<uint32_t>(ring_vertex(1, si + 1))});
  for (int ri = 1; ri < rings; ++ri) {
    for (int si = 0; si < segments; ++si) {
      const uint32_t a = ring_vertex(ri, si), b = ring_vertex(ri, si + 1);
      const uint32_t c = ring_vertex(ri + 1, si), d = ring_vertex(ri + 1, si + 1);
      m.triangles.push_back({a, c, d});
      m.triangles.push_back({a, d, b});
    }
  }

  // skin-like mean albedo with smooth variation
  m.mean_albedo.resize(3 * v);
  SmoothField albedo_fields[3] = {SmoothField::draw(rng), SmoothField::draw(rng),
                                  SmoothField::draw(rng)};
  const Vec3 base_albedo(0.78, 0.62, 0.52);
  for (int i = 0; i < v; ++i) {
    const Vec3 p = m.mean_shape.segment<3>(3 * i) / kFaceScale;
    for (int c = 0; c < 3; ++c)
      m.mean_albedo[3 * i + c] =
          std::clamp(base_albedo[c] + 0.05 * albedo_fields[c].eval(p), 0.05, 0.95);
  }

  // bases: identity and expression share the shape space and are
  // orthogonalized jointly; expression columns are weighted to the lower face
  m.basis_id.resize(3 * v, n_id);
  m.basis_exp.resize(3 * v, n_exp);
  m.basis_albedo.resize(3 * v, n_alb);
  const double decay = 0.9;
  for (int k = 0; k < n_id; ++k)
    orthogonalize_column(m.basis_id, k, draw_deformation(rng, m.mean_shape, false),
                         0.05 * kFaceScale * std::pow(decay, k));
  for (int k = 0; k < n_exp; ++k)
    orthogonalize_column(m.basis_exp, k, draw_deformation(rng, m.mean_shape, true),
                         0.035 * kFaceScale * std::pow(decay, k), &m.basis_id);
  for (int k = 0; k < n_alb; ++k)
    orthogonalize_column(m.basis_albedo, k, draw_deformation(rng, m.mean_shape, false),
                         0.05 * std::pow(decay, k));

  // landmarks: apex and an inner ring (high confidence), samples of the
  // boundary ring (confidence 1)
  const int inner_ring = std::max(1, rings / 6);
  m.landmark_indices.push_back(0);
  for (int i = 0; i < 6; ++i)
    m.landmark_indices.push_back(ring_vertex(inner_ring, i * segments / 6));
  for (int i = 0; i < 20; ++i)
    m.landmark_indices.push_back(ring_vertex(rings, i * segments / 20));
  m.landmark_confidence.resize(27);
  for (int i = 0; i < 27; ++i) m.landmark_confidence[i] = i < 7 ? 10.0 : 1.0;

  quantize_f32(m.mean_shape);
  quantize_f32(m.mean_albedo);
  quantize_f32(m.basis_id);
  quantize_f32(m.basis_exp);
  quantize_f32(m.basis_albedo);
  m.validate();
  return m;
}

double mean_face_depth(const MorphableModel& model, const ParameterVector& params) {
  const Eigen::VectorXd verts = synthesize_shape(model, params.alpha, params.beta);
  double sum = 0.0;
  for (const auto& vp : params.views) {
    const PoseSE3 pose = vp.pose();
    double s = 0.0;
    for (int i = 0; i < model.vertex_count(); ++i) s += pose.apply(model.vertex(verts, i)).z();
    sum += s / model.vertex_count();
  }
  return sum / params.view_count();
}

Scene generate_scene(const MorphableModel& model, const RigSpec& spec, double coeff_scale) {
  if (spec.n_views < 1) throw std::invalid_argument("generate_scene: need at least one view");
  Rng rng(spec.seed * 0x9e3779b97f4a7c15ull + 1);

  Scene scene;
  scene.model = model;
  scene.spec = spec;

  ParameterVector& gt = scene.gt_params;
  auto draw_clipped = [&](int n) {
    Eigen::VectorXd c(n);
    for (int i = 0; i < n; ++i)
      c[i] = std::clamp(coeff_scale * rng.normal(), -2.0 * coeff_scale, 2.0 * coeff_scale);
    return c;
  };
  gt.alpha = draw_clipped(model.n_id());
  gt.beta = draw_clipped(model.n_exp());
  gt.gamma = draw_clipped(model.n_alb());

  // one lighting environment shared by all views (normals are shaded in the
  // world frame, so equal coefficients mean photometrically consistent views)
  Eigen::Matrix<double, 27, 1> sh = Eigen::Matrix<double, 27, 1>::Zero();
  double band_dir[8];
  for (int b = 0; b < 8; ++b) band_dir[b] = rng.normal();
  for (int c = 0; c < 3; ++c) {
    const double theta0 = 2.0 * std::sqrt(M_PI) * rng.uniform_range(0.78, 0.92);
    const double tint = 1.0 + 0.15 * rng.normal();
    sh[9 * c] = theta0;
    for (int b = 1; b < 9; ++b)
      sh[9 * c + b] = theta0 * tint * band_dir[b - 1] * (b <= 3 ? 0.16 : 0.05);
  }

  const Eigen::VectorXd verts = synthesize_shape(model, gt.alpha, gt.beta);
  const Eigen::VectorXd albedo = synthesize_albedo(model, gt.gamma);
  const Eigen::VectorXd normals = vertex_normals(verts, model.triangles).normals;
  const CameraIntrinsics intr = spec.intrinsics();
  const auto yaws = spec.yaw_offsets_deg();

  for (int attempt = 0;; ++attempt) {
    const double distance = spec.distance * std::pow(1.1, attempt);
    gt.views.clear();
    scene.rig.views.clear();
    scene.gt_depths.clear();

    bool ok = true;
    for (int vi = 0; vi < spec.n_views && ok; ++vi) {
      const double yaw = yaws[vi] * M_PI / 180.0;
      const Vec3 eye(distance * std::sin(yaw), 0.0, distance * std::cos(yaw));
      const PoseSE3 pose = look_at(eye, Vec3::Zero());

      ViewParams vp;
      vp.rotation = Quat(pose.rotation).normalized();
      vp.translation = pose.translation;
      vp.sh = sh;
      gt.views.push_back(vp);

      RenderOutputs render =
          render_view(verts, model.triangles, normals, albedo, sh, pose, intr);
      bool any = false;
      for (int32_t t : render.fragments.triangle_id)
        if (t != kEmptyFragment) {
          any = true;
          break;
        }
      if (!any) {
        ok = false;
        break;
      }

      ViewObservation obs;
      obs.intrinsics = intr;
      obs.image = render.image;
      quantize_f32(obs.image);
      obs.landmarks.resize(model.landmark_count(), 2);
      for (int i = 0; i < model.landmark_count(); ++i) {
        const auto p = try_project(model.vertex(verts, model.landmark_indices[i]), pose, intr);
        if (!p) {
          ok = false;
          break;
        }
        obs.landmarks(i, 0) = p->u;
        obs.landmarks(i, 1) = p->v;
      }
      if (!ok) break;
      if (spec.landmark_noise_px > 0)
        for (int i = 0; i < model.landmark_count(); ++i) {
          obs.landmarks(i, 0) += spec.landmark_noise_px * rng.normal();
          obs.landmarks(i, 1) += spec.landmark_noise_px * rng.normal();
        }
      for (int i = 0; i < model.landmark_count() && ok; ++i)
        ok = obs.landmarks(i, 0) >= 0 && obs.landmarks(i, 0) <= intr.width - 1 &&
             obs.landmarks(i, 1) >= 0 && obs.landmarks(i, 1) <= intr.height - 1 &&
             std::isfinite(obs.landmarks(i, 0)) && std::isfinite(obs.landmarks(i, 1));

      ImageGray depth = render.depth;
      quantize_f32(depth);
      scene.rig.views.push_back(std::move(obs));
      scene.gt_depths.push_back(std::move(depth));
    }
    if (ok) break;
    if (attempt >= 4)
      throw std::runtime_error("generate_scene: could not realize a rig with visible views");
  }

  // self-check: ground-truth residuals must sit below the generator floors
  const LossReport rep = total_loss(model, scene.rig, gt, LossWeights{});
  if (spec.landmark_noise_px == 0.0) {
    if (rep.landmark >= 1e-9) throw std::runtime_error("generate_scene: landmark floor violated");
    if (rep.epipolar_active && rep.epipolar >= 1e-6)
      throw std::runtime_error("generate_scene: epipolar floor violated");
  }
  if (rep.render >= 1e-6) throw std::runtime_error("generate_scene: render floor violated");
  if (rep.pixel_active && rep.pixel >= 0.02)
    throw std::runtime_error("generate_scene: pixel consistency floor violated");
  if (rep.depth_active && rep.depth >= 1e-2)
    throw std::runtime_error("generate_scene: depth consistency floor violated");
  return scene;
}

ParameterVector perturb(const ParameterVector& params, double rotation_deg,
                        double translation_frac, double coeff_sigma, uint64_t seed) {
  Rng rng(seed * 0x2545f4914f6cdd1dull + 3);
  ParameterVector out = params;
  const double angle = rotation_deg * M_PI / 180.0;
  for (auto& v : out.views) {
    const Vec3 axis = random_unit(rng);
    const Vec3 tdir = random_unit(rng);
    if (angle != 0.0) {
      const Quat dq(Eigen::AngleAxisd(angle, axis));
      v.rotation = (dq * v.rotation).normalized();
    }
    v.translation += translation_frac * params.views[0].translation.norm() * tdir;
  }
  auto add_noise = [&](Eigen::VectorXd& c) {
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] += coeff_sigma * rng.normal();
  };
  add_noise(out.alpha);
  add_noise(out.beta);
  add_noise(out.gamma);
  return out;
}

using nlohmann::json;

std::string rig_spec_to_json(const RigSpec& spec) {
  json j;
  j["views"] = spec.n_views;
  j["yaw_spacing_deg"] = spec.yaw_spacing_deg;
  j["image_size"] = spec.image_size;
  j["focal_px"] = spec.focal_px;
  j["distance"] = spec.distance;
  j["seed"] = spec.seed;
  j["landmark_noise_px"] = spec.landmark_noise_px;
  return j.dump(2);
}

RigSpec rig_spec_from_json(const std::string& text) {
  const json j = json::parse(text);
  RigSpec s;
  s.n_views = j.at("views").get<int>();
  s.yaw_spacing_deg = j.at("yaw_spacing_deg").get<double>();
  s.image_size = j.at("image_size").get<int>();
  s.focal_px = j.at("focal_px").get<double>();
  s.distance = j.at("distance").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  s.landmark_noise_px = j.at("landmark_noise_px").get<double>();
  return s;
}

void save_scene(const std::filesystem::path& dir, const Scene& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "views");
  save_model(dir / "model.mvm", scene.model);
  save_obj(dir / "mean.obj", scene.model);
  write_text_file(dir / "spec.json", rig_spec_to_json(scene.spec));
  write_text_file(dir / "gt_params.json", params_to_json(scene.gt_params));

  json lm;
  lm["views"] = json::array();
  for (const auto& view : scene.rig.views) {
    json pts = json::array();
    for (Eigen::Index i = 0; i < view.landmarks.rows(); ++i)
      pts.push_back({view.landmarks(i, 0), view.landmarks(i, 1)});
    lm["views"].push_back(pts);
  }
  write_text_file(dir / "landmarks.json", lm.dump(2));

  char name[64];
  for (int vi = 0; vi < scene.rig.view_count(); ++vi) {
    std::snprintf(name, sizeof(name), "view_%02d", vi);
    const fs::path base = dir / "views" / name;
    write_png(fs::path(base.string() + ".png"), scene.rig.views[vi].image);
    write_pfm(fs::path(base.string() + ".pfm"), scene.rig.views[vi].image);
    write_pfm(fs::path(base.string() + "_depth.pfm"), scene.gt_depths[vi]);
  }
}

Scene load_scene(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Scene scene;
  scene.model = load_model(dir / "model.mvm");
  scene.spec = rig_spec_from_json(read_text_file(dir / "spec.json"));
  scene.gt_params = params_from_json(read_text_file(dir / "gt_params.json"));

  const json lm = json::parse(read_text_file(dir / "landmarks.json"));
  const auto& views = lm.at("views");
  const CameraIntrinsics intr = scene.spec.intrinsics();
  char name[64];
  for (size_t vi = 0; vi < views.size(); ++vi) {
    std::snprintf(name, sizeof(name), "view_%02zu", vi);
    const fs::path base = dir / "views" / name;
    ViewObservation obs;
    obs.intrinsics = intr;
    obs.image = read_pfm_rgb(fs::path(base.string() + ".pfm"));
    const auto& pts = views[vi];
    obs.landmarks.resize(pts.size(), 2);
    for (size_t i = 0; i < pts.size(); ++i) {
      obs.landmarks(i, 0) = pts[i][0].get<double>();
      obs.landmarks(i, 1) = pts[i][1].get<double>();
    }
    scene.rig.views.push_back(std::move(obs));
    scene.gt_depths.push_back(read_pfm_gray(fs::path(base.string() + "_depth.pfm")));
  }
  return scene;
}

}  // namespace mvface
