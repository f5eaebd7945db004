#pragma once

#include <filesystem>

#include "mvface/scene.hpp"

namespace mvface {

/// Procedural morphable model: the mean shape is an open ellipsoidal cap with
/// a nose-like protrusion (so oblique views self-occlude), bases are smooth
/// random deformation fields, orthogonalized and scaled by a decaying
/// spectrum. All arrays are rounded to float32 precision so that serializing
/// and reloading the model is bit-exact. Deterministic per seed.
///
/// The cap has one apex vertex plus rings of equal segment count, so the
/// realized vertex count is the largest 1 + rings*segments <= requested V.
/// Model units: the face spans about 0.02 units across and sits at the
/// origin with the nose pointing along +z.
MorphableModel generate_model(uint64_t seed, int vertex_count, int n_id = 16, int n_exp = 8,
                              int n_alb = 8);

/// Ground-truth scene: coefficients drawn from a clipped Gaussian, cameras on
/// a yaw arc looking at the origin, one shared lighting environment, observed
/// images rendered at the ground truth (quantized to float32, matching what a
/// reload from disk would produce) and landmark projections (optionally
/// perturbed by Gaussian pixel noise per spec.landmark_noise_px).
///
/// The generator self-checks: with noiseless landmarks the ground-truth
/// residuals must sit below fixed floors (landmark 1e-9, epipolar 1e-6,
/// render 1e-6, pixel 0.02, depth 0.01), otherwise it throws. Views that
/// render no pixels trigger a bounded retry with the camera pulled back.
Scene generate_scene(const MorphableModel& model, const RigSpec& spec, double coeff_scale);

/// Random perturbation for fit initialization: rotates each view by
/// `rotation_deg` about a random axis, offsets each translation by
/// `translation_frac` of the view's distance scale in a random direction, and
/// adds N(0, coeff_sigma^2) noise to all coefficients. Deterministic per seed.
ParameterVector perturb(const ParameterVector& params, double rotation_deg,
                        double translation_frac, double coeff_sigma, uint64_t seed);

/// Mean camera-space depth of the ground-truth face over all views.
double mean_face_depth(const MorphableModel& model, const ParameterVector& params);

/// Scene directory layout: model.mvm, mean.obj, spec.json, gt_params.json,
/// landmarks.json, views/view_NN.png|.pfm|_depth.pfm.
void save_scene(const std::filesystem::path& dir, const Scene& scene);
Scene load_scene(const std::filesystem::path& dir);

std::string rig_spec_to_json(const RigSpec& spec);
RigSpec rig_spec_from_json(const std::string& text);

}  // namespace mvface
