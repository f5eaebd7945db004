#pragma once

#include <filesystem>
#include <string>

#include "mvface/image.hpp"
#include "mvface/losses.hpp"
#include "mvface/morphable_model.hpp"
#include "mvface/parameters.hpp"
#include "mvface/scene.hpp"

namespace mvface {

/// Float images are exchanged as PFM (32-bit little-endian floats, rows
/// bottom-up, scale -1.0). Depth maps use the single-channel variant with
/// empty pixels stored as -1.0.
void write_pfm(const std::filesystem::path& path, const ImageRGB& image);
void write_pfm(const std::filesystem::path& path, const ImageGray& image);
ImageRGB read_pfm_rgb(const std::filesystem::path& path);
ImageGray read_pfm_gray(const std::filesystem::path& path);

/// 8-bit PNGs for viewing; values are clamped to [0,1] and scaled to 0..255.
void write_png(const std::filesystem::path& path, const ImageRGB& image);
/// Grayscale PNG; nonzero mask entries become 255.
void write_png_mask(const std::filesystem::path& path, const std::vector<uint8_t>& mask, int width,
                    int height);

/// Binary model container: header (magic "MVFM", version, V, n_id, n_exp,
/// n_alb, L, T as little-endian uint32), then little-endian float32 arrays
/// (mean shape, mean albedo, bases in column-major order, landmark
/// confidences) and uint32 arrays (landmark indices, triangles).
void save_model(const std::filesystem::path& path, const MorphableModel& model);
MorphableModel load_model(const std::filesystem::path& path);

/// OBJ export/import of the mean mesh only (no bases, no landmarks).
void save_obj(const std::filesystem::path& path, const MorphableModel& model);
MorphableModel load_obj(const std::filesystem::path& path);

std::string params_to_json(const ParameterVector& params);
ParameterVector params_from_json(const std::string& text);

std::string weights_to_json(const LossWeights& weights);
/// Missing fields keep their defaults. Propagates nlohmann parse errors,
/// whose message carries the byte offset of the problem.
LossWeights weights_from_json(const std::string& text);

std::string report_to_json(const LossReport& report, const LossWeights& weights);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace mvface
