#include "mvface/io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace mvface {

namespace {

void write_pfm_impl(const std::filesystem::path& path, const double* data, int width, int height,
                    int channels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << (channels == 3 ? "PF" : "Pf") << "\n" << width << " " << height << "\n-1.0\n";
  std::vector<float> row(static_cast<size_t>(width) * channels);
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        row[static_cast<size_t>(x) * channels + c] =
            static_cast<float>(data[(static_cast<size_t>(y) * width + x) * channels + c]);
    f.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
  }
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void read_pfm_impl(const std::filesystem::path& path, std::vector<double>& data, int& width,
                   int& height, int expected_channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string magic;
  double scale = 0;
  f >> magic >> width >> height >> scale;
  f.get();  // single whitespace after the scale line
  const int channels = magic == "PF" ? 3 : (magic == "Pf" ? 1 : 0);
  if (channels == 0 || width <= 0 || height <= 0)
    throw std::runtime_error("not a PFM file: " + path.string());
  if (channels != expected_channels)
    throw std::runtime_error("unexpected PFM channel count: " + path.string());
  if (scale >= 0) throw std::runtime_error("big-endian PFM not supported: " + path.string());
  data.resize(static_cast<size_t>(width) * height * channels);
  std::vector<float> row(static_cast<size_t>(width) * channels);
  for (int y = height - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!f) throw std::runtime_error("truncated PFM: " + path.string());
    for (size_t i = 0; i < row.size(); ++i)
      data[static_cast<size_t>(y) * width * channels + i] = row[i];
  }
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const ImageRGB& image) {
  write_pfm_impl(path, image.data.data(), image.width, image.height, 3);
}

void write_pfm(const std::filesystem::path& path, const ImageGray& image) {
  write_pfm_impl(path, image.data.data(), image.width, image.height, 1);
}

ImageRGB read_pfm_rgb(const std::filesystem::path& path) {
  ImageRGB im;
  read_pfm_impl(path, im.data, im.width, im.height, 3);
  return im;
}

ImageGray read_pfm_gray(const std::filesystem::path& path) {
  ImageGray im;
  read_pfm_impl(path, im.data, im.width, im.height, 1);
  return im;
}

namespace {

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

void write_png_impl(const std::filesystem::path& path, const std::vector<uint8_t>& bytes,
                    int width, int height, int color_type) {
  PngWriter w;
  w.fp = std::fopen(path.string().c_str(), "wb");
  if (!w.fp) throw std::runtime_error("cannot open for writing: " + path.string());
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw std::runtime_error("png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("png write failed: " + path.string());
  png_init_io(w.png, w.fp);
  png_set_IHDR(w.png, w.info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  const int stride = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  for (int y = 0; y < height; ++y)
    png_write_row(w.png, const_cast<png_bytep>(bytes.data() + static_cast<size_t>(y) * width * stride));
  png_write_end(w.png, nullptr);
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageRGB& image) {
  std::vector<uint8_t> bytes(image.data.size());
  for (size_t i = 0; i < image.data.size(); ++i) {
    const double v = std::clamp(image.data[i], 0.0, 1.0);
    bytes[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  write_png_impl(path, bytes, image.width, image.height, PNG_COLOR_TYPE_RGB);
}

void write_png_mask(const std::filesystem::path& path, const std::vector<uint8_t>& mask, int width,
                    int height) {
  std::vector<uint8_t> bytes(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_png_impl(path, bytes, width, height, PNG_COLOR_TYPE_GRAY);
}

namespace {

constexpr uint32_t kModelMagic = 0x4d46564d;  // "MVFM"
constexpr uint32_t kModelVersion = 1;

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

void put_f32_array(std::ostream& os, const double* data, size_t n) {
  std::vector<float> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), n * sizeof(float));
}

void get_f32_array(std::istream& is, double* data, size_t n) {
  std::vector<float> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()), n * sizeof(float));
  for (size_t i = 0; i < n; ++i) data[i] = buf[i];
}

}  // namespace

void save_model(const std::filesystem::path& path, const MorphableModel& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  const uint32_t v = model.vertex_count();
  put_u32(f, kModelMagic);
  put_u32(f, kModelVersion);
  put_u32(f, v);
  put_u32(f, model.n_id());
  put_u32(f, model.n_exp());
  put_u32(f, model.n_alb());
  put_u32(f, model.landmark_count());
  put_u32(f, static_cast<uint32_t>(model.triangles.size()));
  put_f32_array(f, model.mean_shape.data(), model.mean_shape.size());
  put_f32_array(f, model.mean_albedo.data(), model.mean_albedo.size());
  put_f32_array(f, model.basis_id.data(), model.basis_id.size());
  put_f32_array(f, model.basis_exp.data(), model.basis_exp.size());
  put_f32_array(f, model.basis_albedo.data(), model.basis_albedo.size());
  put_f32_array(f, model.landmark_confidence.data(), model.landmark_confidence.size());
  f.write(reinterpret_cast<const char*>(model.landmark_indices.data()),
          model.landmark_indices.size() * sizeof(uint32_t));
  f.write(reinterpret_cast<const char*>(model.triangles.data()),
          model.triangles.size() * sizeof(std::array<uint32_t, 3>));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

MorphableModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  if (get_u32(f) != kModelMagic) throw std::runtime_error("not a model container: " + path.string());
  if (get_u32(f) != kModelVersion) throw std::runtime_error("unsupported model version");
  const uint32_t v = get_u32(f), n_id = get_u32(f), n_exp = get_u32(f), n_alb = get_u32(f),
                 l = get_u32(f), t = get_u32(f);
  MorphableModel m;
  m.mean_shape.resize(3 * v);
  m.mean_albedo.resize(3 * v);
  m.basis_id.resize(3 * v, n_id);
  m.basis_exp.resize(3 * v, n_exp);
  m.basis_albedo.resize(3 * v, n_alb);
  m.landmark_confidence.resize(l);
  get_f32_array(f, m.mean_shape.data(), m.mean_shape.size());
  get_f32_array(f, m.mean_albedo.data(), m.mean_albedo.size());
  get_f32_array(f, m.basis_id.data(), m.basis_id.size());
  get_f32_array(f, m.basis_exp.data(), m.basis_exp.size());
  get_f32_array(f, m.basis_albedo.data(), m.basis_albedo.size());
  get_f32_array(f, m.landmark_confidence.data(), m.landmark_confidence.size());
  m.landmark_indices.resize(l);
  f.read(reinterpret_cast<char*>(m.landmark_indices.data()), l * sizeof(uint32_t));
  m.triangles.resize(t);
  f.read(reinterpret_cast<char*>(m.triangles.data()), t * sizeof(std::array<uint32_t, 3>));
  if (!f) throw std::runtime_error("truncated model container: " + path.string());
  m.validate();
  return m;
}

void save_obj(const std::filesystem::path& path, const MorphableModel& model) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.precision(9);
  for (int i = 0; i < model.vertex_count(); ++i)
    f << "v " << model.mean_shape[3 * i] << " " << model.mean_shape[3 * i + 1] << " "
      << model.mean_shape[3 * i + 2] << "\n";
  for (const auto& t : model.triangles)
    f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

MorphableModel load_obj(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::vector<double> verts;
  std::vector<std::array<uint32_t, 3>> tris;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      ss >> x >> y >> z;
      verts.insert(verts.end(), {x, y, z});
    } else if (tag == "f") {
      std::array<uint32_t, 3> t{};
      for (int i = 0; i < 3; ++i) {
        std::string tok;
        ss >> tok;
        t[i] = static_cast<uint32_t>(std::stoul(tok.substr(0, tok.find('/')))) - 1;
      }
      tris.push_back(t);
    }
  }
  MorphableModel m;
  m.mean_shape = Eigen::Map<const Eigen::VectorXd>(verts.data(), verts.size());
  m.mean_albedo = Eigen::VectorXd::Constant(verts.size(), 0.5);
  m.basis_id.resize(verts.size(), 0);
  m.basis_exp.resize(verts.size(), 0);
  m.basis_albedo.resize(verts.size(), 0);
  m.triangles = std::move(tris);
  m.landmark_confidence.resize(0);
  m.validate();
  return m;
}

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

}  // namespace

std::string params_to_json(const ParameterVector& params) {
  json j;
  j["alpha"] = vec_to_json(params.alpha);
  j["beta"] = vec_to_json(params.beta);
  j["gamma"] = vec_to_json(params.gamma);
  j["views"] = json::array();
  for (const auto& v : params.views) {
    double yaw, pitch, roll;
    rotation_to_euler_deg(v.rotation.toRotationMatrix(), yaw, pitch, roll);
    json jv;
    jv["rotation_euler_deg"] = {{"yaw", yaw}, {"pitch", pitch}, {"roll", roll}};
    jv["translation"] = {v.translation.x(), v.translation.y(), v.translation.z()};
    json sh = json::array();
    for (int i = 0; i < 27; ++i) sh.push_back(v.sh[i]);
    jv["sh"] = sh;
    j["views"].push_back(jv);
  }
  return j.dump(2);
}

ParameterVector params_from_json(const std::string& text) {
  const json j = json::parse(text);
  ParameterVector p;
  p.alpha = vec_from_json(j.at("alpha"));
  p.beta = vec_from_json(j.at("beta"));
  p.gamma = vec_from_json(j.at("gamma"));
  for (const auto& jv : j.at("views")) {
    ViewParams v;
    const auto& e = jv.at("rotation_euler_deg");
    const Mat3 r = euler_deg_to_rotation(e.at("yaw").get<double>(), e.at("pitch").get<double>(),
                                         e.at("roll").get<double>());
    v.rotation = Quat(r).normalized();
    const auto& t = jv.at("translation");
    v.translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
    const auto& sh = jv.at("sh");
    for (int i = 0; i < 27; ++i) v.sh[i] = sh[i].get<double>();
    p.views.push_back(v);
  }
  return p;
}

std::string weights_to_json(const LossWeights& w) {
  json j;
  j["render"] = w.render;
  j["landmark"] = w.landmark;
  j["identity"] = w.identity;
  j["regularization"] = w.regularization;
  j["reg_identity"] = w.reg_identity;
  j["reg_expression"] = w.reg_expression;
  j["reg_albedo"] = w.reg_albedo;
  j["two_d"] = w.two_d;
  j["multiview"] = w.multiview;
  j["pixel"] = w.pixel;
  j["depth"] = w.depth;
  j["epipolar"] = w.epipolar;
  return j.dump(2);
}

LossWeights weights_from_json(const std::string& text) {
  const json j = json::parse(text);
  LossWeights w;
  auto get = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  get("render", w.render);
  get("landmark", w.landmark);
  get("identity", w.identity);
  get("regularization", w.regularization);
  get("reg_identity", w.reg_identity);
  get("reg_expression", w.reg_expression);
  get("reg_albedo", w.reg_albedo);
  get("two_d", w.two_d);
  get("multiview", w.multiview);
  get("pixel", w.pixel);
  get("depth", w.depth);
  get("epipolar", w.epipolar);
  w.validate();
  return w;
}

std::string report_to_json(const LossReport& rep, const LossWeights& weights) {
  json j;
  j["render"] = rep.render;
  j["landmark"] = rep.landmark;
  j["identity"] = rep.identity;
  j["regularization"] = rep.regularization;
  j["two_d"] = rep.two_d;
  j["pixel"] = rep.pixel;
  j["depth"] = rep.depth;
  j["epipolar"] = rep.epipolar;
  j["pixel_active"] = rep.pixel_active;
  j["depth_active"] = rep.depth_active;
  j["epipolar_active"] = rep.epipolar_active;
  j["identity_active"] = rep.identity_active;
  j["total"] = rep.total;
  j["weights"] = json::parse(weights_to_json(weights));
  j["views"] = json::array();
  for (const auto& v : rep.views) {
    j["views"].push_back({{"render", v.render},
                          {"landmark", v.landmark},
                          {"identity", v.identity},
                          {"mask_count", v.mask_count}});
  }
  j["pairs"] = json::array();
  for (const auto& p : rep.pairs) {
    j["pairs"].push_back({{"target", p.target},
                          {"source", p.source},
                          {"pixel", p.pixel},
                          {"depth", p.depth},
                          {"epipolar", p.epipolar},
                          {"pixel_valid", p.pixel_valid},
                          {"depth_valid", p.depth_valid},
                          {"epipolar_valid", p.epipolar_valid},
                          {"covisible_count", p.covisible_count},
                          {"effective_count", p.effective_count},
                          {"note", p.note}});
  }
  return j.dump(2);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace mvface
