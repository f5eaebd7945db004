#include "mvface/parameters.hpp"

#include <cmath>
#include <stdexcept>

#include "mvface/util.hpp"

namespace mvface {

Eigen::VectorXd ParameterVector::pack() const {
  const int n = packed_size(static_cast<int>(alpha.size()), static_cast<int>(beta.size()),
                            static_cast<int>(gamma.size()), view_count());
  Eigen::VectorXd flat(n);
  int o = 0;
  flat.segment(o, alpha.size()) = alpha;
  o += static_cast<int>(alpha.size());
  flat.segment(o, beta.size()) = beta;
  o += static_cast<int>(beta.size());
  flat.segment(o, gamma.size()) = gamma;
  o += static_cast<int>(gamma.size());
  for (const auto& v : views) {
    flat[o++] = v.rotation.w();
    flat[o++] = v.rotation.x();
    flat[o++] = v.rotation.y();
    flat[o++] = v.rotation.z();
    flat.segment<3>(o) = v.translation;
    o += 3;
    flat.segment<27>(o) = v.sh;
    o += 27;
  }
  return flat;
}

ParameterVector ParameterVector::unpack(const Eigen::VectorXd& flat, int n_id, int n_exp,
                                        int n_alb, int n_views) {
  if (flat.size() != packed_size(n_id, n_exp, n_alb, n_views))
    throw std::invalid_argument("ParameterVector::unpack: size mismatch");
  ParameterVector p;
  int o = 0;
  p.alpha = flat.segment(o, n_id);
  o += n_id;
  p.beta = flat.segment(o, n_exp);
  o += n_exp;
  p.gamma = flat.segment(o, n_alb);
  o += n_alb;
  p.views.resize(n_views);
  for (auto& v : p.views) {
    v.rotation = Quat(flat[o], flat[o + 1], flat[o + 2], flat[o + 3]);
    o += 4;
    v.translation = flat.segment<3>(o);
    o += 3;
    v.sh = flat.segment<27>(o);
    o += 27;
  }
  return p;
}

void ParameterVector::validate() const {
  for (const auto& v : views)
    if (std::abs(v.rotation.norm() - 1.0) >= 1e-9)
      throw std::invalid_argument("ParameterVector: quaternion not unit norm");
}

uint64_t ParameterVector::hash() const {
  const Eigen::VectorXd flat = pack();
  return fnv1a64(flat.data(), sizeof(double) * flat.size());
}

}  // namespace mvface
