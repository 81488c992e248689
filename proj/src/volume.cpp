#include "coronary/volume.hpp"

#include <cmath>
#include <string>

#include "coronary/errors.hpp"

namespace coronary {

Volume3D::Volume3D(Dims dims, Vec3 spacing, Vec3 origin, float fill)
    : dims_(dims), spacing_(spacing), origin_(origin) {
  validate();
  voxels_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], fill);
}

Volume3D::Volume3D(Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> voxels)
    : dims_(dims), spacing_(spacing), origin_(origin), voxels_(std::move(voxels)) {
  validate();
  const auto expected = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  if (voxels_.size() != expected) {
    throw DataError("volume voxel count " + std::to_string(voxels_.size()) +
                    " does not match dims product " + std::to_string(expected));
  }
}

void Volume3D::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims_[a] < 1) throw DataError("volume dims must be >= 1 per axis");
    if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a])) {
      throw DataError("volume spacing must be > 0 per axis");
    }
  }
}

double trilinear_sample(const Volume3D& vol, const Vec3& p, double pad) {
  const Vec3 u = vol.continuous_index(p);
  const double fx = std::floor(u.x());
  const double fy = std::floor(u.y());
  const double fz = std::floor(u.z());
  // Far outside: avoid int overflow, every corner is padding anyway.
  const auto& d = vol.dims();
  if (fx < -2 || fy < -2 || fz < -2 || fx > d[0] + 1 || fy > d[1] + 1 || fz > d[2] + 1) {
    return pad;
  }
  const int i0 = static_cast<int>(fx);
  const int j0 = static_cast<int>(fy);
  const int k0 = static_cast<int>(fz);
  const double tx = u.x() - fx;
  const double ty = u.y() - fy;
  const double tz = u.z() - fz;

  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int di = c & 1;
    const int dj = (c >> 1) & 1;
    const int dk = (c >> 2) & 1;
    const double w = (di ? tx : 1.0 - tx) * (dj ? ty : 1.0 - ty) * (dk ? tz : 1.0 - tz);
    if (w == 0.0) continue;
    const int i = i0 + di;
    const int j = j0 + dj;
    const int k = k0 + dk;
    acc += w * (vol.contains(i, j, k) ? static_cast<double>(vol.at(i, j, k)) : pad);
  }
  return acc;
}

}  // namespace coronary
