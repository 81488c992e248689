#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace coronary {

using Vec3 = Eigen::Vector3d;

/// Scalar 3D image on a regular grid. Voxel (i, j, k) sits at
/// origin + (i*sx, j*sy, k*sz); storage is x-fastest, z-slowest.
class Volume3D {
 public:
  using Dims = std::array<int, 3>;

  Volume3D(Dims dims, Vec3 spacing, Vec3 origin, float fill = 0.0f);
  Volume3D(Dims dims, Vec3 spacing, Vec3 origin, std::vector<float> voxels);

  const Dims& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::size_t size() const { return voxels_.size(); }

  std::span<const float> voxels() const { return voxels_; }
  std::span<float> voxels() { return voxels_; }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
  }
  float at(int i, int j, int k) const { return voxels_[index(i, j, k)]; }
  float& at(int i, int j, int k) { return voxels_[index(i, j, k)]; }

  Vec3 world(int i, int j, int k) const {
    return origin_ + spacing_.cwiseProduct(Vec3(i, j, k));
  }
  /// Continuous voxel coordinate of a world position.
  Vec3 continuous_index(const Vec3& p) const {
    return (p - origin_).cwiseQuotient(spacing_);
  }

 private:
  void validate() const;

  Dims dims_;
  Vec3 spacing_;
  Vec3 origin_;
  std::vector<float> voxels_;
};

/// Trilinear interpolation of the 8 voxel centers around p. Corners that fall
/// outside the grid contribute `pad`.
double trilinear_sample(const Volume3D& vol, const Vec3& p, double pad);

}  // namespace coronary
