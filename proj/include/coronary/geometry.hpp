#pragma once

#include <vector>

#include "coronary/volume.hpp"

namespace coronary {

/// Isotropic MPR / centerline sampling step in mm.
inline constexpr double kMprStepMm = 0.3;
/// HU used for MPR samples that fall outside the source volume.
inline constexpr double kAirPadHu = -1024.0;

/// Ordered 3D polyline with cumulative arc length per point (mm).
class Centerline {
 public:
  /// Arc length computed from the chord lengths of `points`.
  explicit Centerline(std::vector<Vec3> points);
  /// Explicit arc parameterization; must be strictly increasing.
  Centerline(std::vector<Vec3> points, std::vector<double> arc);

  const std::vector<Vec3>& points() const { return points_; }
  const std::vector<double>& arc() const { return arc_; }
  std::size_t size() const { return points_.size(); }
  double length() const { return arc_.back() - arc_.front(); }

 private:
  std::vector<Vec3> points_;
  std::vector<double> arc_;
};

/// Per-point moving frame: tangent, normal, binormal with b = t x n.
struct Frame {
  Vec3 tangent;
  Vec3 normal;
  Vec3 binormal;
};
using FrameField = std::vector<Frame>;

/// Arc-length resampling at a uniform step by linear interpolation between raw
/// points. The trailing partial step is dropped. Throws DataError
/// "centerline too short" when the polyline is shorter than one step.
Centerline resample_centerline(const Centerline& raw, double step = kMprStepMm);

/// Rotation-minimizing frames by double reflection. The first normal is global
/// +x projected off the first tangent (+y when |t.x| > 0.99).
FrameField compute_rmf(const Centerline& c);

/// Straightened MPR: slice k is a cross x cross grid centred on point k and
/// spanned by (normal, binormal) at the centerline step. The MPR's own
/// coordinates are (u along normal, v along binormal, arc), with origin
/// (-h*step, -h*step, arc[0]) where h = (cross-1)/2.
Volume3D reconstruct_mpr(const Volume3D& vol, const Centerline& c, int cross = 45);

}  // namespace coronary
