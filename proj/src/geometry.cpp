#include "coronary/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coronary/errors.hpp"

namespace coronary {

namespace {

std::vector<double> chord_arc(const std::vector<Vec3>& pts) {
  std::vector<double> arc(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    arc[i] = arc[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  return arc;
}

}  // namespace

Centerline::Centerline(std::vector<Vec3> points)
    : Centerline(points, chord_arc(points)) {}

Centerline::Centerline(std::vector<Vec3> points, std::vector<double> arc)
    : points_(std::move(points)), arc_(std::move(arc)) {
  if (points_.size() < 2) throw DataError("centerline needs at least 2 points");
  if (arc_.size() != points_.size()) throw DataError("centerline arc/point count mismatch");
  for (std::size_t i = 1; i < arc_.size(); ++i) {
    if (!(arc_[i] > arc_[i - 1])) {
      throw DataError("centerline arc must be strictly increasing (point " +
                      std::to_string(i) + ")");
    }
  }
}

Centerline resample_centerline(const Centerline& raw, double step) {
  if (!(step > 0.0)) throw UsageError("resampling step must be positive");
  const auto& pts = raw.points();
  const auto& arc = raw.arc();
  const double total = raw.length();
  if (total < step) throw DataError("centerline too short");

  const auto n_steps = static_cast<std::size_t>(std::floor(total / step + 1e-9));
  std::vector<Vec3> out_pts;
  std::vector<double> out_arc;
  out_pts.reserve(n_steps + 1);
  out_arc.reserve(n_steps + 1);

  std::size_t seg = 0;
  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double s = arc.front() + static_cast<double>(k) * step;
    while (seg + 2 < pts.size() && arc[seg + 1] < s) ++seg;
    const double len = arc[seg + 1] - arc[seg];
    const double t = std::clamp((s - arc[seg]) / len, 0.0, 1.0);
    out_pts.push_back(pts[seg] + t * (pts[seg + 1] - pts[seg]));
    out_arc.push_back(static_cast<double>(k) * step);
  }
  return Centerline(std::move(out_pts), std::move(out_arc));
}

FrameField compute_rmf(const Centerline& c) {
  const auto& x = c.points();
  const std::size_t n = x.size();

  std::vector<Vec3> tangents(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = (i == 0)       ? x[1] - x[0]
                   : (i == n - 1) ? x[n - 1] - x[n - 2]
                                  : x[i + 1] - x[i - 1];
    tangents[i] = d.normalized();
  }

  FrameField frames(n);
  const Vec3& t0 = tangents[0];
  Vec3 seed = Vec3::UnitX();
  if (std::abs(seed.dot(t0)) > 0.99) seed = Vec3::UnitY();
  Vec3 r = (seed - seed.dot(t0) * t0).normalized();
  frames[0] = {t0, r, t0.cross(r)};

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec3 v1 = x[i + 1] - x[i];
    const double c1 = v1.squaredNorm();
    const Vec3& ri = frames[i].normal;
    const Vec3& ti = frames[i].tangent;
    Vec3 r_l = ri;
    Vec3 t_l = ti;
    if (c1 > 0.0) {
      r_l = ri - (2.0 / c1) * v1.dot(ri) * v1;
      t_l = ti - (2.0 / c1) * v1.dot(ti) * v1;
    }
    const Vec3& tn = tangents[i + 1];
    const Vec3 v2 = tn - t_l;
    const double c2 = v2.squaredNorm();
    Vec3 rn = c2 > 1e-300 ? Vec3(r_l - (2.0 / c2) * v2.dot(r_l) * v2) : r_l;
    // Re-orthonormalize against the tangent to stop drift.
    rn = (rn - rn.dot(tn) * tn).normalized();
    frames[i + 1] = {tn, rn, tn.cross(rn)};
  }
  return frames;
}

Volume3D reconstruct_mpr(const Volume3D& vol, const Centerline& c, int cross) {
  if (cross < 1 || cross % 2 == 0) {
    throw UsageError("MPR cross-section size must be odd, got " + std::to_string(cross));
  }
  const double step = c.size() > 1 ? c.arc()[1] - c.arc()[0] : kMprStepMm;
  const FrameField frames = compute_rmf(c);
  const int n = static_cast<int>(c.size());
  const int h = (cross - 1) / 2;

  Volume3D mpr({cross, cross, n}, Vec3(step, step, step),
               Vec3(-h * step, -h * step, c.arc().front()));
  for (int k = 0; k < n; ++k) {
    const Vec3& p = c.points()[static_cast<std::size_t>(k)];
    const Frame& f = frames[static_cast<std::size_t>(k)];
    for (int j = 0; j < cross; ++j) {
      const Vec3 row = p + ((j - h) * step) * f.binormal;
      for (int i = 0; i < cross; ++i) {
        const Vec3 q = row + ((i - h) * step) * f.normal;
        mpr.at(i, j, k) = static_cast<float>(trilinear_sample(vol, q, kAirPadHu));
      }
    }
  }
  return mpr;
}

}  // namespace coronary
