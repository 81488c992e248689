#include <cmath>
#include <functional>
#include <numbers>

#include "doctest.h"

#include "coronary/errors.hpp"
#include "coronary/geometry.hpp"
#include "coronary/volume.hpp"
#include "coronary/volume_io.hpp"
#include "support.hpp"

using namespace coronary;

namespace {

// Independent corner-weight formula: w = prod over axes of (1 - |p - corner|).
double brute_trilinear(const Volume3D& v, const Vec3& p, double pad) {
  const Vec3 c = v.continuous_index(p);
  double sum = 0.0;
  const int x0 = static_cast<int>(std::floor(c.x()));
  const int y0 = static_cast<int>(std::floor(c.y()));
  const int z0 = static_cast<int>(std::floor(c.z()));
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const int i = x0 + dx, j = y0 + dy, k = z0 + dz;
        const double w = (1 - std::abs(c.x() - i)) * (1 - std::abs(c.y() - j)) * (1 - std::abs(c.z() - k));
        sum += w * (v.contains(i, j, k) ? v.at(i, j, k) : pad);
      }
  return sum;
}

// Smooth tube around a circle of radius R in the z = 0 plane.
double torus_field(const Vec3& p, double R) {
  const double rho = std::hypot(p.x(), p.y()) - R;
  const double d = std::hypot(rho, p.z());
  return 400.0 * std::exp(-(d * d) / (2 * 1.5 * 1.5));
}

Volume3D sample_field(Vec3 lo, Vec3 hi, double h, const std::function<double(const Vec3&)>& f) {
  Volume3D::Dims dims;
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::ceil((hi[a] - lo[a]) / h)) + 1;
  Volume3D v(dims, Vec3(h, h, h), lo);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) v.at(i, j, k) = static_cast<float>(f(v.world(i, j, k)));
  return v;
}

std::vector<Vec3> arc_points(double R, double from, double to, int n, const Eigen::Matrix3d& rot) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    const double t = from + (to - from) * i / (n - 1);
    pts.push_back(rot * Vec3(R * std::cos(t), R * std::sin(t), 0.0));
  }
  return pts;
}

}  // namespace

TEST_SUITE("volume") {

TEST_CASE("trilinear sample at a voxel centre returns the voxel") {
  const Volume3D v = testutil::random_volume({4, 5, 6}, Vec3(0.5, 0.7, 0.9), Vec3(1, 2, 3), 1);
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 4; ++i) CHECK(trilinear_sample(v, v.world(i, j, k), 0.0) == doctest::Approx(v.at(i, j, k)));
}

TEST_CASE("trilinear midpoint along x is the mean of the neighbours") {
  const Volume3D v = testutil::random_volume({4, 4, 4}, Vec3(1, 1, 1), Vec3(0, 0, 0), 2);
  const double got = trilinear_sample(v, Vec3(1.5, 2, 1), 0.0);
  CHECK(got == doctest::Approx(0.5 * (v.at(1, 2, 1) + v.at(2, 2, 1))).epsilon(1e-12));
}

TEST_CASE("trilinear matches the 8-corner brute force oracle") {
  const Volume3D v = testutil::random_volume({4, 4, 4}, Vec3(0.3, 0.4, 0.5), Vec3(-1, 0.5, 2), 3);
  Rng rng = keyed_rng(3, 1);
  std::uniform_real_distribution<double> u(-0.5, 1.0);
  double worst = 0.0;
  for (int n = 0; n < 2000; ++n) {
    // Some points fall outside so the pad path is covered too.
    const Vec3 c(u(rng) * 4, u(rng) * 4, u(rng) * 4);
    const Vec3 p = v.origin() + v.spacing().cwiseProduct(c);
    worst = std::max(worst, std::abs(trilinear_sample(v, p, -1024.0) - brute_trilinear(v, p, -1024.0)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("trilinear is exact on linear fields") {
  const double a = 3, b = -2, c = 0.5, d = 1.25;
  const Volume3D v = sample_field(Vec3(0, 0, 0), Vec3(5, 5, 5), 0.5,
                                  [&](const Vec3& p) { return a + b * p.x() + c * p.y() + d * p.z(); });
  const double range = (std::abs(b) + std::abs(c) + std::abs(d)) * 5;
  Rng rng = keyed_rng(4, 1);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int n = 0; n < 500; ++n) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const double exact = a + b * p.x() + c * p.y() + d * p.z();
    CHECK(std::abs(trilinear_sample(v, p, 0.0) - exact) <= 1e-5 * range);
  }
}

TEST_CASE("volume rejects inconsistent construction") {
  CHECK_THROWS_AS(Volume3D({2, 2, 2}, Vec3(1, 1, 1), Vec3(0, 0, 0), std::vector<float>(7)), DataError);
  CHECK_THROWS_AS(Volume3D({0, 2, 2}, Vec3(1, 1, 1), Vec3(0, 0, 0)), DataError);
  CHECK_THROWS_AS(Volume3D({2, 2, 2}, Vec3(1, 0, 1), Vec3(0, 0, 0)), DataError);
}

TEST_CASE("straight 3 mm centerline resamples to 11 points") {
  const Centerline c = resample_centerline(Centerline({Vec3(0, 0, 0), Vec3(0, 3, 0)}));
  REQUIRE(c.size() == 11);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c.arc()[i] == doctest::Approx(0.3 * i));
    CHECK((c.points()[i] - Vec3(0, 0.3 * i, 0)).norm() < 1e-12);
  }
}

TEST_CASE("resampling a uniform polyline is the identity") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i) pts.push_back(Vec3(0.3 * i, 1.0, -2.0));
  const Centerline c = resample_centerline(Centerline(pts));
  REQUIRE(c.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((c.points()[i] - pts[i]).norm() < 1e-9);
}

TEST_CASE("quarter circle resamples with uniform arc spacing") {
  const double R = 10.0;
  std::vector<Vec3> pts;
  // Roughly 1 mm chords.
  const int n = 17;
  for (int i = 0; i < n; ++i) {
    const double t = 0.5 * std::numbers::pi * i / (n - 1);
    pts.push_back(Vec3(R * std::cos(t), R * std::sin(t), 0));
  }
  const Centerline c = resample_centerline(Centerline(pts));
  for (std::size_t i = 1; i < c.size(); ++i) {
    CHECK(c.arc()[i] - c.arc()[i - 1] == doctest::Approx(0.3).epsilon(1e-6));
    // Points lie on the chords, so spacing in space is at most one step.
    CHECK((c.points()[i] - c.points()[i - 1]).norm() <= 0.3 + 1e-9);
  }
  // The raw polyline is within 0.5% of the arc; resampling then drops the
  // trailing partial step.
  const double expected = 5 * std::numbers::pi;
  const Centerline raw(pts);
  CHECK(std::abs(raw.length() - expected) <= 0.005 * expected);
  CHECK(c.length() <= raw.length());
  CHECK(raw.length() - c.length() < 0.3);
}

TEST_CASE("too short centerline is rejected") {
  CHECK_THROWS_WITH_AS(resample_centerline(Centerline({Vec3(0, 0, 0), Vec3(0, 0, 0.2)})),
                       "centerline too short", DataError);
}

TEST_CASE("RMF on a straight line is constant") {
  const Centerline c = resample_centerline(Centerline({Vec3(1, 2, 0), Vec3(1, 2, 9)}));
  const FrameField f = compute_rmf(c);
  for (const auto& fr : f) {
    CHECK((fr.tangent - f[0].tangent).norm() < 1e-12);
    CHECK((fr.normal - f[0].normal).norm() < 1e-12);
    CHECK((fr.binormal - f[0].binormal).norm() < 1e-12);
  }
  CHECK((f[0].normal - Vec3::UnitX()).norm() < 1e-12);
}

TEST_CASE("RMF frames are orthonormal and right-handed") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 80; ++i) {
    const double t = 0.1 * i;
    pts.push_back(Vec3(3 * std::cos(t), 3 * std::sin(t), 0.8 * t));  // helix
  }
  const FrameField f = compute_rmf(resample_centerline(Centerline(pts)));
  for (const auto& fr : f) {
    Eigen::Matrix3d m;
    m << fr.tangent, fr.normal, fr.binormal;
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK((m.transpose() * m - Eigen::Matrix3d::Identity()).norm() < 1e-6);
  }
}

TEST_CASE("RMF along a planar arc has no twist") {
  const Centerline c = resample_centerline(Centerline(arc_points(10, 0, 2.0, 60, Eigen::Matrix3d::Identity())));
  const FrameField f = compute_rmf(c);
  // The first normal is in plane, so the binormal must stay on the plane normal.
  double worst = 0.0;
  for (const auto& fr : f) worst = std::max(worst, std::acos(std::min(1.0, std::abs(fr.binormal.z()))));
  CHECK(worst < 1e-3);
}

TEST_CASE("MPR of a straight axis-aligned tube equals a crop") {
  const Volume3D v = testutil::random_volume({50, 50, 40}, Vec3(0.3, 0.3, 0.3), Vec3(0, 0, 0), 5);
  std::vector<Vec3> pts;
  for (int k = 5; k <= 34; ++k) pts.push_back(v.world(24, 24, k));
  const Centerline c = resample_centerline(Centerline(pts));
  const Volume3D m = reconstruct_mpr(v, c, 45);
  REQUIRE(m.dims() == Volume3D::Dims{45, 45, 30});
  double worst = 0.0;
  for (int k = 0; k < 30; ++k)
    for (int j = 0; j < 45; ++j)
      for (int i = 0; i < 45; ++i) worst = std::max(worst, double(std::abs(m.at(i, j, k) - v.at(2 + i, 2 + j, 5 + k))));
  CHECK(worst <= 1e-4 * 200.0);
}

TEST_CASE("MPR dims follow the resampled point count") {
  const Volume3D v(Volume3D::Dims{10, 10, 10}, Vec3(1, 1, 1), Vec3(0, 0, 0));
  // 100 points at 0.3 mm span 29.7 mm.
  const Centerline c = resample_centerline(Centerline({Vec3(0, 0, 0), Vec3(0, 0, 29.7)}));
  CHECK(reconstruct_mpr(v, c, 45).dims() == Volume3D::Dims{45, 45, 100});
  CHECK_THROWS_AS(reconstruct_mpr(v, c, 44), UsageError);
}

TEST_CASE("MPR straightens a curved tube") {
  const double R = 12.0;
  const Volume3D v = sample_field(Vec3(-15, -15, -8), Vec3(15, 15, 8), 0.4,
                                  [&](const Vec3& p) { return torus_field(p, R); });
  const Centerline c = resample_centerline(Centerline(arc_points(R, 0.2, 1.6, 50, Eigen::Matrix3d::Identity())));
  const Volume3D m = reconstruct_mpr(v, c, 45);
  for (int k = 0; k < m.dims()[2]; ++k) {
    double sx = 0, sy = 0, n = 0;
    for (int j = 0; j < 45; ++j)
      for (int i = 0; i < 45; ++i)
        if (m.at(i, j, k) > 200.0f) {
          sx += i;
          sy += j;
          n += 1;
        }
    REQUIRE(n > 0);
    CHECK(std::abs(sx / n - 22) <= 1.0);
    CHECK(std::abs(sy / n - 22) <= 1.0);
  }
}

TEST_CASE("MPR is equivariant under rigid motion") {
  const double R = 12.0;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 shift(3.1, -2.4, 5.5);
  auto field = [&](const Vec3& p) { return torus_field(p, R); };
  auto moved = [&](const Vec3& p) { return torus_field(rot.transpose() * (p - shift), R); };

  const Volume3D a = sample_field(Vec3(-15, -15, -8), Vec3(15, 15, 8), 0.3, field);
  const Volume3D b = sample_field(shift - Vec3(17, 17, 17), shift + Vec3(17, 17, 17), 0.3, moved);

  const auto pts = arc_points(R, 0.2, 1.6, 50, Eigen::Matrix3d::Identity());
  std::vector<Vec3> pts_b;
  for (const auto& p : pts) pts_b.push_back(rot * p + shift);
  const Volume3D ma = reconstruct_mpr(a, resample_centerline(Centerline(pts)), 21);
  const Volume3D mb = reconstruct_mpr(b, resample_centerline(Centerline(pts_b)), 21);
  REQUIRE(ma.dims() == mb.dims());
  // The tube is symmetric about its axis, so the roll of the initial frame
  // does not matter.
  double worst = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) worst = std::max(worst, double(std::abs(ma.voxels()[i] - mb.voxels()[i])));
  CHECK(worst <= 0.02 * 400.0);
}

TEST_CASE("volume and centerline files round-trip") {
  testutil::TempDir dir("volume_io");
  const Volume3D v = testutil::random_volume({3, 4, 5}, Vec3(0.25, 0.5, 0.75), Vec3(-1, 2, 3.5), 6);
  write_volume(v, dir / "a.vol");
  const Volume3D r = read_volume(dir / "a.vol");
  CHECK(r.dims() == v.dims());
  CHECK((r.spacing() - v.spacing()).norm() == 0.0);
  CHECK((r.origin() - v.origin()).norm() == 0.0);
  CHECK(std::equal(r.voxels().begin(), r.voxels().end(), v.voxels().begin()));
  const std::string bytes = testutil::slurp(dir / "a.vol");
  CHECK(bytes.substr(0, 4) == "MPRV");
  CHECK(bytes.size() == 4 + 4 + 12 + 12 + 12 + 1 + 4 * v.size());

  const Centerline c({Vec3(0.125, 1, 2), Vec3(1, 2, 3), Vec3(4.5, -6, 7)});
  write_centerline(c, dir / "c.txt");
  const Centerline rc = read_centerline(dir / "c.txt");
  REQUIRE(rc.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK((rc.points()[i] - c.points()[i]).norm() < 1e-9);
}

TEST_CASE("malformed volume files are data errors") {
  testutil::TempDir dir("volume_bad");
  {
    std::ofstream out(dir / "bad.vol", std::ios::binary);
    out << "NOPE1234";
  }
  CHECK_THROWS_AS(read_volume(dir / "bad.vol"), DataError);
  CHECK_THROWS_AS(read_volume(dir / "missing.vol"), DataError);
  {
    std::ofstream out(dir / "c.txt");
    out << "# header\n1 2 3\n4 five 6\n";
  }
  CHECK_THROWS_AS(read_centerline(dir / "c.txt"), DataError);
}

}  // TEST_SUITE
