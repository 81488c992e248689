#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"

#include "coronary/dataset.hpp"
#include "coronary/errors.hpp"
#include "coronary/phantom.hpp"
#include "support.hpp"

using namespace coronary;

namespace {

PhantomSpec only_class(int joint) {
  PhantomSpec s;
  s.class_mix.fill(0.0);
  s.class_mix[static_cast<std::size_t>(joint)] = 1.0;
  return s;
}

// First radius where the mean radial profile drops below `level`.
double half_max_radius(const Volume3D& v, const Vec3& c, const Frame& f, double level) {
  for (double r = 0.0; r < 5.0; r += 0.01) {
    double sum = 0.0;
    const int dirs = 16;
    for (int d = 0; d < dirs; ++d) {
      const double a = 2 * M_PI * d / dirs;
      sum += trilinear_sample(v, c + r * (std::cos(a) * f.normal + std::sin(a) * f.binormal), -1024);
    }
    if (sum / dirs < level) return r;
  }
  return 5.0;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("joint label encoding") {
  CHECK(encode_joint(0, 0) == 0);
  CHECK(encode_joint(1, 1) == 1);
  CHECK(encode_joint(3, 1) == 3);
  CHECK(encode_joint(1, 2) == 4);
  CHECK(encode_joint(3, 2) == 6);
  for (int j = 0; j < kJointClasses; ++j) {
    const JointLabel l = decode_joint(j);
    CHECK(encode_joint(l.plaque, l.stenosis) == j);
  }
  CHECK(decode_joint(0) == JointLabel{0, 0});
  CHECK_THROWS_AS(encode_joint(0, 1), DataError);
  CHECK_THROWS_AS(decode_joint(7), DataError);
}

TEST_CASE("segment validation") {
  CHECK_NOTHROW(SegmentAnnotation{1, 2, 3, 2}.validate());
  CHECK_THROWS_AS((SegmentAnnotation{2, 2, 1, 1}.validate()), DataError);
  CHECK_THROWS_AS((SegmentAnnotation{1, 2, 0, 2}.validate()), DataError);
  CHECK_THROWS_AS((SegmentAnnotation{1, 2, 4, 1}.validate()), DataError);
}

TEST_CASE("generation is deterministic per patient") {
  PhantomSpec s;
  const auto a = generate_patient(s, 7);
  const auto b = generate_patient(s, 7);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].artery_id == b[i].artery_id);
    CHECK(std::equal(a[i].volume.voxels().begin(), a[i].volume.voxels().end(), b[i].volume.voxels().begin()));
    REQUIRE(a[i].annotations.size() == b[i].annotations.size());
    for (std::size_t k = 0; k < a[i].annotations.size(); ++k) {
      CHECK(a[i].annotations[k].start_mm == b[i].annotations[k].start_mm);
      CHECK(a[i].annotations[k].plaque == b[i].annotations[k].plaque);
    }
  }
  // Another patient is different.
  const auto c = generate_patient(s, 8);
  CHECK(c[0].volume.size() != a[0].volume.size());
}

TEST_CASE("all mass on no-plaque gives only healthy annotations") {
  const PhantomSpec s = only_class(0);
  for (std::uint64_t p = 0; p < 3; ++p)
    for (const auto& a : generate_patient(s, p))
      for (const auto& seg : a.annotations) {
        CHECK(seg.plaque == 0);
        CHECK(seg.stenosis == 0);
      }
}

TEST_CASE("annotations are consistent, ordered and inside the artery") {
  PhantomSpec s;
  for (std::uint64_t p = 0; p < 6; ++p)
    for (const auto& a : generate_patient(s, p)) {
      const double len = a.centerline.length();
      REQUIRE(!a.annotations.empty());
      double prev_end = -1e9;
      for (const auto& seg : a.annotations) {
        CHECK_NOTHROW(seg.validate());
        CHECK(!(seg.plaque == 0 && seg.stenosis != 0));
        CHECK(seg.start_mm >= prev_end);
        CHECK(seg.start_mm >= 0.0);
        CHECK(seg.end_mm <= len);
        prev_end = seg.end_mm;
      }
    }
}

TEST_CASE("calcium above 500 HU only near calcified or mixed segments") {
  PhantomSpec s;
  s.class_mix = {0.2, 0.1, 0.2, 0.2, 0.1, 0.1, 0.1};
  int calcified_voxels = 0;
  for (std::uint64_t p = 0; p < 3; ++p)
    for (const auto& a : generate_patient(s, p)) {
      const Centerline fine = resample_centerline(a.centerline);
      const Volume3D& v = a.volume;
      for (int k = 0; k < v.dims()[2]; ++k)
        for (int j = 0; j < v.dims()[1]; ++j)
          for (int i = 0; i < v.dims()[0]; ++i) {
            if (v.at(i, j, k) < 500.0f) continue;
            ++calcified_voxels;
            const Vec3 q = v.world(i, j, k);
            std::size_t best = 0;
            for (std::size_t n = 1; n < fine.size(); ++n)
              if ((fine.points()[n] - q).squaredNorm() < (fine.points()[best] - q).squaredNorm()) best = n;
            const double arc = fine.arc()[best];
            bool near = false;
            for (const auto& seg : a.annotations)
              if ((seg.plaque == 2 || seg.plaque == 3) && arc >= seg.start_mm - 1.0 && arc <= seg.end_mm + 1.0)
                near = true;
            CHECK_MESSAGE(near, a.artery_id << " voxel at arc " << arc);
          }
    }
  CHECK(calcified_voxels > 0);
}

TEST_CASE("significant stenosis narrows the lumen by at least half") {
  // Non-calcified plaque with a significant stenosis.
  PhantomSpec s = only_class(4);
  s.noise_sigma = 0.0;
  int checked = 0;
  for (std::uint64_t p = 0; p < 4; ++p)
    for (const auto& a : generate_patient(s, p)) {
      const Centerline fine = resample_centerline(a.centerline);
      const FrameField frames = compute_rmf(fine);
      auto index_at = [&](double arc) {
        return std::min(fine.size() - 1, static_cast<std::size_t>(std::lround(arc / kMprStepMm)));
      };
      // Healthy reference: 1.5 mm before the first segment (inside the end margin).
      const std::size_t h = index_at(a.annotations.front().start_mm - 1.5);
      const double lumen = trilinear_sample(a.volume, fine.points()[h], 0);
      const double wall = trilinear_sample(a.volume, fine.points()[h] + (a.healthy_radius_mm + 0.3) * frames[h].normal, 0);
      const double level = 0.5 * (lumen + wall);
      const double healthy = half_max_radius(a.volume, fine.points()[h], frames[h], level);
      CHECK(healthy == doctest::Approx(a.healthy_radius_mm).epsilon(0.15));
      for (const auto& seg : a.annotations) {
        const std::size_t m = index_at(0.5 * (seg.start_mm + seg.end_mm));
        const double r = half_max_radius(a.volume, fine.points()[m], frames[m], level);
        CHECK_MESSAGE(r <= 0.5 * healthy, a.artery_id << " lesion radius " << r << " healthy " << healthy);
        ++checked;
      }
    }
  CHECK(checked >= 12);
}

TEST_CASE("patient split proportions") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(patient_name(i));
  const Manifest m = split_patients(ids, {0.5, 0.1, 0.4}, 3);
  int counts[3] = {0, 0, 0};
  for (const auto& e : m) ++counts[static_cast<int>(e.split)];
  CHECK(counts[0] == 5);
  CHECK(counts[1] == 1);
  CHECK(counts[2] == 4);

  const Manifest one = split_patients({"P0000"}, {1, 0, 0}, 3);
  REQUIRE(one.size() == 1);
  CHECK(one[0].split == Split::Train);

  CHECK_THROWS_AS(split_patients({"P0000", "P0001"}, {0.5, 0.1, 0.4}, 3), DataError);
  CHECK_THROWS_AS(split_patients(ids, {0.5, 0.2, 0.4}, 3), UsageError);
}

TEST_CASE("exported dataset keeps patients in a single split") {
  testutil::TempDir dir("phantom_export");
  PhantomSpec s;
  s.n_arteries = 2;
  s.length_mm = {20.0, 24.0};
  s.lesion_count = {1, 1};
  std::vector<PhantomArtery> arts;
  for (std::uint64_t p = 0; p < 5; ++p)
    for (auto& a : generate_patient(s, p)) arts.push_back(std::move(a));
  const Manifest m = export_dataset(arts, {0.6, 0.2, 0.2}, dir.path, 11);
  CHECK(m.size() == 5);

  const Manifest back = read_manifest(dir / "manifest.json");
  REQUIRE(back.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(back[i].patient_id == m[i].patient_id);
    CHECK(back[i].split == m[i].split);
  }

  std::map<std::string, Split> patient_split;
  std::set<std::string> seen;
  std::size_t total = 0;
  for (Split sp : {Split::Train, Split::Val, Split::Test}) {
    for (const auto& a : load_dataset(dir.path, sp)) {
      ++total;
      CHECK(seen.insert(a.artery_id).second);
      const auto [it, fresh] = patient_split.emplace(a.patient_id, sp);
      CHECK(it->second == sp);
      CHECK(a.mpr.dims()[2] == static_cast<int>(a.centerline.size()));
    }
  }
  CHECK(total == arts.size());

  const ArteryAnnotation ann = read_annotation(dir / "annotations" / (arts[0].artery_id + ".json"));
  CHECK(ann.patient_id == arts[0].patient_id);
  REQUIRE(ann.segments.size() == arts[0].annotations.size());
  CHECK(ann.segments[0].end_mm == arts[0].annotations[0].end_mm);
}

TEST_CASE("phantom spec JSON") {
  PhantomSpec s;
  s.noise_sigma = 3.5;
  nlohmann::json j = s;
  PhantomSpec r;
  from_json(j, r);
  CHECK(r.noise_sigma == 3.5);
  CHECK(nlohmann::json(r) == j);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"noise", 1.0}}, r), UsageError);

  PhantomSpec bad;
  bad.class_mix[0] = 0.5;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK_THROWS_AS(generate_patient(bad, 0), UsageError);
}

}  // TEST_SUITE
