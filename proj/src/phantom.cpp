#include "coronary/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Geometry>

#include "coronary/errors.hpp"
#include "coronary/rng.hpp"
#include "coronary/volume_io.hpp"

namespace coronary {

void PhantomSpec::validate() const {
  const double total = std::accumulate(class_mix.begin(), class_mix.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("phantom class_mix must sum to 1");
  for (double p : class_mix) {
    if (p < 0.0) throw UsageError("phantom class_mix entries must be >= 0");
  }
  auto check = [](const Range& r, const char* name) {
    if (!(r.lo > 0.0) || !(r.hi >= r.lo)) {
      throw UsageError(std::string("phantom range ") + name + " must be positive and non-empty");
    }
  };
  check(length_mm, "length_mm");
  check(lumen_radius_mm, "lumen_radius_mm");
  check(segment_length_mm, "segment_length_mm");
  if (segment_length_mm.lo < 2.0) throw UsageError("phantom segments must be >= 2 mm");
  if (n_arteries < 1) throw UsageError("phantom n_arteries must be >= 1");
  if (lesion_count[0] < 1 || lesion_count[1] < lesion_count[0]) {
    throw UsageError("phantom lesion_count range must be non-empty and >= 1");
  }
  if (curvature_amplitude_mm < 0.0 || noise_sigma < 0.0 || segment_gap_mm < 0.0 ||
      end_margin_mm < 0.0 || !(voxel_mm > 0.0)) {
    throw UsageError("phantom scalar parameters must be non-negative");
  }
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{
      {"seed", s.seed},
      {"n_arteries", s.n_arteries},
      {"length_mm", {s.length_mm.lo, s.length_mm.hi}},
      {"curvature_amplitude_mm", s.curvature_amplitude_mm},
      {"lumen_radius_mm", {s.lumen_radius_mm.lo, s.lumen_radius_mm.hi}},
      {"lesion_count", {s.lesion_count[0], s.lesion_count[1]}},
      {"segment_length_mm", {s.segment_length_mm.lo, s.segment_length_mm.hi}},
      {"segment_gap_mm", s.segment_gap_mm},
      {"end_margin_mm", s.end_margin_mm},
      {"class_mix", s.class_mix},
      {"noise_sigma", s.noise_sigma},
      {"voxel_mm", s.voxel_mm},
  };
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  if (!j.is_object()) throw UsageError("phantom spec must be a JSON object");
  auto range = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_array() || v.size() != 2) throw UsageError(key + " must be [lo, hi]");
    return Range{v[0].get<double>(), v[1].get<double>()};
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") s.seed = v.get<std::uint64_t>();
    else if (key == "n_arteries") s.n_arteries = v.get<int>();
    else if (key == "length_mm") s.length_mm = range(v, key);
    else if (key == "curvature_amplitude_mm") s.curvature_amplitude_mm = v.get<double>();
    else if (key == "lumen_radius_mm") s.lumen_radius_mm = range(v, key);
    else if (key == "lesion_count") s.lesion_count = v.get<std::array<int, 2>>();
    else if (key == "segment_length_mm") s.segment_length_mm = range(v, key);
    else if (key == "segment_gap_mm") s.segment_gap_mm = v.get<double>();
    else if (key == "end_margin_mm") s.end_margin_mm = v.get<double>();
    else if (key == "class_mix") s.class_mix = v.get<std::array<double, kJointClasses>>();
    else if (key == "noise_sigma") s.noise_sigma = v.get<double>();
    else if (key == "voxel_mm") s.voxel_mm = v.get<double>();
    else throw UsageError("unknown phantom key '" + key + "'");
  }
}

std::string patient_name(std::uint64_t patient_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%04llu", static_cast<unsigned long long>(patient_index));
  return buf;
}

namespace {

constexpr double kWallThicknessMm = 0.6;
constexpr double kEdgeMm = 0.3;     // width of the linear partial-volume ramp
constexpr double kRampMm = 0.75;    // lesion onset/offset length
constexpr double kMarginMm = 7.5;   // world volume clearance around the curve
constexpr double kRawStepMm = 0.5;  // spacing of the exported raw centerline

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double edge(double signed_dist) {
  return std::clamp(0.5 + signed_dist / kEdgeMm, 0.0, 1.0);
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

struct LesionRender {
  SegmentAnnotation seg;
  double severity = 0.0;
  double thickening = 0.0;
  double plaque_hu = 0.0;  // soft-plaque intensity (non-calcified / mixed)
  bool soft = false;

  double weight(double s) const {
    const double ramp = std::min(kRampMm, seg.length_mm() / 4.0);
    if (s <= seg.start_mm || s >= seg.end_mm) return 0.0;
    return smoothstep((s - seg.start_mm) / ramp) * smoothstep((seg.end_mm - s) / ramp);
  }
};

struct TubeProfile {
  double lumen_r;
  double outer_r;
  double zone_hu;
};

std::vector<Vec3> smooth_curve(const PhantomSpec& spec, double length, Rng& rng) {
  const double two_pi = 2.0 * std::numbers::pi;
  const double a1 = spec.curvature_amplitude_mm * uniform(rng, 0.3, 1.0);
  const double a2 = spec.curvature_amplitude_mm * uniform(rng, 0.3, 1.0);
  const double l1 = uniform(rng, 40.0, 80.0);
  const double l2 = uniform(rng, 40.0, 80.0);
  const double p1 = uniform(rng, 0.0, two_pi);
  const double p2 = uniform(rng, 0.0, two_pi);
  auto curve = [&](double t) {
    return Vec3(a1 * (std::sin(two_pi * t / l1 + p1) - std::sin(p1)),
                a2 * (std::sin(two_pi * t / l2 + p2) - std::sin(p2)), t);
  };

  // Random orientation: normalized 4D Gaussian gives a uniform rotation.
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  const Eigen::Matrix3d rot = q.toRotationMatrix();

  // Walk the curve finely and emit points every kRawStepMm of arc.
  std::vector<Vec3> pts{rot * curve(0.0)};
  const double dt = 0.01;
  double arc = 0.0;
  double next = kRawStepMm;
  Vec3 prev = curve(0.0);
  for (double t = dt; arc < length; t += dt) {
    const Vec3 cur = curve(t);
    const double seg = (cur - prev).norm();
    while (arc + seg >= next && next <= length + 1e-9) {
      const double f = (next - arc) / seg;
      pts.push_back(rot * (prev + f * (cur - prev)));
      next += kRawStepMm;
    }
    arc += seg;
    prev = cur;
  }
  return pts;
}

std::vector<LesionRender> layout_segments(const PhantomSpec& spec, double length, Rng& rng) {
  const int count = uniform_int(rng, spec.lesion_count[0], spec.lesion_count[1]);
  std::discrete_distribution<int> mix(spec.class_mix.begin(), spec.class_mix.end());

  std::vector<LesionRender> out;
  std::vector<double> lengths;
  for (int i = 0; i < count; ++i) {
    LesionRender l;
    const JointLabel lab = decode_joint(mix(rng));
    l.seg.plaque = lab.plaque;
    l.seg.stenosis = lab.stenosis;
    lengths.push_back(uniform(rng, spec.segment_length_mm.lo, spec.segment_length_mm.hi));
    if (l.seg.stenosis == 1) l.severity = uniform(rng, 0.10, 0.45);
    if (l.seg.stenosis == 2) l.severity = uniform(rng, 0.55, 0.90);
    l.soft = l.seg.plaque == 1 || l.seg.plaque == 2;
    if (l.seg.plaque > 0) {
      l.thickening = l.soft ? uniform(rng, 0.5, 1.0) : uniform(rng, 0.0, 0.3);
    }
    l.plaque_hu = uniform(rng, 20.0, 50.0);
    out.push_back(l);
  }

  const double available = length - 2.0 * spec.end_margin_mm;
  auto needed = [&] {
    return std::accumulate(lengths.begin(), lengths.end(), 0.0) +
           spec.segment_gap_mm * static_cast<double>(lengths.size() - 1);
  };
  while (lengths.size() > 1 && needed() > available) {
    lengths.pop_back();
    out.pop_back();
  }
  if (needed() > available) lengths[0] = std::max(2.0, available);

  // Split the slack into len+1 random shares.
  const double slack = std::max(0.0, available - needed());
  std::vector<double> shares(lengths.size() + 1);
  for (auto& s : shares) s = uniform(rng, 0.0, 1.0);
  const double share_total = std::accumulate(shares.begin(), shares.end(), 0.0);

  double cursor = spec.end_margin_mm;
  for (std::size_t i = 0; i < out.size(); ++i) {
    cursor += slack * shares[i] / share_total;
    out[i].seg.start_mm = cursor;
    out[i].seg.end_mm = cursor + lengths[i];
    cursor = out[i].seg.end_mm + spec.segment_gap_mm;
  }
  return out;
}

PhantomArtery generate_artery(const PhantomSpec& spec, std::uint64_t patient_index,
                              int artery_index) {
  Rng rng = keyed_rng(spec.seed, patient_index, static_cast<std::uint64_t>(artery_index));

  const double length = uniform(rng, spec.length_mm.lo, spec.length_mm.hi);
  const double radius = uniform(rng, spec.lumen_radius_mm.lo, spec.lumen_radius_mm.hi);
  const double lumen_hu = uniform(rng, 320.0, 380.0);
  const double wall_hu = uniform(rng, 45.0, 75.0);
  const double bg_hu = uniform(rng, -90.0, -30.0);

  Centerline raw(smooth_curve(spec, length, rng));
  std::vector<LesionRender> lesions = layout_segments(spec, raw.length(), rng);

  // World grid around the curve.
  Vec3 lo = raw.points().front();
  Vec3 hi = lo;
  for (const auto& p : raw.points()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  lo.array() -= kMarginMm;
  hi.array() += kMarginMm;
  // Geometry rounded to what the .vol header can hold, so a reloaded volume
  // resamples identically.
  const double h = static_cast<float>(spec.voxel_mm);
  lo = header_precision(lo);
  Volume3D::Dims dims;
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::ceil((hi[a] - lo[a]) / h)) + 1;
  Volume3D vol(dims, Vec3(h, h, h), lo, static_cast<float>(bg_hu));

  const Centerline fine = resample_centerline(raw);
  const FrameField frames = compute_rmf(fine);
  const double step = kMprStepMm;

  auto profile = [&](double s) {
    TubeProfile p{radius, radius + kWallThicknessMm, wall_hu};
    for (const auto& l : lesions) {
      const double w = l.weight(s);
      if (w <= 0.0) continue;
      p.lumen_r = radius * (1.0 - l.severity * w);
      p.outer_r = radius + kWallThicknessMm + l.thickening * w;
      if (l.soft) p.zone_hu = wall_hu + (l.plaque_hu - wall_hu) * w;
    }
    return p;
  };

  // Nearest point on the resampled polyline for every voxel near the tube.
  double max_thick = 0.0;
  for (const auto& l : lesions) max_thick = std::max(max_thick, l.thickening);
  const double reach = radius + kWallThicknessMm + max_thick + 1.0;
  std::vector<float> best_d(vol.size(), std::numeric_limits<float>::infinity());
  std::vector<float> best_s(vol.size(), 0.0f);
  const auto& fp = fine.points();
  for (std::size_t k = 0; k + 1 < fp.size(); ++k) {
    const Vec3 a = fp[k];
    const Vec3 v = fp[k + 1] - a;
    const double vv = v.squaredNorm();
    const Vec3 bmin = (a.cwiseMin(fp[k + 1]).array() - reach).matrix();
    const Vec3 bmax = (a.cwiseMax(fp[k + 1]).array() + reach).matrix();
    const Vec3 i0 = vol.continuous_index(bmin);
    const Vec3 i1 = vol.continuous_index(bmax);
    for (int z = std::max(0, (int)std::floor(i0.z())); z <= std::min(dims[2] - 1, (int)std::ceil(i1.z())); ++z)
      for (int y = std::max(0, (int)std::floor(i0.y())); y <= std::min(dims[1] - 1, (int)std::ceil(i1.y())); ++y)
        for (int x = std::max(0, (int)std::floor(i0.x())); x <= std::min(dims[0] - 1, (int)std::ceil(i1.x())); ++x) {
          const Vec3 q = vol.world(x, y, z);
          const double t = std::clamp((q - a).dot(v) / vv, 0.0, 1.0);
          const double d = (q - (a + t * v)).norm();
          const std::size_t idx = vol.index(x, y, z);
          if (d < best_d[idx]) {
            best_d[idx] = static_cast<float>(d);
            best_s[idx] = static_cast<float>(fine.arc()[k] + t * step);
          }
        }
  }

  auto voxels = vol.voxels();
  for (std::size_t idx = 0; idx < voxels.size(); ++idx) {
    if (!std::isfinite(best_d[idx])) continue;
    const double d = best_d[idx];
    const TubeProfile p = profile(best_s[idx]);
    const double f_lumen = edge(p.lumen_r - d);
    const double f_tissue = edge(p.outer_r - d);
    const double outside = f_tissue * p.zone_hu + (1.0 - f_tissue) * bg_hu;
    voxels[idx] = static_cast<float>(f_lumen * lumen_hu + (1.0 - f_lumen) * outside);
  }

  // Calcium deposits composited on top.
  std::vector<LesionTruth> truth(lesions.size());
  for (std::size_t li = 0; li < lesions.size(); ++li) {
    const auto& l = lesions[li];
    truth[li].severity = l.severity;
    int blobs = 0;
    double r_lo = 0.0, r_hi = 0.0;
    if (l.seg.plaque == 3) {
      blobs = uniform_int(rng, 2, 3);
      r_lo = 0.5;
      r_hi = 0.9;
    } else if (l.seg.plaque == 2) {
      blobs = 1;
      r_lo = 0.4;
      r_hi = 0.7;
    }
    for (int b = 0; b < blobs; ++b) {
      double rb = uniform(rng, r_lo, r_hi);
      rb = std::min(rb, l.seg.length_mm() / 2.0 - 0.25);
      const double s_lo = l.seg.start_mm + rb + 0.2;
      const double s_hi = l.seg.end_mm - rb - 0.2;
      const double sb = s_hi > s_lo ? uniform(rng, s_lo, s_hi) : 0.5 * (l.seg.start_mm + l.seg.end_mm);
      const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double hu = uniform(rng, 700.0, 1100.0);
      const auto k = std::min(fp.size() - 1, static_cast<std::size_t>(std::lround(sb / step)));
      const TubeProfile p = profile(sb);
      const double rho = 0.5 * (p.lumen_r + p.outer_r);
      const Frame& f = frames[k];
      const Vec3 c = fp[k] + rho * (std::cos(phi) * f.normal + std::sin(phi) * f.binormal);
      truth[li].calcium_centers.push_back(c);
      truth[li].calcium_radii.push_back(rb);

      const Vec3 i0 = vol.continuous_index((c.array() - rb - kEdgeMm).matrix());
      const Vec3 i1 = vol.continuous_index((c.array() + rb + kEdgeMm).matrix());
      for (int z = std::max(0, (int)std::floor(i0.z())); z <= std::min(dims[2] - 1, (int)std::ceil(i1.z())); ++z)
        for (int y = std::max(0, (int)std::floor(i0.y())); y <= std::min(dims[1] - 1, (int)std::ceil(i1.y())); ++y)
          for (int x = std::max(0, (int)std::floor(i0.x())); x <= std::min(dims[0] - 1, (int)std::ceil(i1.x())); ++x) {
            const double fb = edge(rb - (vol.world(x, y, z) - c).norm());
            if (fb <= 0.0) continue;
            float& v = vol.at(x, y, z);
            v = static_cast<float>((1.0 - fb) * v + fb * hu);
          }
    }
  }

  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& v : voxels) v = static_cast<float>(v + noise(rng));
  }

  PhantomArtery art{
      .artery_id = patient_name(patient_index) + "_A" + std::to_string(artery_index),
      .patient_id = patient_name(patient_index),
      .volume = std::move(vol),
      .centerline = std::move(raw),
      .annotations = {},
      .healthy_radius_mm = radius,
      .truth = std::move(truth),
  };
  for (const auto& l : lesions) art.annotations.push_back(l.seg);
  return art;
}

}  // namespace

std::vector<PhantomArtery> generate_patient(const PhantomSpec& spec, std::uint64_t patient_index) {
  spec.validate();
  std::vector<PhantomArtery> out;
  out.reserve(static_cast<std::size_t>(spec.n_arteries));
  for (int a = 0; a < spec.n_arteries; ++a) out.push_back(generate_artery(spec, patient_index, a));
  return out;
}

}  // namespace coronary
