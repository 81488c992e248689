#include "coronary/sampler.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "coronary/errors.hpp"
#include "coronary/geometry.hpp"

namespace coronary {

Cube extract_cube(const Volume3D& mpr, double center_mm, double rotation_deg,
                  const Vec3& offset_vox) {
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double step = mpr.spacing().z();
  const double sx = mpr.spacing().x();
  const double sy = mpr.spacing().y();
  const int h = kCubeSize / 2;

  Cube cube(kCubeVoxels);
  std::size_t idx = 0;
  for (int z = -h; z <= h; ++z) {
    const double arc = center_mm + (z + offset_vox.z()) * step;
    for (int y = -h; y <= h; ++y) {
      for (int x = -h; x <= h; ++x) {
        const double u = (c * x - s * y + offset_vox.x()) * sx;
        const double v = (s * x + c * y + offset_vox.y()) * sy;
        cube[idx++] = static_cast<float>(normalize(trilinear_sample(mpr, Vec3(u, v, arc), kAirPadHu)));
      }
    }
  }
  return cube;
}

int sequence_length(double length_mm) {
  const double vox = length_mm / kMprStepMm;
  const int n = static_cast<int>(std::ceil(vox / kCubeStrideVox - 1e-9));
  return std::min(kMaxSequenceLength, std::max(1, n));
}

namespace {

double mpr_arc_end(const Volume3D& mpr) {
  return mpr.origin().z() + (mpr.dims()[2] - 1) * mpr.spacing().z();
}

Vec3 sample_ball(Rng& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (p.squaredNorm() <= 1.0) return radius * p;
  }
}

}  // namespace

CubeSequence training_sequence(const Volume3D& mpr, const SegmentAnnotation& seg,
                               const AugmentOptions& aug, Rng& rng) {
  const double lo = mpr.origin().z();
  const double hi = mpr_arc_end(mpr);
  const double tol = 1e-6;
  if (seg.start_mm < lo - tol || seg.end_mm > hi + tol || !(seg.start_mm < seg.end_mm)) {
    throw DataError("segment [" + std::to_string(seg.start_mm) + ", " + std::to_string(seg.end_mm) +
                    "] mm lies outside the MPR extent");
  }
  const int n = sequence_length(seg.length_mm());
  const double stride_mm = kCubeStrideVox * mpr.spacing().z();
  const double mid = 0.5 * (seg.start_mm + seg.end_mm);

  CubeSequence out;
  double shift_mm = 0.0;
  if (aug.enabled) {
    out.rotation_deg = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
    shift_mm = std::uniform_int_distribution<int>(-aug.max_jitter_vox, aug.max_jitter_vox)(rng) *
               mpr.spacing().z();
  }
  for (int i = 0; i < n; ++i) {
    const double center = mid + (i - 0.5 * (n - 1)) * stride_mm + shift_mm;
    const Vec3 offset = aug.enabled ? sample_ball(rng, aug.max_offset_vox) : Vec3::Zero();
    out.centers_mm.push_back(center);
    out.offsets_vox.push_back(offset);
    out.cubes.push_back(extract_cube(mpr, center, out.rotation_deg, offset));
  }
  return out;
}

std::array<int, kWindowLength> window_indices(int n_points, int point) {
  const int span = kWindowHalfSpanVox;
  if (n_points < 2 * span + 1) {
    throw DataError("artery has " + std::to_string(n_points) + " points; the inference window needs " +
                    std::to_string(2 * span + 1));
  }
  const int center = std::clamp(point, span, n_points - 1 - span);
  std::array<int, kWindowLength> idx{};
  for (int i = 0; i < kWindowLength; ++i) idx[i] = center + (i - kWindowLength / 2) * kCubeStrideVox;
  return idx;
}

CubeSequence inference_window(const Volume3D& mpr, double point_mm) {
  const double step = mpr.spacing().z();
  const int n = mpr.dims()[2];
  const int p = static_cast<int>(std::lround((point_mm - mpr.origin().z()) / step));
  CubeSequence out;
  for (int k : window_indices(n, p)) {
    const double arc = mpr.origin().z() + k * step;
    out.centers_mm.push_back(arc);
    out.offsets_vox.push_back(Vec3::Zero());
    out.cubes.push_back(extract_cube(mpr, arc, 0.0));
  }
  return out;
}

std::vector<int> Batch::lengths() const {
  std::vector<int> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(static_cast<int>(s.size()));
  return out;
}

StratifiedDraw stratified_indices(std::span<const SegmentAnnotation> labels, Rng& rng,
                                  int batch_size) {
  if (batch_size % kPlaqueClasses != 0 || batch_size % kStenosisClasses != 0) {
    throw UsageError("stratified batch size must be divisible by 4 and 3");
  }
  std::array<std::vector<std::size_t>, kPlaqueClasses> by_plaque;
  std::array<std::vector<std::size_t>, kStenosisClasses> by_stenosis;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_plaque[static_cast<std::size_t>(labels[i].plaque)].push_back(i);
    by_stenosis[static_cast<std::size_t>(labels[i].stenosis)].push_back(i);
  }
  for (int c = 0; c < kPlaqueClasses; ++c) {
    if (by_plaque[c].empty()) {
      throw DataError("no training segment of plaque class '" + std::string(kPlaqueNames[c]) + "'");
    }
  }
  for (int c = 0; c < kStenosisClasses; ++c) {
    if (by_stenosis[c].empty()) {
      throw DataError("no training segment of stenosis class '" + std::string(kStenosisNames[c]) + "'");
    }
  }

  StratifiedDraw d;
  auto draw = [&](const auto& groups, int per_class, std::vector<std::size_t>& out) {
    for (const auto& g : groups) {
      std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
      for (int k = 0; k < per_class; ++k) out.push_back(g[pick(rng)]);
    }
  };
  draw(by_plaque, batch_size / kPlaqueClasses, d.plaque_batch);
  draw(by_stenosis, batch_size / kStenosisClasses, d.stenosis_batch);
  return d;
}

Batch make_batch(std::span<const TrainingSegment> segs, std::span<const std::size_t> order,
                 const AugmentOptions& aug, Rng& rng) {
  Batch b;
  for (std::size_t i : order) {
    const auto& s = segs[i];
    b.sequences.push_back(training_sequence(*s.mpr, s.seg, aug, rng));
    b.plaque_targets.push_back(s.seg.plaque);
    b.stenosis_targets.push_back(s.seg.stenosis);
  }
  return b;
}

std::pair<Batch, Batch> stratified_batches(std::span<const TrainingSegment> train_set,
                                           const AugmentOptions& aug, Rng& rng, int batch_size) {
  std::vector<SegmentAnnotation> labels;
  labels.reserve(train_set.size());
  for (const auto& s : train_set) labels.push_back(s.seg);
  const StratifiedDraw d = stratified_indices(labels, rng, batch_size);
  Batch plaque = make_batch(train_set, d.plaque_batch, aug, rng);
  Batch stenosis = make_batch(train_set, d.stenosis_batch, aug, rng);
  return {std::move(plaque), std::move(stenosis)};
}

}  // namespace coronary
