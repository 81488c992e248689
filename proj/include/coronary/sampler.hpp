#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "coronary/labels.hpp"
#include "coronary/rng.hpp"
#include "coronary/volume.hpp"

namespace coronary {

inline constexpr int kCubeSize = 25;
inline constexpr int kCubeVoxels = kCubeSize * kCubeSize * kCubeSize;
inline constexpr int kCubeStrideVox = 5;
inline constexpr int kMaxSequenceLength = 25;
inline constexpr int kWindowLength = 5;
inline constexpr int kWindowHalfSpanVox = kCubeStrideVox * (kWindowLength / 2);  // 10
inline constexpr int kBatchSize = 36;

inline constexpr double kWindowLowHu = -300.0;
inline constexpr double kWindowHighHu = 1300.0;

/// Clamps to [-300, 1300] HU and maps linearly onto [0, 1].
inline double normalize(double hu) {
  const double c = hu < kWindowLowHu ? kWindowLowHu : (hu > kWindowHighHu ? kWindowHighHu : hu);
  return (c - kWindowLowHu) / (kWindowHighHu - kWindowLowHu);
}

/// 25^3 normalized intensities, x-fastest (x along the MPR normal axis,
/// z along the centerline).
using Cube = std::vector<float>;

struct CubeSequence {
  std::vector<Cube> cubes;
  std::vector<double> centers_mm;       // arc position of each cube centre
  std::vector<Vec3> offsets_vox;        // per-cube origin shift (x, y, z)
  double rotation_deg = 0.0;

  std::size_t size() const { return cubes.size(); }
};

/// Samples a 25^3 cube from an MPR around arc position `center_mm`. The grid is
/// rotated by `rotation_deg` about the longitudinal axis and displaced by
/// `offset_vox`; samples outside the MPR use -1024 HU.
Cube extract_cube(const Volume3D& mpr, double center_mm, double rotation_deg,
                  const Vec3& offset_vox = Vec3::Zero());

/// Number of cubes covering a segment: min(25, max(1, ceil(L / 5))) for a
/// length of L voxels.
int sequence_length(double length_mm);

struct AugmentOptions {
  bool enabled = false;
  double max_offset_vox = 2.0;
  int max_jitter_vox = 3;
};

/// Cubes at a 5-voxel stride spanning the segment. With augmentation one
/// rotation and one longitudinal jitter are shared by the whole sequence and
/// every cube gets its own offset from the radius-2 voxel ball.
CubeSequence training_sequence(const Volume3D& mpr, const SegmentAnnotation& seg,
                               const AugmentOptions& aug, Rng& rng);

/// Point indices of the 5 window cubes around centerline index `point`,
/// translated inward when the window would leave [0, n_points).
std::array<int, kWindowLength> window_indices(int n_points, int point);

/// Fixed 5-cube window at stride 5 voxels around `point_mm`, no augmentation.
CubeSequence inference_window(const Volume3D& mpr, double point_mm);

struct TrainingSegment {
  const Volume3D* mpr = nullptr;
  SegmentAnnotation seg;
};

struct Batch {
  std::vector<CubeSequence> sequences;
  std::vector<int> plaque_targets;
  std::vector<int> stenosis_targets;

  std::size_t size() const { return sequences.size(); }
  std::vector<int> lengths() const;
};

/// Indices into `labels` for the two stratified mini-batches: 9 per plaque
/// class and 12 per stenosis class, drawn with replacement within the class.
struct StratifiedDraw {
  std::vector<std::size_t> plaque_batch;
  std::vector<std::size_t> stenosis_batch;
};
StratifiedDraw stratified_indices(std::span<const SegmentAnnotation> labels, Rng& rng,
                                  int batch_size = kBatchSize);

std::pair<Batch, Batch> stratified_batches(std::span<const TrainingSegment> train_set,
                                           const AugmentOptions& aug, Rng& rng,
                                           int batch_size = kBatchSize);

/// Builds a Batch from segments in the given order.
Batch make_batch(std::span<const TrainingSegment> segs, std::span<const std::size_t> order,
                 const AugmentOptions& aug, Rng& rng);

}  // namespace coronary
