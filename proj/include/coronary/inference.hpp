#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coronary/geometry.hpp"
#include "coronary/labels.hpp"
#include "coronary/nn/network.hpp"
#include "coronary/volume.hpp"

namespace coronary {

struct TrackPoint {
  double arc_mm = 0.0;
  std::array<double, kPlaqueClasses> p_plaque{};
  std::array<double, kStenosisClasses> p_stenosis{};
  int plaque = 0;
  int stenosis = 0;
};

/// One record per centerline point, in arc order.
struct PredictionTrack {
  std::string artery_id;
  std::vector<TrackPoint> points;

  std::size_t size() const { return points.size(); }
};

/// Labels every centerline point with the 5-cube window around it (translated
/// inward near the ends). `centerline` must be the 0.3 mm resampled line the
/// MPR was built from. CNN features are computed once per point and shared by
/// the overlapping windows; `threads` splits that work.
PredictionTrack label_artery(const nn::Network<float>& net, const Volume3D& mpr, const Centerline& centerline,
                             int threads = 1);

/// CSV with header arc_mm,p_np,p_ncalc,p_mixed,p_calc,q_ns,q_nonsig,q_sig,plaque,stenosis.
void export_track(const PredictionTrack& track, const std::filesystem::path& csv,
                  const std::optional<std::filesystem::path>& svg = std::nullopt);
PredictionTrack read_track(const std::filesystem::path& csv);
/// Line plot of the seven probability curves.
void write_track_svg(const PredictionTrack& track, const std::filesystem::path& svg);

/// Fraction of points labeled plaque = 0 with stenosis != 0.
double inconsistency_rate(std::span<const PredictionTrack> tracks);

}  // namespace coronary
