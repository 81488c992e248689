#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "coronary/geometry.hpp"
#include "coronary/labels.hpp"
#include "coronary/volume.hpp"

namespace coronary {

struct Range {
  double lo;
  double hi;
};

/// Parameters of the synthetic coronary phantom. Intensities are in HU.
struct PhantomSpec {
  std::uint64_t seed = 2018;
  int n_arteries = 3;                  // per patient
  Range length_mm{36.0, 48.0};
  double curvature_amplitude_mm = 4.0;
  Range lumen_radius_mm{1.0, 2.0};
  std::array<int, 2> lesion_count{1, 3};  // annotated segments per artery
  Range segment_length_mm{3.0, 7.0};
  double segment_gap_mm = 6.0;         // clearance between annotated segments
  double end_margin_mm = 3.0;          // clearance from the artery ends
  /// Probabilities of the 7 joint classes (see encode_joint); class 0 is an
  /// annotated plaque-free segment.
  std::array<double, kJointClasses> class_mix{0.25, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125};
  double noise_sigma = 15.0;
  double voxel_mm = 0.4;               // world-volume spacing

  /// Throws UsageError when probabilities do not sum to 1 or a range is empty.
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomSpec& s);
/// Unknown keys are rejected; missing keys keep their defaults.
void from_json(const nlohmann::json& j, PhantomSpec& s);

/// Renderer ground truth per annotated segment.
struct LesionTruth {
  double severity = 0.0;  // fractional lumen-radius reduction at the plateau
  std::vector<Vec3> calcium_centers;
  std::vector<double> calcium_radii;
};

struct PhantomArtery {
  std::string artery_id;
  std::string patient_id;
  Volume3D volume;
  Centerline centerline;  // raw, world space
  std::vector<SegmentAnnotation> annotations;
  double healthy_radius_mm = 0.0;
  std::vector<LesionTruth> truth;  // parallel to annotations
};

std::string patient_name(std::uint64_t patient_index);

/// Deterministic in (spec, patient_index); each artery draws from an RNG keyed
/// by (seed, patient_index, artery_index).
std::vector<PhantomArtery> generate_patient(const PhantomSpec& spec, std::uint64_t patient_index);

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct SplitFractions {
  double train = 0.5;
  double val = 0.1;
  double test = 0.4;
};

struct ManifestEntry {
  std::string patient_id;
  Split split;
};
using Manifest = std::vector<ManifestEntry>;

/// Patient-level split: patients are shuffled with `split_seed` and assigned
/// round(f * n) to train and val, the remainder to test.
Manifest split_patients(std::vector<std::string> patient_ids, const SplitFractions& f,
                        std::uint64_t split_seed);

/// Writes volumes/, mpr/, centerlines/, annotations/ and manifest.json under
/// out_dir. Throws UsageError when fractions do not sum to 1 and DataError when
/// a split with a positive fraction ends up empty.
Manifest export_dataset(const std::vector<PhantomArtery>& arteries, const SplitFractions& f,
                        const std::filesystem::path& out_dir, std::uint64_t split_seed);

}  // namespace coronary
