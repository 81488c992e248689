#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coronary/geometry.hpp"
#include "coronary/labels.hpp"
#include "coronary/phantom.hpp"
#include "coronary/volume.hpp"

namespace coronary {

/// Contents of one annotation JSON file.
struct ArteryAnnotation {
  std::string artery_id;
  std::string patient_id;
  std::vector<SegmentAnnotation> segments;
};

void write_annotation(const ArteryAnnotation& a, const std::filesystem::path& path);
ArteryAnnotation read_annotation(const std::filesystem::path& path);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// An artery ready for sampling: straightened MPR plus its 0.3 mm centerline.
struct DatasetArtery {
  std::string artery_id;
  std::string patient_id;
  Split split = Split::Train;
  Volume3D mpr;
  Centerline centerline;
  std::vector<SegmentAnnotation> segments;
};

/// Builds the MPR (45 x 45 cross-section) from the world volume and raw
/// centerline of a phantom artery.
DatasetArtery prepare_artery(const PhantomArtery& a, Split split);

/// Loads every artery listed under annotations/ whose patient is in the
/// manifest. Uses mpr/<id>.vol when present, otherwise reconstructs it from
/// volumes/ and centerlines/.
std::vector<DatasetArtery> load_dataset(const std::filesystem::path& dir,
                                        std::optional<Split> only = std::nullopt);

}  // namespace coronary
