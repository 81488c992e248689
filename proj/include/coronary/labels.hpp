#pragma once

#include <array>
#include <string_view>

namespace coronary {

inline constexpr int kPlaqueClasses = 4;    // none, non-calcified, mixed, calcified
inline constexpr int kStenosisClasses = 3;  // none, non-significant, significant
inline constexpr int kJointClasses = 7;     // valid (plaque, stenosis) pairs

inline constexpr std::array<std::string_view, kPlaqueClasses> kPlaqueNames = {
    "no-plaque", "non-calcified", "mixed", "calcified"};
inline constexpr std::array<std::string_view, kStenosisClasses> kStenosisNames = {
    "no-stenosis", "non-significant", "significant"};

/// Annotated arterial stretch [start_mm, end_mm) with one label per task.
struct SegmentAnnotation {
  double start_mm = 0.0;
  double end_mm = 0.0;
  int plaque = 0;
  int stenosis = 0;

  double length_mm() const { return end_mm - start_mm; }
  /// Throws DataError when start >= end, codes are out of range, or the
  /// pair is physiologically inconsistent.
  void validate() const;
};

struct JointLabel {
  int plaque;
  int stenosis;
  bool operator==(const JointLabel&) const = default;
};

/// 0 = no plaque; 1..3 = plaque 1..3 with non-significant stenosis;
/// 4..6 = plaque 1..3 with significant stenosis.
int encode_joint(int plaque, int stenosis);
JointLabel decode_joint(int joint);

}  // namespace coronary
