#include "coronary/labels.hpp"

#include <string>

#include "coronary/errors.hpp"

namespace coronary {

void SegmentAnnotation::validate() const {
  if (!(start_mm < end_mm)) {
    throw DataError("segment start_mm must be < end_mm (" + std::to_string(start_mm) + ", " +
                    std::to_string(end_mm) + ")");
  }
  if (plaque < 0 || plaque >= kPlaqueClasses) {
    throw DataError("plaque code out of range: " + std::to_string(plaque));
  }
  if (stenosis < 0 || stenosis >= kStenosisClasses) {
    throw DataError("stenosis code out of range: " + std::to_string(stenosis));
  }
  if (plaque == 0 && stenosis != 0) {
    throw DataError("inconsistent segment: stenosis without plaque");
  }
}

int encode_joint(int plaque, int stenosis) {
  if (plaque == 0 && stenosis == 0) return 0;
  if (plaque < 1 || plaque > 3 || stenosis < 1 || stenosis > 2) {
    throw DataError("no joint class for (plaque=" + std::to_string(plaque) +
                    ", stenosis=" + std::to_string(stenosis) + ")");
  }
  return (stenosis - 1) * 3 + plaque;
}

JointLabel decode_joint(int joint) {
  if (joint == 0) return {0, 0};
  if (joint < 0 || joint >= kJointClasses) {
    throw DataError("joint class out of range: " + std::to_string(joint));
  }
  return {(joint - 1) % 3 + 1, (joint - 1) / 3 + 1};
}

}  // namespace coronary
