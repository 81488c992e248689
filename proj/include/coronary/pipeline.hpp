#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coronary/dataset.hpp"
#include "coronary/inference.hpp"
#include "coronary/metrics.hpp"
#include "coronary/training.hpp"

namespace coronary {

/// Segments of the arteries in `split` (all arteries when empty). The
/// returned entries point into `arteries`.
std::vector<TrainingSegment> collect_segments(const std::vector<DatasetArtery>& arteries,
                                              std::optional<Split> split);
std::vector<ArteryAnnotation> collect_annotations(const std::vector<DatasetArtery>& arteries,
                                                  std::optional<Split> split);

std::map<std::string, PredictionTrack> label_arteries(const nn::Network<float>& net,
                                                      const std::vector<DatasetArtery>& arteries,
                                                      std::optional<Split> split, int threads = 1);

struct AblationRow {
  std::string model;
  long parameters = 0;
  EvalReport report;
  LearningCurve curve;
};

/// Trains the four variants on the training split with the same budget and
/// evaluates each on the test split.
std::vector<AblationRow> run_ablation(const std::vector<DatasetArtery>& arteries, const TrainConfig& cfg,
                                      std::ostream* log = nullptr);
std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace coronary
