#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coronary/dataset.hpp"
#include "coronary/inference.hpp"
#include "coronary/labels.hpp"
#include "json.hpp"

namespace coronary {

enum class Task { Plaque, Stenosis };

/// k x k counts, reference on rows and automatic on columns.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  ConfusionMatrix(int k, std::vector<std::string> class_names);
  /// From explicit rows; class names default to "0".."k-1".
  static ConfusionMatrix from_rows(const std::vector<std::vector<long>>& rows,
                                   std::vector<std::string> class_names = {});
  static ConfusionMatrix for_task(Task t);

  int classes() const { return k_; }
  const std::vector<std::string>& class_names() const { return names_; }
  long at(int ref, int pred) const { return counts_[static_cast<std::size_t>(ref * k_ + pred)]; }
  void add(int ref, int pred, long n = 1);
  long total() const;
  long trace() const;
  long row_sum(int r) const;
  long col_sum(int c) const;
  /// Maps every class through `map` into a matrix with `k` classes.
  ConfusionMatrix collapse(const std::vector<int>& map, std::vector<std::string> names) const;

 private:
  int k_ = 0;
  std::vector<std::string> names_;
  std::vector<long> counts_;
};

double accuracy(const ConfusionMatrix& cm);
/// Unweighted mean of per-class F1; a class with P + R = 0 contributes 0.
double macro_f1(const ConfusionMatrix& cm);

enum class KappaWeighting { None, Linear };
/// Throws NumericError when the chance agreement is 1 (single-class marginals).
double cohen_kappa(const ConfusionMatrix& cm, KappaWeighting w);

/// Predicted class of an annotated segment under the 1 mm contiguous-overlap
/// rule; misses are charged to the non-zero class with the longest coverage.
int match_segment(const PredictionTrack& track, const SegmentAnnotation& seg, Task task);

/// Most severe stenosis class present.
int aggregate_artery(std::span<const int> stenosis_labels);
int aggregate_artery(const PredictionTrack& track);
/// Most severe class over arteries; throws UsageError when empty.
int aggregate_patient(std::span<const int> artery_classes);

struct LevelMetrics {
  ConfusionMatrix cm;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  KappaWeighting weighting = KappaWeighting::None;
  std::optional<double> kappa;  // empty when undefined
};
LevelMetrics level_metrics(const ConfusionMatrix& cm, KappaWeighting w);

struct EvalReport {
  LevelMetrics segment_plaque;
  LevelMetrics segment_stenosis;
  LevelMetrics artery_stenosis;
  LevelMetrics patient_stenosis;
  // Binary collapses: plaque vs none; significant vs {none, non-significant}.
  LevelMetrics plaque_detection;
  LevelMetrics segment_significance;
  LevelMetrics artery_significance;
  LevelMetrics patient_significance;
  /// Segment-level accuracy per artery group (suffix of the artery id).
  std::map<std::string, std::pair<double, double>> group_accuracy;  // plaque, stenosis
  long inconsistent_points = 0;
  long total_points = 0;
  double inconsistency_rate = 0.0;
  int arteries = 0;
  int patients = 0;
  int segments = 0;
};

/// Full protocol over the annotated arteries. Throws DataError naming any
/// artery without a track.
EvalReport evaluate(const std::map<std::string, PredictionTrack>& tracks,
                    std::span<const ArteryAnnotation> annotations);

/// Builds a report from raw matrices (segment plaque, segment/artery/patient
/// stenosis).
EvalReport report_from_matrices(const ConfusionMatrix& seg_plaque, const ConfusionMatrix& seg_stenosis,
                                const ConfusionMatrix& artery_stenosis, const ConfusionMatrix& patient_stenosis);

nlohmann::json to_json(const EvalReport& r);
std::string format_report(const EvalReport& r);
void write_matrix_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);

}  // namespace coronary
