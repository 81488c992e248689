#include "coronary/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coronary/errors.hpp"

namespace coronary {

ConfusionMatrix::ConfusionMatrix(int k, std::vector<std::string> names)
    : k_(k), names_(std::move(names)), counts_(static_cast<std::size_t>(k) * k, 0) {
  if (k < 2) throw UsageError("confusion matrix needs at least 2 classes");
  if (names_.empty()) {
    for (int i = 0; i < k; ++i) names_.push_back(std::to_string(i));
  }
  if (static_cast<int>(names_.size()) != k) throw UsageError("class name count does not match matrix size");
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<long>>& rows,
                                           std::vector<std::string> names) {
  ConfusionMatrix cm(static_cast<int>(rows.size()), std::move(names));
  for (int r = 0; r < cm.k_; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != cm.k_) {
      throw UsageError("confusion matrix must be square");
    }
    for (int c = 0; c < cm.k_; ++c) cm.add(r, c, rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
  }
  return cm;
}

ConfusionMatrix ConfusionMatrix::for_task(Task t) {
  if (t == Task::Plaque) return ConfusionMatrix(kPlaqueClasses, {kPlaqueNames.begin(), kPlaqueNames.end()});
  return ConfusionMatrix(kStenosisClasses, {kStenosisNames.begin(), kStenosisNames.end()});
}

void ConfusionMatrix::add(int ref, int pred, long n) {
  if (ref < 0 || ref >= k_ || pred < 0 || pred >= k_) throw UsageError("class index out of range");
  if (n < 0) throw UsageError("negative count");
  counts_[static_cast<std::size_t>(ref * k_ + pred)] += n;
}

long ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0L); }

long ConfusionMatrix::trace() const {
  long t = 0;
  for (int i = 0; i < k_; ++i) t += at(i, i);
  return t;
}

long ConfusionMatrix::row_sum(int r) const {
  long s = 0;
  for (int c = 0; c < k_; ++c) s += at(r, c);
  return s;
}

long ConfusionMatrix::col_sum(int c) const {
  long s = 0;
  for (int r = 0; r < k_; ++r) s += at(r, c);
  return s;
}

ConfusionMatrix ConfusionMatrix::collapse(const std::vector<int>& map, std::vector<std::string> names) const {
  if (static_cast<int>(map.size()) != k_) throw UsageError("collapse map size mismatch");
  const int k = static_cast<int>(names.size());
  ConfusionMatrix out(k, std::move(names));
  for (int r = 0; r < k_; ++r) {
    for (int c = 0; c < k_; ++c) out.add(map[static_cast<std::size_t>(r)], map[static_cast<std::size_t>(c)], at(r, c));
  }
  return out;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.classes() == 0 || cm.total() == 0) throw UsageError("empty confusion matrix");
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

double macro_f1(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0.0;
  for (int i = 0; i < cm.classes(); ++i) {
    const double tp = static_cast<double>(cm.at(i, i));
    const long pc = cm.col_sum(i), rc = cm.row_sum(i);
    const double p = pc > 0 ? tp / static_cast<double>(pc) : 0.0;
    const double r = rc > 0 ? tp / static_cast<double>(rc) : 0.0;
    sum += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return sum / cm.classes();
}

double cohen_kappa(const ConfusionMatrix& cm, KappaWeighting w) {
  require_nonempty(cm);
  const int k = cm.classes();
  const double n = static_cast<double>(cm.total());
  double observed = 0.0, expected = 0.0;  // weighted disagreement
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double wij = w == KappaWeighting::None ? (i == j ? 0.0 : 1.0)
                                                   : std::abs(i - j) / static_cast<double>(k - 1);
      observed += wij * static_cast<double>(cm.at(i, j)) / n;
      expected += wij * static_cast<double>(cm.row_sum(i)) * static_cast<double>(cm.col_sum(j)) / (n * n);
    }
  }
  // For unweighted kappa, expected disagreement = 1 - p_e.
  if (expected <= 1e-15) throw NumericError("kappa undefined: chance agreement is 1");
  return 1.0 - observed / expected;
}

int match_segment(const PredictionTrack& track, const SegmentAnnotation& seg, Task task) {
  if (track.points.size() < 2) throw DataError("track of " + track.artery_id + " has fewer than 2 points");
  const double first = track.points.front().arc_mm;
  const double last = track.points.back().arc_mm;
  const double step = (last - first) / static_cast<double>(track.points.size() - 1);
  const double tol = 0.5 * step;
  if (seg.start_mm < first - tol || seg.end_mm > last + tol) {
    throw DataError("segment [" + std::to_string(seg.start_mm) + ", " + std::to_string(seg.end_mm) +
                    "] mm lies outside the track of " + track.artery_id);
  }
  const int k = task == Task::Plaque ? kPlaqueClasses : kStenosisClasses;
  const int ref = task == Task::Plaque ? seg.plaque : seg.stenosis;

  std::vector<int> coverage(static_cast<std::size_t>(k), 0);
  int ref_run = 0, run = 0, inside = 0;
  for (const auto& p : track.points) {
    if (p.arc_mm < seg.start_mm - 1e-9 || p.arc_mm > seg.end_mm + 1e-9) continue;
    ++inside;
    const int lab = task == Task::Plaque ? p.plaque : p.stenosis;
    ++coverage[static_cast<std::size_t>(lab)];
    run = lab == ref ? run + 1 : 0;
    ref_run = std::max(ref_run, run);
  }
  if (inside == 0) throw DataError("no track points inside segment of " + track.artery_id);

  if (coverage[0] == inside) return 0;
  if (ref != 0 && ref_run * step >= 1.0 - 1e-9) return ref;
  int best = 1;
  for (int c = 2; c < k; ++c) {
    if (coverage[static_cast<std::size_t>(c)] > coverage[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

int aggregate_artery(std::span<const int> labels) {
  int m = 0;
  for (int v : labels) m = std::max(m, v);
  return m;
}

int aggregate_artery(const PredictionTrack& track) {
  int m = 0;
  for (const auto& p : track.points) m = std::max(m, p.stenosis);
  return m;
}

int aggregate_patient(std::span<const int> artery_classes) {
  if (artery_classes.empty()) throw UsageError("patient has no arteries");
  return *std::max_element(artery_classes.begin(), artery_classes.end());
}

LevelMetrics level_metrics(const ConfusionMatrix& cm, KappaWeighting w) {
  LevelMetrics m;
  m.cm = cm;
  m.weighting = w;
  if (cm.total() == 0) return m;
  m.accuracy = accuracy(cm);
  m.macro_f1 = macro_f1(cm);
  try {
    m.kappa = cohen_kappa(cm, w);
  } catch (const NumericError&) {
    m.kappa.reset();
  }
  return m;
}

namespace {

const std::vector<int> kPlaqueBinary{0, 1, 1, 1};
const std::vector<int> kSignificanceBinary{0, 0, 1};

}  // namespace

EvalReport report_from_matrices(const ConfusionMatrix& seg_plaque, const ConfusionMatrix& seg_stenosis,
                                const ConfusionMatrix& artery_stenosis, const ConfusionMatrix& patient_stenosis) {
  EvalReport r;
  r.segment_plaque = level_metrics(seg_plaque, KappaWeighting::None);
  r.segment_stenosis = level_metrics(seg_stenosis, KappaWeighting::Linear);
  r.artery_stenosis = level_metrics(artery_stenosis, KappaWeighting::Linear);
  r.patient_stenosis = level_metrics(patient_stenosis, KappaWeighting::Linear);
  r.plaque_detection = level_metrics(seg_plaque.collapse(kPlaqueBinary, {"no plaque", "plaque"}), KappaWeighting::None);
  const std::vector<std::string> sig{"not significant", "significant"};
  r.segment_significance = level_metrics(seg_stenosis.collapse(kSignificanceBinary, sig), KappaWeighting::None);
  r.artery_significance = level_metrics(artery_stenosis.collapse(kSignificanceBinary, sig), KappaWeighting::None);
  r.patient_significance = level_metrics(patient_stenosis.collapse(kSignificanceBinary, sig), KappaWeighting::None);
  r.segments = static_cast<int>(seg_plaque.total());
  r.arteries = static_cast<int>(artery_stenosis.total());
  r.patients = static_cast<int>(patient_stenosis.total());
  return r;
}

EvalReport evaluate(const std::map<std::string, PredictionTrack>& tracks,
                    std::span<const ArteryAnnotation> annotations) {
  ConfusionMatrix seg_p = ConfusionMatrix::for_task(Task::Plaque);
  ConfusionMatrix seg_s = ConfusionMatrix::for_task(Task::Stenosis);
  ConfusionMatrix art_s = ConfusionMatrix::for_task(Task::Stenosis);
  ConfusionMatrix pat_s = ConfusionMatrix::for_task(Task::Stenosis);
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> patients;  // ref, pred per artery
  std::map<std::string, std::array<long, 3>> groups;                                 // p ok, s ok, n
  long bad = 0, total = 0;

  for (const auto& a : annotations) {
    const auto it = tracks.find(a.artery_id);
    if (it == tracks.end()) throw DataError("no prediction track for artery " + a.artery_id);
    const PredictionTrack& t = it->second;
    const auto cut = a.artery_id.rfind('_');
    const std::string group = cut == std::string::npos ? a.artery_id : a.artery_id.substr(cut + 1);
    auto& g = groups[group];
    int ref_artery = 0;
    for (const auto& s : a.segments) {
      const int pp = match_segment(t, s, Task::Plaque);
      const int ps = match_segment(t, s, Task::Stenosis);
      seg_p.add(s.plaque, pp);
      seg_s.add(s.stenosis, ps);
      g[0] += pp == s.plaque;
      g[1] += ps == s.stenosis;
      ++g[2];
      ref_artery = std::max(ref_artery, s.stenosis);
    }
    const int pred_artery = aggregate_artery(t);
    art_s.add(ref_artery, pred_artery);
    patients[a.patient_id].first.push_back(ref_artery);
    patients[a.patient_id].second.push_back(pred_artery);
    for (const auto& p : t.points) {
      ++total;
      bad += p.plaque == 0 && p.stenosis != 0;
    }
  }
  for (const auto& [id, v] : patients) pat_s.add(aggregate_patient(v.first), aggregate_patient(v.second));

  EvalReport r = report_from_matrices(seg_p, seg_s, art_s, pat_s);
  for (const auto& [name, g] : groups) {
    if (g[2] > 0) r.group_accuracy[name] = {double(g[0]) / double(g[2]), double(g[1]) / double(g[2])};
  }
  r.inconsistent_points = bad;
  r.total_points = total;
  r.inconsistency_rate = total > 0 ? double(bad) / double(total) : 0.0;
  return r;
}

}  // namespace coronary
