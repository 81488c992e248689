#include "coronary/pipeline.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

namespace coronary {

std::vector<TrainingSegment> collect_segments(const std::vector<DatasetArtery>& arteries,
                                              std::optional<Split> split) {
  std::vector<TrainingSegment> out;
  for (const auto& a : arteries) {
    if (split && a.split != *split) continue;
    for (const auto& s : a.segments) out.push_back({&a.mpr, s});
  }
  return out;
}

std::vector<ArteryAnnotation> collect_annotations(const std::vector<DatasetArtery>& arteries,
                                                  std::optional<Split> split) {
  std::vector<ArteryAnnotation> out;
  for (const auto& a : arteries) {
    if (split && a.split != *split) continue;
    out.push_back({a.artery_id, a.patient_id, a.segments});
  }
  return out;
}

std::map<std::string, PredictionTrack> label_arteries(const nn::Network<float>& net,
                                                      const std::vector<DatasetArtery>& arteries,
                                                      std::optional<Split> split, int threads) {
  std::map<std::string, PredictionTrack> tracks;
  for (const auto& a : arteries) {
    if (split && a.split != *split) continue;
    PredictionTrack t = label_artery(net, a.mpr, a.centerline, threads);
    t.artery_id = a.artery_id;
    tracks.emplace(a.artery_id, std::move(t));
  }
  return tracks;
}

std::vector<AblationRow> run_ablation(const std::vector<DatasetArtery>& arteries, const TrainConfig& cfg,
                                      std::ostream* log) {
  const auto train_set = collect_segments(arteries, Split::Train);
  const auto val_set = collect_segments(arteries, Split::Val);
  const auto test_ann = collect_annotations(arteries, Split::Test);
  std::vector<AblationRow> rows;
  for (auto kind : {nn::ModelKind::Rcnn, nn::ModelKind::RcnnSingle, nn::ModelKind::Cnn, nn::ModelKind::CnnSingle}) {
    TrainConfig c = cfg;
    c.model = std::string(nn::kind_name(kind));
    nn::Architecture arch;
    arch.kind = kind;
    if (log) *log << "== training " << c.model << " ==" << std::endl;
    TrainResult r = train(arch, train_set, val_set, c, log);
    const auto tracks = label_arteries(r.net, arteries, Split::Test, c.threads);
    rows.push_back({c.model, nn::parameter_count(arch), evaluate(tracks, test_ann), r.curve});
  }
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-12s %9s | %8s %8s %8s | %8s %8s %8s\n", "model", "params", "P acc", "P F1",
                "P kappa", "S acc", "S F1", "S kappa");
  os << buf;
  auto k = [](const LevelMetrics& m) { return m.kappa ? *m.kappa : std::nan(""); };
  for (const auto& r : rows) {
    const auto& p = r.report.segment_plaque;
    const auto& s = r.report.segment_stenosis;
    std::snprintf(buf, sizeof(buf), "%-12s %9ld | %8.3f %8.3f %8.3f | %8.3f %8.3f %8.3f\n", r.model.c_str(),
                  r.parameters, p.accuracy, p.macro_f1, k(p), s.accuracy, s.macro_f1, k(s));
    os << buf;
  }
  return os.str();
}

}  // namespace coronary
