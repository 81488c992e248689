#include <cstdio>
#include <fstream>
#include <sstream>

#include "coronary/errors.hpp"
#include "coronary/metrics.hpp"

namespace coronary {

namespace {

nlohmann::json matrix_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < cm.classes(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < cm.classes(); ++c) row.push_back(cm.at(r, c));
    rows.push_back(row);
  }
  return {{"classes", cm.class_names()}, {"counts", rows}};
}

nlohmann::json level_json(const LevelMetrics& m) {
  nlohmann::json j{{"confusion", matrix_json(m.cm)},
                   {"accuracy", m.accuracy},
                   {"macro_f1", m.macro_f1},
                   {"kappa_weighting", m.weighting == KappaWeighting::None ? "none" : "linear"}};
  j["kappa"] = m.kappa ? nlohmann::json(*m.kappa) : nlohmann::json(nullptr);
  return j;
}

void dump_level(std::ostream& os, const std::string& title, const LevelMetrics& m) {
  os << title << "\n";
  const auto& cm = m.cm;
  std::size_t width = 10;
  for (const auto& n : cm.class_names()) width = std::max(width, n.size() + 2);
  char buf[64];
  os << std::string(width, ' ');
  for (const auto& n : cm.class_names()) {
    std::snprintf(buf, sizeof(buf), "%*s", static_cast<int>(width), n.c_str());
    os << buf;
  }
  os << "\n";
  for (int r = 0; r < cm.classes(); ++r) {
    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(width), cm.class_names()[static_cast<std::size_t>(r)].c_str());
    os << buf;
    for (int c = 0; c < cm.classes(); ++c) {
      std::snprintf(buf, sizeof(buf), "%*ld", static_cast<int>(width), cm.at(r, c));
      os << buf;
    }
    os << "\n";
  }
  std::snprintf(buf, sizeof(buf), "  accuracy %.3f  macro-F1 %.3f  ", m.accuracy, m.macro_f1);
  os << buf << (m.weighting == KappaWeighting::Linear ? "linear kappa " : "kappa ");
  if (m.kappa) {
    std::snprintf(buf, sizeof(buf), "%.3f", *m.kappa);
    os << buf;
  } else {
    os << "undefined";
  }
  os << "\n\n";
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["counts"] = {{"segments", r.segments}, {"arteries", r.arteries}, {"patients", r.patients}};
  j["segment"] = {{"plaque", level_json(r.segment_plaque)}, {"stenosis", level_json(r.segment_stenosis)}};
  j["artery"] = {{"stenosis", level_json(r.artery_stenosis)}};
  j["patient"] = {{"stenosis", level_json(r.patient_stenosis)}};
  j["detection"] = {{"segment_plaque", level_json(r.plaque_detection)},
                    {"segment_significant_stenosis", level_json(r.segment_significance)},
                    {"artery_significant_stenosis", level_json(r.artery_significance)},
                    {"patient_significant_stenosis", level_json(r.patient_significance)}};
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [g, acc] : r.group_accuracy) groups[g] = {{"plaque_accuracy", acc.first}, {"stenosis_accuracy", acc.second}};
  j["by_artery_group"] = groups;
  j["inconsistency"] = {{"points", r.inconsistent_points}, {"total_points", r.total_points}, {"rate", r.inconsistency_rate}};
  return j;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << r.segments << " segments, " << r.arteries << " arteries, " << r.patients << " patients\n\n";
  dump_level(os, "Segment level, plaque type", r.segment_plaque);
  dump_level(os, "Segment level, stenosis", r.segment_stenosis);
  dump_level(os, "Artery level, stenosis", r.artery_stenosis);
  dump_level(os, "Patient level, stenosis", r.patient_stenosis);
  dump_level(os, "Plaque detection (segment)", r.plaque_detection);
  dump_level(os, "Significant stenosis detection (segment)", r.segment_significance);
  dump_level(os, "Significant stenosis detection (artery)", r.artery_significance);
  dump_level(os, "Significant stenosis detection (patient)", r.patient_significance);
  if (!r.group_accuracy.empty()) {
    os << "Segment accuracy by artery group\n";
    char buf[96];
    for (const auto& [g, acc] : r.group_accuracy) {
      std::snprintf(buf, sizeof(buf), "  %-8s plaque %.3f  stenosis %.3f\n", g.c_str(), acc.first, acc.second);
      os << buf;
    }
    os << "\n";
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "Inconsistent points (no plaque, stenosis): %ld / %ld (%.2f%%)\n", r.inconsistent_points,
                r.total_points, 100.0 * r.inconsistency_rate);
  os << buf;
  return os.str();
}

void write_matrix_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "reference";
  for (const auto& n : cm.class_names()) os << ',' << n;
  os << '\n';
  for (int r = 0; r < cm.classes(); ++r) {
    os << cm.class_names()[static_cast<std::size_t>(r)];
    for (int c = 0; c < cm.classes(); ++c) os << ',' << cm.at(r, c);
    os << '\n';
  }
  if (!os) throw DataError("failed writing " + path.string());
}

}  // namespace coronary
