#include "coronary/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "coronary/errors.hpp"
#include "coronary/rng.hpp"
#include "coronary/volume_io.hpp"
#include "json.hpp"

namespace coronary {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

void write_annotation(const ArteryAnnotation& a, const fs::path& path) {
  json segs = json::array();
  for (const auto& s : a.segments) {
    segs.push_back({{"start_mm", s.start_mm},
                    {"end_mm", s.end_mm},
                    {"plaque", s.plaque},
                    {"stenosis", s.stenosis}});
  }
  write_json({{"artery_id", a.artery_id}, {"patient_id", a.patient_id}, {"segments", segs}},
             path);
}

ArteryAnnotation read_annotation(const fs::path& path) {
  const json j = read_json(path);
  ArteryAnnotation a;
  try {
    a.artery_id = j.at("artery_id").get<std::string>();
    a.patient_id = j.at("patient_id").get<std::string>();
    for (const auto& s : j.at("segments")) {
      SegmentAnnotation seg{s.at("start_mm").get<double>(), s.at("end_mm").get<double>(),
                            s.at("plaque").get<int>(), s.at("stenosis").get<int>()};
      seg.validate();
      a.segments.push_back(seg);
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return a;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  json j = json::array();
  for (const auto& e : m) {
    j.push_back({{"patient_id", e.patient_id}, {"split", std::string(split_name(e.split))}});
  }
  write_json(j, path);
}

Manifest read_manifest(const fs::path& path) {
  const json j = read_json(path);
  Manifest m;
  try {
    for (const auto& e : j) {
      m.push_back({e.at("patient_id").get<std::string>(), parse_split(e.at("split").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return m;
}

Manifest split_patients(std::vector<std::string> patient_ids, const SplitFractions& f,
                        std::uint64_t split_seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw UsageError("split fractions must be non-negative and sum to 1");
  }
  std::sort(patient_ids.begin(), patient_ids.end());
  patient_ids.erase(std::unique(patient_ids.begin(), patient_ids.end()), patient_ids.end());
  if (patient_ids.empty()) throw DataError("no patients to split");

  Rng rng = keyed_rng(split_seed, 0x5u);
  std::shuffle(patient_ids.begin(), patient_ids.end(), rng);

  const auto n = static_cast<double>(patient_ids.size());
  const auto n_train = static_cast<std::size_t>(std::lround(f.train * n));
  const auto n_val = std::min(patient_ids.size() - n_train,
                              static_cast<std::size_t>(std::lround(f.val * n)));
  const std::size_t n_test = patient_ids.size() - n_train - n_val;
  if ((f.train > 0 && n_train == 0) || (f.val > 0 && n_val == 0) || (f.test > 0 && n_test == 0)) {
    throw DataError("empty split: " + std::to_string(patient_ids.size()) +
                    " patients cannot fill every split with a positive fraction");
  }

  Manifest m;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    const Split s = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
    m.push_back({patient_ids[i], s});
  }
  std::sort(m.begin(), m.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.patient_id < b.patient_id; });
  return m;
}

Manifest export_dataset(const std::vector<PhantomArtery>& arteries, const SplitFractions& f,
                        const fs::path& out_dir, std::uint64_t split_seed) {
  std::vector<std::string> ids;
  for (const auto& a : arteries) ids.push_back(a.patient_id);
  const Manifest manifest = split_patients(ids, f, split_seed);

  for (const char* sub : {"volumes", "mpr", "centerlines", "annotations"}) {
    fs::create_directories(out_dir / sub);
  }
  for (const auto& a : arteries) {
    write_volume(a.volume, out_dir / "volumes" / (a.artery_id + ".vol"));
    write_centerline(a.centerline, out_dir / "centerlines" / (a.artery_id + ".txt"));
    write_volume(reconstruct_mpr(a.volume, resample_centerline(a.centerline)),
                 out_dir / "mpr" / (a.artery_id + ".vol"));
    write_annotation({a.artery_id, a.patient_id, a.annotations},
                     out_dir / "annotations" / (a.artery_id + ".json"));
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

DatasetArtery prepare_artery(const PhantomArtery& a, Split split) {
  Centerline c = resample_centerline(a.centerline);
  Volume3D mpr = reconstruct_mpr(a.volume, c);
  return DatasetArtery{a.artery_id, a.patient_id, split, std::move(mpr), std::move(c), a.annotations};
}

std::vector<DatasetArtery> load_dataset(const fs::path& dir, std::optional<Split> only) {
  const Manifest manifest = read_manifest(dir / "manifest.json");
  std::map<std::string, Split> split_of;
  for (const auto& e : manifest) split_of[e.patient_id] = e.split;

  std::set<fs::path> files;
  const fs::path ann_dir = dir / "annotations";
  if (!fs::is_directory(ann_dir)) throw DataError("missing directory " + ann_dir.string());
  for (const auto& entry : fs::directory_iterator(ann_dir)) {
    if (entry.path().extension() == ".json") files.insert(entry.path());
  }

  std::vector<DatasetArtery> out;
  for (const auto& path : files) {
    ArteryAnnotation ann = read_annotation(path);
    const auto it = split_of.find(ann.patient_id);
    if (it == split_of.end()) continue;
    if (only && it->second != *only) continue;

    Centerline c = resample_centerline(read_centerline(dir / "centerlines" / (ann.artery_id + ".txt")));
    const fs::path mpr_path = dir / "mpr" / (ann.artery_id + ".vol");
    Volume3D mpr = fs::exists(mpr_path)
                       ? read_volume(mpr_path)
                       : reconstruct_mpr(read_volume(dir / "volumes" / (ann.artery_id + ".vol")), c);
    if (mpr.dims()[2] != static_cast<int>(c.size())) {
      throw DataError("MPR length of " + ann.artery_id + " does not match its centerline");
    }
    out.push_back({ann.artery_id, ann.patient_id, it->second, std::move(mpr), std::move(c),
                   std::move(ann.segments)});
  }
  return out;
}

}  // namespace coronary
