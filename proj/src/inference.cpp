#include "coronary/inference.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "coronary/errors.hpp"
#include "coronary/sampler.hpp"

namespace coronary {

namespace {

constexpr const char* kHeader = "arc_mm,p_np,p_ncalc,p_mixed,p_calc,q_ns,q_nonsig,q_sig,plaque,stenosis";
constexpr int kFeatureChunk = 16;

}  // namespace

PredictionTrack label_artery(const nn::Network<float>& net, const Volume3D& mpr, const Centerline& c,
                             int threads) {
  const int n = static_cast<int>(c.size());
  if (mpr.dims()[2] != n) {
    throw DataError("MPR has " + std::to_string(mpr.dims()[2]) + " slices but the centerline has " +
                    std::to_string(n) + " points");
  }
  window_indices(n, 0);  // throws for arteries shorter than the window footprint
  if (net.arch().cube != kCubeSize) throw UsageError("inference requires 25^3 cubes");

  const int f = net.arch().feature_dim();
  std::vector<float> feats(static_cast<std::size_t>(n) * f);
  const double z0 = mpr.origin().z();
  const double step = mpr.spacing().z();
  auto work = [&](int first, int last) {
    for (int b = first; b < last; b += kFeatureChunk) {
      const int e = std::min(last, b + kFeatureChunk);
      std::vector<Cube> cubes;
      for (int i = b; i < e; ++i) cubes.push_back(extract_cube(mpr, z0 + i * step, 0.0));
      std::vector<const Cube*> refs;
      for (const auto& cb : cubes) refs.push_back(&cb);
      const std::vector<float> rows = net.features(refs);
      std::copy(rows.begin(), rows.end(), feats.begin() + static_cast<std::ptrdiff_t>(b) * f);
    }
  };
  const int t = std::clamp(threads, 1, n);
  if (t == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const int per = (n + t - 1) / t;
    for (int k = 0; k < t; ++k) {
      const int a = k * per, e = std::min(n, a + per);
      if (a < e) pool.emplace_back(work, a, e);
    }
    for (auto& th : pool) th.join();
  }

  PredictionTrack track;
  track.points.resize(static_cast<std::size_t>(n));
  std::vector<float> rows(static_cast<std::size_t>(kWindowLength) * f);
  for (int p = 0; p < n; ++p) {
    const auto idx = window_indices(n, p);
    for (int k = 0; k < kWindowLength; ++k) {
      std::copy_n(feats.begin() + static_cast<std::ptrdiff_t>(idx[static_cast<std::size_t>(k)]) * f, f,
                  rows.begin() + static_cast<std::ptrdiff_t>(k) * f);
    }
    const nn::Logits<float> l = net.head(rows, kWindowLength);
    const nn::HeadOutput h = nn::to_head_output(nn::Logits<double>{{l.plaque.begin(), l.plaque.end()},
                                                                   {l.stenosis.begin(), l.stenosis.end()},
                                                                   {l.joint.begin(), l.joint.end()}});
    TrackPoint& tp = track.points[static_cast<std::size_t>(p)];
    tp.arc_mm = c.arc()[static_cast<std::size_t>(p)];
    tp.p_plaque = h.p_plaque;
    tp.p_stenosis = h.p_stenosis;
    tp.plaque = h.plaque_label();
    tp.stenosis = h.stenosis_label();
  }
  return track;
}

void export_track(const PredictionTrack& track, const std::filesystem::path& csv,
                  const std::optional<std::filesystem::path>& svg) {
  std::ofstream os(csv);
  if (!os) throw DataError("cannot open " + csv.string() + " for writing");
  os.precision(std::numeric_limits<double>::max_digits10);
  os << kHeader << '\n';
  for (const auto& p : track.points) {
    os << p.arc_mm;
    for (double v : p.p_plaque) os << ',' << v;
    for (double v : p.p_stenosis) os << ',' << v;
    os << ',' << p.plaque << ',' << p.stenosis << '\n';
  }
  if (!os) throw DataError("failed writing " + csv.string());
  if (svg) write_track_svg(track, *svg);
}

PredictionTrack read_track(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw DataError("cannot open track " + csv.string());
  std::string line;
  if (!std::getline(is, line) || line != kHeader) throw DataError(csv.string() + ": unexpected track header");
  PredictionTrack t;
  t.artery_id = csv.stem().string();
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    TrackPoint p;
    ss >> p.arc_mm;
    for (auto& v : p.p_plaque) ss >> v;
    for (auto& v : p.p_stenosis) ss >> v;
    ss >> p.plaque >> p.stenosis;
    if (!ss || p.plaque < 0 || p.plaque >= kPlaqueClasses || p.stenosis < 0 || p.stenosis >= kStenosisClasses) {
      throw DataError(csv.string() + ":" + std::to_string(lineno) + ": malformed track row");
    }
    if (!t.points.empty() && !(p.arc_mm > t.points.back().arc_mm)) {
      throw DataError(csv.string() + ":" + std::to_string(lineno) + ": arc positions must increase");
    }
    t.points.push_back(p);
  }
  return t;
}

void write_track_svg(const PredictionTrack& track, const std::filesystem::path& svg) {
  std::ofstream os(svg);
  if (!os) throw DataError("cannot open " + svg.string() + " for writing");
  const double w = 800, h = 360, pad = 40;
  const double a0 = track.points.empty() ? 0.0 : track.points.front().arc_mm;
  const double a1 = track.points.empty() ? 1.0 : std::max(track.points.back().arc_mm, a0 + 1e-9);
  auto x = [&](double arc) { return pad + (arc - a0) / (a1 - a0) * (w - 2 * pad); };
  auto y = [&](double p) { return h - pad - p * (h - 2 * pad); };
  static const std::array<const char*, 7> names = {"no plaque", "non-calcified", "mixed", "calcified",
                                                   "no stenosis", "non-significant", "significant"};
  static const std::array<const char*, 7> colors = {"#777777", "#1f77b4", "#9467bd", "#d62728",
                                                    "#2ca02c", "#ff7f0e", "#8c564b"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << y(0) << "\" x2=\"" << w - pad << "\" y2=\"" << y(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << y(0) << "\" x2=\"" << pad << "\" y2=\"" << y(1)
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k < 7; ++k) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[static_cast<std::size_t>(k)] << "\" points=\"";
    for (const auto& p : track.points) {
      const double v = k < 4 ? p.p_plaque[static_cast<std::size_t>(k)] : p.p_stenosis[static_cast<std::size_t>(k - 4)];
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x(p.arc_mm), y(v));
      os << buf;
    }
    os << "\"><title>" << names[static_cast<std::size_t>(k)] << "</title></polyline>\n";
  }
  os << "<text x=\"" << pad << "\" y=\"" << h - 8 << "\" font-size=\"12\">arc length (mm)</text>\n";
  os << "</svg>\n";
  if (!os) throw DataError("failed writing " + svg.string());
}

double inconsistency_rate(std::span<const PredictionTrack> tracks) {
  std::size_t bad = 0, total = 0;
  for (const auto& t : tracks) {
    for (const auto& p : t.points) {
      ++total;
      bad += p.plaque == 0 && p.stenosis != 0;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(total);
}

}  // namespace coronary
