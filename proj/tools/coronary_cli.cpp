// coronary: phantom generation, MPR, training, inference and evaluation.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "coronary/dataset.hpp"
#include "coronary/errors.hpp"
#include "coronary/geometry.hpp"
#include "coronary/gradcheck.hpp"
#include "coronary/inference.hpp"
#include "coronary/metrics.hpp"
#include "coronary/nn/checkpoint.hpp"
#include "coronary/phantom.hpp"
#include "coronary/pipeline.hpp"
#include "coronary/training.hpp"
#include "coronary/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coronary;

namespace {

// ---- config keys <-> flags ----------------------------------------------------

enum class KeyType { Int, UInt, Double, Bool, String, Range, IntRange, Mix };

struct KeySpec {
  std::string key;
  KeyType type;
  std::string help;
};

std::string flag_of(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Every config key is also a flag; flags override the file.
class ConfigFlags {
 public:
  ConfigFlags(CLI::App* app, std::vector<KeySpec> keys) : keys_(std::move(keys)) {
    app->add_option("--config", config_path_, "JSON config file (flags override its keys)")->check(CLI::ExistingFile);
    for (const auto& k : keys_) {
      auto* opt = app->add_option(flag_of(k.key), values_[k.key], k.help);
      switch (k.type) {
        case KeyType::Range: opt->expected(2); opt->type_name("LO HI"); break;
        case KeyType::IntRange: opt->expected(2); opt->type_name("LO HI"); break;
        case KeyType::Mix: opt->expected(kJointClasses); opt->type_name("P0..P6"); break;
        case KeyType::Bool: opt->expected(1); opt->type_name("true|false"); break;
        default: opt->expected(1); break;
      }
    }
  }

  json resolve() const {
    json j = json::object();
    if (!config_path_.empty()) {
      std::ifstream is(config_path_);
      if (!is) throw UsageError("cannot open config " + config_path_);
      try {
        is >> j;
      } catch (const json::exception& e) {
        throw UsageError(config_path_ + ": " + e.what());
      }
      if (!j.is_object()) throw UsageError(config_path_ + ": config must be a JSON object");
    }
    for (const auto& k : keys_) {
      const auto& v = values_.at(k.key);
      if (v.empty()) continue;
      j[k.key] = convert(k, v);
    }
    return j;
  }

 private:
  static json convert(const KeySpec& k, const std::vector<std::string>& v) {
    auto num = [&](const std::string& s) {
      try {
        std::size_t pos = 0;
        const double d = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return d;
      } catch (const std::exception&) {
        throw UsageError(flag_of(k.key) + ": '" + s + "' is not a number");
      }
    };
    auto integer = [&](const std::string& s) {
      const double d = num(s);
      if (d != static_cast<double>(static_cast<long long>(d))) {
        throw UsageError(flag_of(k.key) + ": '" + s + "' is not an integer");
      }
      return static_cast<long long>(d);
    };
    switch (k.type) {
      case KeyType::Int: return integer(v[0]);
      case KeyType::UInt: {
        try {
          return json(static_cast<std::uint64_t>(std::stoull(v[0])));
        } catch (const std::exception&) {
          throw UsageError(flag_of(k.key) + ": '" + v[0] + "' is not an unsigned integer");
        }
      }
      case KeyType::Double: return num(v[0]);
      case KeyType::Bool:
        if (v[0] == "true" || v[0] == "1" || v[0] == "on") return true;
        if (v[0] == "false" || v[0] == "0" || v[0] == "off") return false;
        throw UsageError(flag_of(k.key) + " expects true or false");
      case KeyType::String: return v[0];
      case KeyType::Range: return json::array({num(v[0]), num(v[1])});
      case KeyType::IntRange: return json::array({integer(v[0]), integer(v[1])});
      case KeyType::Mix: {
        json a = json::array();
        for (const auto& s : v) a.push_back(num(s));
        return a;
      }
    }
    return {};
  }

  std::vector<KeySpec> keys_;
  std::string config_path_;
  std::map<std::string, std::vector<std::string>> values_;
};

const std::vector<KeySpec> kPhantomKeys = {
    {"seed", KeyType::UInt, "generator seed"},
    {"patients", KeyType::Int, "number of synthetic patients (default 60)"},
    {"n_arteries", KeyType::Int, "arteries per patient"},
    {"length_mm", KeyType::Range, "artery length range in mm"},
    {"curvature_amplitude_mm", KeyType::Double, "lateral bending amplitude in mm"},
    {"lumen_radius_mm", KeyType::Range, "healthy lumen radius range in mm"},
    {"lesion_count", KeyType::IntRange, "annotated segments per artery"},
    {"segment_length_mm", KeyType::Range, "annotated segment length range in mm"},
    {"segment_gap_mm", KeyType::Double, "minimum gap between segments in mm"},
    {"end_margin_mm", KeyType::Double, "clearance from the artery ends in mm"},
    {"class_mix", KeyType::Mix, "probabilities of the 7 joint classes (no plaque first)"},
    {"noise_sigma", KeyType::Double, "Gaussian noise sigma in HU"},
    {"voxel_mm", KeyType::Double, "world volume voxel size in mm"},
    {"train_fraction", KeyType::Double, "fraction of patients in the training split (default 0.5)"},
    {"val_fraction", KeyType::Double, "fraction of patients in the validation split (default 0.1)"},
    {"test_fraction", KeyType::Double, "fraction of patients in the test split (default 0.4)"},
    {"split_seed", KeyType::UInt, "seed of the patient split (default: generator seed)"},
};

const std::vector<KeySpec> kTrainKeys = {
    {"model", KeyType::String, "rcnn | cnn | rcnn-single | cnn-single"},
    {"iterations", KeyType::Int, "training iterations (two mini-batches each)"},
    {"batch_size", KeyType::Int, "sequences per mini-batch (multiple of 12)"},
    {"lr", KeyType::Double, "Adam learning rate"},
    {"dropout", KeyType::Double, "dropout rate on recurrent layer outputs"},
    {"gamma", KeyType::Double, "L2 regularization coefficient"},
    {"seed", KeyType::UInt, "seed for initialization, sampling and dropout"},
    {"augment", KeyType::Bool, "rotation / jitter / offset augmentation"},
    {"log_every", KeyType::Int, "learning-curve interval in iterations"},
    {"val_segments", KeyType::Int, "size of the fixed validation subset"},
    {"threads", KeyType::Int, "worker threads for inference (default 1)"},
};

void log_config(const std::string& cmd, const json& j) { std::cerr << cmd << " config: " << j.dump() << "\n"; }

TrainConfig resolve_train(const ConfigFlags& flags, const std::string& cmd) {
  TrainConfig cfg;
  from_json(flags.resolve(), cfg);
  cfg.validate();
  json resolved;
  to_json(resolved, cfg);
  log_config(cmd, resolved);
  return cfg;
}

std::vector<DatasetArtery> load_splits(const fs::path& dir, std::initializer_list<Split> splits) {
  std::vector<DatasetArtery> all;
  for (Split s : splits) {
    auto part = load_dataset(dir, s);
    for (auto& a : part) all.push_back(std::move(a));
  }
  return all;
}

// ---- commands -----------------------------------------------------------------

struct PhantomCmd {
  std::string out;
  std::unique_ptr<ConfigFlags> flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("phantom", "Generate a synthetic dataset with a patient-level split");
    c->add_option("--out", out, "output directory")->required();
    flags = std::make_unique<ConfigFlags>(c, kPhantomKeys);
    c->callback([this] { run(); });
  }

  void run() {
    json j = flags->resolve();
    int patients = 60;
    SplitFractions f;
    std::optional<std::uint64_t> split_seed;
    auto take = [&](const char* key, auto& dst) {
      if (j.contains(key)) {
        dst = j[key].get<std::decay_t<decltype(dst)>>();
        j.erase(key);
      }
    };
    take("patients", patients);
    take("train_fraction", f.train);
    take("val_fraction", f.val);
    take("test_fraction", f.test);
    if (j.contains("split_seed")) {
      split_seed = j["split_seed"].get<std::uint64_t>();
      j.erase("split_seed");
    }
    PhantomSpec spec;
    from_json(j, spec);
    spec.validate();
    if (patients < 1) throw UsageError("patients must be >= 1");
    json resolved;
    to_json(resolved, spec);
    resolved["patients"] = patients;
    resolved["train_fraction"] = f.train;
    resolved["val_fraction"] = f.val;
    resolved["test_fraction"] = f.test;
    resolved["split_seed"] = split_seed.value_or(spec.seed);
    log_config("phantom", resolved);

    std::vector<PhantomArtery> arteries;
    for (int p = 0; p < patients; ++p) {
      auto a = generate_patient(spec, static_cast<std::uint64_t>(p));
      for (auto& x : a) arteries.push_back(std::move(x));
    }
    const Manifest m = export_dataset(arteries, f, out, split_seed.value_or(spec.seed));
    std::ofstream(fs::path(out) / "config.json") << resolved.dump(2) << "\n";
    std::array<int, 3> per{};
    for (const auto& e : m) ++per[static_cast<std::size_t>(e.split)];
    std::cout << "wrote " << arteries.size() << " arteries of " << patients << " patients to " << out << " (train "
              << per[0] << ", val " << per[1] << ", test " << per[2] << " patients)\n";
  }
};

struct MprCmd {
  std::string volume, centerline, out;
  int cross = 45;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("mpr", "Reconstruct a straightened MPR along a centerline");
    c->add_option("--volume", volume, "world volume (.vol)")->required()->check(CLI::ExistingFile);
    c->add_option("--centerline", centerline, "centerline text file")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "output MPR (.vol)")->required();
    c->add_option("--cross", cross, "cross-section size in voxels (odd)")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    const Volume3D v = read_volume(volume);
    const Centerline raw = read_centerline(centerline);
    const Volume3D m = reconstruct_mpr(v, resample_centerline(raw), cross);
    write_volume(m, out);
    std::cout << "MPR " << m.dims()[0] << " x " << m.dims()[1] << " x " << m.dims()[2] << " written to " << out << "\n";
  }
};

struct TrainCmd {
  std::string data, out, curve;
  std::unique_ptr<ConfigFlags> flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train a model on the training split");
    c->add_option("--data", data, "dataset directory written by 'phantom'")->required()->check(CLI::ExistingDirectory);
    c->add_option("--out", out, "output checkpoint")->required();
    c->add_option("--curve", curve, "learning-curve CSV (default: <out>.curve.csv)");
    flags = std::make_unique<ConfigFlags>(c, kTrainKeys);
    c->callback([this] { run(); });
  }

  void run() {
    const TrainConfig cfg = resolve_train(*flags, "train");
    const auto arteries = load_splits(data, {Split::Train, Split::Val});
    nn::Architecture arch;
    arch.kind = nn::parse_kind(cfg.model);
    TrainResult r = train(arch, collect_segments(arteries, Split::Train), collect_segments(arteries, Split::Val), cfg,
                          &std::cerr);
    nn::write_checkpoint(to_checkpoint(r), out);
    const fs::path curve_path = curve.empty() ? fs::path(out + ".curve.csv") : fs::path(curve);
    r.curve.write_csv(curve_path);
    std::cout << "checkpoint " << out << ", learning curve " << curve_path.string() << "\n";
  }
};

struct InferCmd {
  std::string ckpt, mpr, centerline, out, svg, data, split = "test", out_dir;
  int threads = 1;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("infer", "Label every centerline point of an artery (or of a dataset split)");
    c->add_option("--ckpt", ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--mpr", mpr, "MPR volume (.vol)")->check(CLI::ExistingFile);
    c->add_option("--centerline", centerline, "centerline the MPR was built from")->check(CLI::ExistingFile);
    c->add_option("--out", out, "output track CSV");
    c->add_option("--svg", svg, "optional probability plot");
    c->add_option("--data", data, "dataset directory: label a whole split instead")->check(CLI::ExistingDirectory);
    c->add_option("--split", split, "split to label with --data")->capture_default_str();
    c->add_option("--out-dir", out_dir, "track directory for --data (one <artery_id>.csv each)");
    c->add_option("--threads", threads, "worker threads")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    if (threads < 1) throw UsageError("--threads must be >= 1");
    const nn::Network<float> net = nn::load_network(nn::read_checkpoint(ckpt));
    if (!data.empty()) {
      if (out_dir.empty()) throw UsageError("--data requires --out-dir");
      const auto arteries = load_dataset(data, parse_split(split));
      fs::create_directories(out_dir);
      const auto tracks = label_arteries(net, arteries, std::nullopt, threads);
      for (const auto& [id, t] : tracks) export_track(t, fs::path(out_dir) / (id + ".csv"));
      std::cout << "labeled " << tracks.size() << " arteries into " << out_dir << "\n";
      return;
    }
    if (mpr.empty() || centerline.empty() || out.empty()) {
      throw UsageError("infer needs --mpr, --centerline and --out (or --data and --out-dir)");
    }
    const Volume3D m = read_volume(mpr);
    const Centerline c = resample_centerline(read_centerline(centerline));
    PredictionTrack t = label_artery(net, m, c, threads);
    t.artery_id = fs::path(out).stem().string();
    export_track(t, out, svg.empty() ? std::nullopt : std::optional<fs::path>(svg));
    std::cout << t.size() << " points labeled, inconsistency rate "
              << inconsistency_rate(std::span<const PredictionTrack>(&t, 1)) << "\n";
  }
};

struct EvalCmd {
  std::string tracks, annotations, out, manifest, split, csv_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Segment / artery / patient evaluation of prediction tracks");
    c->add_option("--tracks", tracks, "directory of <artery_id>.csv tracks")->required()->check(CLI::ExistingDirectory);
    c->add_option("--annotations", annotations, "directory of annotation JSON files")
        ->required()
        ->check(CLI::ExistingDirectory);
    c->add_option("--out", out, "report JSON")->required();
    c->add_option("--manifest", manifest, "manifest restricting evaluation to one split")->check(CLI::ExistingFile);
    c->add_option("--split", split, "split to evaluate with --manifest");
    c->add_option("--csv-dir", csv_dir, "also write confusion matrices as CSV");
    c->callback([this] { run(); });
  }

  void run() {
    if (manifest.empty() != split.empty()) throw UsageError("--manifest and --split go together");
    std::optional<std::vector<std::string>> keep;
    if (!manifest.empty()) {
      const Split s = parse_split(split);
      keep.emplace();
      for (const auto& e : read_manifest(manifest)) {
        if (e.split == s) keep->push_back(e.patient_id);
      }
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(annotations)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ArteryAnnotation> anns;
    std::map<std::string, PredictionTrack> track_map;
    for (const auto& f : files) {
      ArteryAnnotation a = read_annotation(f);
      if (keep && std::find(keep->begin(), keep->end(), a.patient_id) == keep->end()) continue;
      const fs::path tp = fs::path(tracks) / (a.artery_id + ".csv");
      if (!fs::exists(tp)) throw DataError("no prediction track for artery " + a.artery_id + " (" + tp.string() + ")");
      PredictionTrack t = read_track(tp);
      t.artery_id = a.artery_id;
      track_map.emplace(a.artery_id, std::move(t));
      anns.push_back(std::move(a));
    }
    if (anns.empty()) throw DataError("no annotated arteries to evaluate");
    const EvalReport r = evaluate(track_map, anns);
    std::ofstream os(out);
    if (!os) throw DataError("cannot open " + out + " for writing");
    os << to_json(r).dump(2) << "\n";
    if (!csv_dir.empty()) {
      fs::create_directories(csv_dir);
      write_matrix_csv(r.segment_plaque.cm, fs::path(csv_dir) / "segment_plaque.csv");
      write_matrix_csv(r.segment_stenosis.cm, fs::path(csv_dir) / "segment_stenosis.csv");
      write_matrix_csv(r.artery_stenosis.cm, fs::path(csv_dir) / "artery_stenosis.csv");
      write_matrix_csv(r.patient_stenosis.cm, fs::path(csv_dir) / "patient_stenosis.csv");
    }
    std::cout << format_report(r);
  }
};

struct CountCmd {
  std::string model = "rcnn";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("count-params", "Print the trainable parameter count of a model");
    c->add_option("--model", model, "rcnn | cnn | rcnn-single | cnn-single")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    nn::Architecture a;
    a.kind = nn::parse_kind(model);
    const nn::Network<float> net(a);
    std::cout << net.parameter_count() << "\n";
  }
};

struct GradCmd {
  int full_spot = 200;
  std::uint64_t seed = 1;
  double layer_tol = 1e-3, full_tol = 5e-3;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    c->add_option("--full-spot", full_spot, "random coordinates of the full RCNN to check (0 skips)")
        ->capture_default_str();
    c->add_option("--seed", seed, "seed for inputs and coordinate choice")->capture_default_str();
    c->add_option("--layer-tol", layer_tol, "max relative error for layers and tiny models")->capture_default_str();
    c->add_option("--full-tol", full_tol, "max relative error for the full RCNN")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    bool ok = true;
    auto show = [&](const GradCheckReport& r, double tol) {
      const bool pass = r.max_rel_error() <= tol;
      ok = ok && pass;
      std::cout << (pass ? "PASS " : "FAIL ") << r.summary() << "\n";
    };
    for (const auto& r : check_layers(seed)) show(r, layer_tol);
    for (auto kind : {nn::ModelKind::Rcnn, nn::ModelKind::Cnn, nn::ModelKind::RcnnSingle, nn::ModelKind::CnnSingle}) {
      const nn::Architecture a = tiny_architecture(kind);
      nn::Network<double> net(a);
      net.init(seed);
      show(check_network(net, toy_batch(a, {2, 3, 1}, seed), nn::Mode::Train, seed, 0), layer_tol);
    }
    if (full_spot > 0) {
      nn::Architecture a;
      nn::Network<double> net(a);
      net.init(seed);
      show(check_network(net, toy_batch(a, {2}, seed), nn::Mode::Eval, seed, static_cast<std::size_t>(full_spot)),
           full_tol);
    }
    if (!ok) throw NumericError("gradient check failed");
  }
};

struct AblateCmd {
  std::string data, out;
  std::unique_ptr<ConfigFlags> flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("ablate", "Train and compare the four architectures on the same split");
    c->add_option("--data", data, "dataset directory written by 'phantom'")->required()->check(CLI::ExistingDirectory);
    c->add_option("--out", out, "directory for ablation.json and learning curves");
    flags = std::make_unique<ConfigFlags>(c, kTrainKeys);
    c->callback([this] { run(); });
  }

  void run() {
    const TrainConfig cfg = resolve_train(*flags, "ablate");
    const auto arteries = load_splits(data, {Split::Train, Split::Val, Split::Test});
    const auto rows = run_ablation(arteries, cfg, &std::cerr);
    std::cout << format_ablation(rows);
    if (!out.empty()) {
      fs::create_directories(out);
      json j = json::array();
      for (const auto& r : rows) {
        j.push_back({{"model", r.model}, {"parameters", r.parameters}, {"report", to_json(r.report)}});
        r.curve.write_csv(fs::path(out) / (r.model + ".curve.csv"));
      }
      std::ofstream(fs::path(out) / "ablation.json") << j.dump(2) << "\n";
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coronary plaque and stenosis classification pipeline"};
  app.require_subcommand(1);
  PhantomCmd phantom;
  MprCmd mpr;
  TrainCmd train_cmd;
  InferCmd infer;
  EvalCmd eval;
  CountCmd count;
  GradCmd grad;
  AblateCmd ablate;
  phantom.add(app);
  mpr.add(app);
  train_cmd.add(app);
  infer.add(app);
  eval.add(app);
  count.add(app);
  grad.add(app);
  ablate.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
