#include <regex>

#include "doctest.h"

#include "coronary/dataset.hpp"
#include "coronary/inference.hpp"
#include "coronary/phantom.hpp"
#include "coronary/training.hpp"
#include "coronary/volume_io.hpp"
#include "support.hpp"

using namespace coronary;
using testutil::run_cli;
namespace fs = std::filesystem;

namespace {

// Shared small dataset, generated once per process.
const testutil::TempDir& dataset() {
  static testutil::TempDir dir("cli_data");
  static bool made = false;
  if (!made) {
    const auto r = run_cli("phantom --out " + (dir / "data").string() +
                               " --patients 12 --length-mm 24 30 --lesion-count 1 2 --seed 77",
                           dir.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    made = true;
  }
  return dir;
}

std::string data_dir() { return (dataset() / "data").string(); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("count-params") {
  testutil::TempDir dir("cli_count");
  const std::pair<const char*, const char*> cases[] = {
      {"rcnn", "340295"}, {"cnn", "341191"}, {"rcnn-single", "340295"}, {"cnn-single", "341191"}};
  for (auto [model, expected] : cases) {
    const auto r = run_cli(std::string("count-params --model ") + model, dir.path);
    CHECK(r.code == 0);
    CHECK(r.out == std::string(expected) + "\n");
  }
  CHECK(run_cli("count-params --model lstm", dir.path).code == 2);
}

TEST_CASE("usage and data errors map to exit codes") {
  testutil::TempDir dir("cli_codes");
  CHECK(run_cli("", dir.path).code == 2);
  CHECK(run_cli("frobnicate", dir.path).code == 2);
  CHECK(run_cli("count-params --help", dir.path).code == 0);
  {
    std::ofstream(dir / "bad.json") << R"({"patients": 3, "colour": "red"})";
  }
  const auto unknown = run_cli("phantom --out " + (dir / "x").string() + " --config " + (dir / "bad.json").string(), dir.path);
  CHECK(unknown.code == 2);
  CHECK(unknown.out.find("colour") != std::string::npos);

  {
    std::ofstream(dir / "bad.vol") << "garbage";
    std::ofstream(dir / "c.txt") << "0 0 0\n0 0 10\n";
  }
  CHECK(run_cli("mpr --volume " + (dir / "bad.vol").string() + " --centerline " + (dir / "c.txt").string() + " --out " +
                    (dir / "m.vol").string(),
                dir.path)
            .code == 3);
}

TEST_CASE("help documents every config key as a flag") {
  testutil::TempDir dir("cli_help");
  nlohmann::json phantom_keys = PhantomSpec{};
  const std::string ph = run_cli("phantom --help", dir.path).out;
  for (const auto& [k, v] : phantom_keys.items()) {
    std::string flag = "--" + k;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CHECK_MESSAGE(ph.find(flag) != std::string::npos, flag);
  }
  for (const char* extra : {"--patients", "--train-fraction", "--val-fraction", "--test-fraction", "--split-seed"})
    CHECK(ph.find(extra) != std::string::npos);

  nlohmann::json train_keys = TrainConfig{};
  for (const char* cmd : {"train", "ablate"}) {
    const std::string help = run_cli(std::string(cmd) + " --help", dir.path).out;
    for (const auto& [k, v] : train_keys.items()) {
      std::string flag = "--" + k;
      std::replace(flag.begin(), flag.end(), '_', '-');
      CHECK_MESSAGE(help.find(flag) != std::string::npos, cmd << " " << flag);
    }
  }
}

TEST_CASE("phantom writes the dataset and its resolved config") {
  const std::string d = data_dir();
  const Manifest m = read_manifest(d + "/manifest.json");
  CHECK(m.size() == 12);
  const auto cfg = nlohmann::json::parse(testutil::slurp(d + "/config.json"));
  CHECK(cfg.at("seed") == 77);
  CHECK(cfg.at("patients") == 12);
  CHECK(cfg.at("length_mm")[0] == 24.0);

  // Same config, same bytes.
  testutil::TempDir dir("cli_phantom");
  const auto r = run_cli("phantom --out " + (dir / "again").string() +
                             " --patients 12 --length-mm 24 30 --lesion-count 1 2 --seed 77",
                         dir.path);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"seed\":77") != std::string::npos);  // resolved config is logged
  for (const char* f : {"manifest.json", "annotations/P0003_A1.json", "volumes/P0003_A1.vol", "mpr/P0011_A2.vol"})
    CHECK(testutil::slurp(d + "/" + f) == testutil::slurp(dir / "again" / f));
}

TEST_CASE("mpr reproduces the exported MPR") {
  testutil::TempDir dir("cli_mpr");
  const std::string d = data_dir();
  const auto r = run_cli("mpr --volume " + d + "/volumes/P0001_A0.vol --centerline " + d +
                             "/centerlines/P0001_A0.txt --out " + (dir / "m.vol").string(),
                         dir.path);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(testutil::slurp(dir / "m.vol") == testutil::slurp(d + "/mpr/P0001_A0.vol"));
  CHECK(run_cli("mpr --cross 44 --volume " + d + "/volumes/P0001_A0.vol --centerline " + d +
                    "/centerlines/P0001_A0.txt --out " + (dir / "n.vol").string(),
                dir.path)
            .code == 2);
}

TEST_CASE("train, infer and eval are reproducible") {
  testutil::TempDir dir("cli_train");
  const std::string d = data_dir();
  {
    std::ofstream(dir / "train.json") << R"({"iterations": 2, "batch_size": 12, "log_every": 1, "val_segments": 4})";
  }
  const std::string common = "train --data " + d + " --config " + (dir / "train.json").string();
  for (const char* tag : {"a", "b"}) {
    const auto r = run_cli(common + " --out " + (dir / tag).string() + ".ckpt --curve " + (dir / tag).string() + ".csv",
                           dir.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("\"iterations\":2") != std::string::npos);
  }
  CHECK(testutil::slurp(dir / "a.ckpt") == testutil::slurp(dir / "b.ckpt"));
  CHECK(testutil::slurp(dir / "a.csv") == testutil::slurp(dir / "b.csv"));
  CHECK(LearningCurve::read_csv(dir / "a.csv").points.size() == 2);

  // Flags override the config file.
  const auto over = run_cli(common + " --iterations 1 --out " + (dir / "c.ckpt").string(), dir.path);
  REQUIRE_MESSAGE(over.code == 0, over.out);
  CHECK(LearningCurve::read_csv(dir / "c.ckpt.curve.csv").points.size() == 1);

  // Single artery.
  const std::string art = d + "/mpr/P0002_A1.vol --centerline " + d + "/centerlines/P0002_A1.txt";
  for (const char* tag : {"t1", "t2"}) {
    const auto r = run_cli("infer --ckpt " + (dir / "a.ckpt").string() + " --mpr " + art + " --out " +
                               (dir / tag).string() + ".csv --svg " + (dir / tag).string() + ".svg",
                           dir.path);
    REQUIRE_MESSAGE(r.code == 0, r.out);
  }
  CHECK(testutil::slurp(dir / "t1.csv") == testutil::slurp(dir / "t2.csv"));
  const PredictionTrack t = read_track(dir / "t1.csv");
  CHECK(t.size() == resample_centerline(read_centerline(d + "/centerlines/P0002_A1.txt")).size());

  // Whole split, then evaluation.
  const auto batch = run_cli("infer --ckpt " + (dir / "a.ckpt").string() + " --data " + d + " --split test --out-dir " +
                                 (dir / "tracks").string() + " --threads 2",
                             dir.path);
  REQUIRE_MESSAGE(batch.code == 0, batch.out);
  const auto ev = run_cli("eval --tracks " + (dir / "tracks").string() + " --annotations " + d + "/annotations --manifest " +
                              d + "/manifest.json --split test --out " + (dir / "report.json").string(),
                          dir.path);
  REQUIRE_MESSAGE(ev.code == 0, ev.out);
  const auto rep = nlohmann::json::parse(testutil::slurp(dir / "report.json"));
  CHECK(rep.at("counts").at("arteries").get<int>() > 0);

  // Missing tracks are a data error.
  const auto missing = run_cli("eval --tracks " + (dir / "tracks").string() + " --annotations " + d +
                                   "/annotations --out " + (dir / "r2.json").string(),
                               dir.path);
  CHECK(missing.code == 3);
  CHECK(missing.out.find("no prediction track") != std::string::npos);
}

TEST_CASE("eval on reference tracks is perfect") {
  testutil::TempDir dir("cli_eval");
  const std::string d = data_dir();
  fs::create_directories(dir / "tracks");
  for (const auto& a : load_dataset(d)) {
    PredictionTrack t;
    t.artery_id = a.artery_id;
    for (double s : a.centerline.arc()) {
      TrackPoint p;
      p.arc_mm = s;
      p.p_plaque = {1, 0, 0, 0};
      p.p_stenosis = {1, 0, 0};
      for (const auto& seg : a.segments)
        if (s >= seg.start_mm && s <= seg.end_mm) {
          p.plaque = seg.plaque;
          p.stenosis = seg.stenosis;
        }
      t.points.push_back(p);
    }
    export_track(t, dir / "tracks" / (a.artery_id + ".csv"));
  }
  const auto r = run_cli("eval --tracks " + (dir / "tracks").string() + " --annotations " + d + "/annotations --out " +
                             (dir / "report.json").string() + " --csv-dir " + (dir / "csv").string(),
                         dir.path);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const auto rep = nlohmann::json::parse(testutil::slurp(dir / "report.json"));
  CHECK(rep["segment"]["plaque"]["accuracy"] == 1.0);
  CHECK(rep["segment"]["stenosis"]["accuracy"] == 1.0);
  CHECK(rep["artery"]["stenosis"]["accuracy"] == 1.0);
  CHECK(rep["patient"]["stenosis"]["accuracy"] == 1.0);
  CHECK(fs::exists(dir / "csv"));
}

TEST_CASE("gradcheck command") {
  testutil::TempDir dir("cli_grad");
  const auto r = run_cli("gradcheck --full-spot 10", dir.path);
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') >= 11);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

}  // TEST_SUITE
