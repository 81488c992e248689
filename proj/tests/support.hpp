#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "coronary/rng.hpp"
#include "coronary/volume.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("coronary_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& s) const { return path / s; }
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int code;
  std::string out;
};

// Runs the CLI with stdout+stderr captured.
inline RunResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli_output.txt";
  const std::string cmd = std::string(CORONARY_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  int code = -1;
  if (WIFEXITED(status)) code = WEXITSTATUS(status);
  return {code, slurp(log)};
}

inline coronary::Volume3D random_volume(coronary::Volume3D::Dims dims, coronary::Vec3 spacing,
                                        coronary::Vec3 origin, std::uint64_t seed) {
  coronary::Rng rng = coronary::keyed_rng(seed, 99);
  std::uniform_real_distribution<float> u(-100.0f, 100.0f);
  coronary::Volume3D v(dims, spacing, origin);
  for (auto& x : v.voxels()) x = u(rng);
  return v;
}

}  // namespace testutil

#include "coronary/dataset.hpp"
#include "coronary/phantom.hpp"
#include "coronary/sampler.hpp"

namespace testutil {

// Small in-memory phantom set; every segment of every artery.
struct MicroSet {
  std::vector<coronary::DatasetArtery> arteries;
  std::vector<coronary::TrainingSegment> segments;
};

inline MicroSet micro_set(int patients, std::uint64_t seed = 5) {
  coronary::PhantomSpec spec;
  spec.seed = seed;
  spec.length_mm = {24.0, 30.0};
  spec.lesion_count = {1, 2};
  MicroSet m;
  for (int p = 0; p < patients; ++p)
    for (const auto& a : coronary::generate_patient(spec, static_cast<std::uint64_t>(p)))
      m.arteries.push_back(coronary::prepare_artery(a, coronary::Split::Train));
  for (const auto& a : m.arteries)
    for (const auto& s : a.segments) m.segments.push_back({&a.mpr, s});
  return m;
}

}  // namespace testutil
