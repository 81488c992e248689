#include "coronary/volume_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "coronary/errors.hpp"

namespace coronary {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'P', 'R', 'V'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated volume file " + path.string());
  return v;
}

}  // namespace

Vec3 header_precision(const Vec3& v) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) out[a] = static_cast<float>(v[a]);
  return out;
}

void write_volume(const Volume3D& vol, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  for (int a = 0; a < 3; ++a) put<std::uint32_t>(os, static_cast<std::uint32_t>(vol.dims()[a]));
  for (int a = 0; a < 3; ++a) put<float>(os, static_cast<float>(vol.spacing()[a]));
  for (int a = 0; a < 3; ++a) put<float>(os, static_cast<float>(vol.origin()[a]));
  put<std::uint8_t>(os, 0);
  const auto v = vol.voxels();
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!os) throw DataError("failed writing " + path.string());
}

Volume3D read_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open volume " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("not a .vol file (bad magic): " + path.string());
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw DataError("unsupported .vol version " + std::to_string(version));
  }
  Volume3D::Dims dims{};
  for (int a = 0; a < 3; ++a) {
    const auto d = get<std::uint32_t>(is, path);
    if (d == 0 || d > (1u << 24)) throw DataError("invalid .vol dims in " + path.string());
    dims[a] = static_cast<int>(d);
  }
  Vec3 spacing, origin;
  for (int a = 0; a < 3; ++a) spacing[a] = get<float>(is, path);
  for (int a = 0; a < 3; ++a) origin[a] = get<float>(is, path);
  const auto dtype = get<std::uint8_t>(is, path);
  if (dtype != 0) throw DataError("unsupported .vol dtype " + std::to_string(dtype));

  std::vector<float> voxels(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  is.read(reinterpret_cast<char*>(voxels.data()),
          static_cast<std::streamsize>(voxels.size() * sizeof(float)));
  if (!is) throw DataError("truncated .vol payload in " + path.string());
  return Volume3D(dims, spacing, origin, std::move(voxels));
}

void write_centerline(const Centerline& c, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "# x y z (mm)\n" << std::setprecision(17);
  for (const auto& p : c.points()) os << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

Centerline read_centerline(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open centerline " + path.string());
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;  // blank or comment-only
    if (!(ls >> y >> z)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
    }
    std::string extra;
    if (ls >> extra) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": trailing data");
    }
    pts.emplace_back(x, y, z);
  }
  return Centerline(std::move(pts));
}

}  // namespace coronary
