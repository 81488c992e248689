#include "coronary/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "coronary/errors.hpp"

namespace coronary::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[4] = {'R', 'C', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_raw(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get_raw(std::istream& is, const std::filesystem::path& path) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) {
    throw DataError(path.string() + ": truncated checkpoint");
  }
  return v;
}

}  // namespace

const Tensor<float>* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor<float>& Checkpoint::at(std::string_view name) const {
  const auto* t = find(name);
  if (!t) throw DataError("checkpoint has no tensor '" + std::string(name) + "'");
  return *t;
}

void Checkpoint::put(std::string name, Tensor<float> t) {
  for (auto& [n, old] : tensors) {
    if (n == name) {
      old = std::move(t);
      return;
    }
  }
  tensors.emplace_back(std::move(name), std::move(t));
}

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put_raw<std::uint32_t>(os, kVersion);
  put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) put_raw<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!os) throw DataError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = get_raw<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_raw<std::uint32_t>(is, path);
  Checkpoint c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_raw<std::uint32_t>(is, path);
    if (len > 4096) throw DataError(path.string() + ": implausible tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError(path.string() + ": truncated checkpoint");
    const auto rank = get_raw<std::uint32_t>(is, path);
    if (rank > 8) throw DataError(path.string() + ": implausible rank for " + name);
    std::vector<int> shape(rank);
    for (auto& d : shape) {
      const auto v = get_raw<std::uint64_t>(is, path);
      if (v > (1ULL << 31)) throw DataError(path.string() + ": implausible dimension for " + name);
      d = static_cast<int>(v);
    }
    Tensor<float> t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)))) {
      throw DataError(path.string() + ": truncated payload for " + name);
    }
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  return c;
}

namespace {

template <typename T>
Tensor<float> to_f32(const Tensor<T>& t) {
  return Tensor<float>(t.shape, std::vector<float>(t.data.begin(), t.data.end()));
}

template <typename T>
void copy_into(const Tensor<float>& src, Tensor<T>& dst, std::string_view name) {
  if (src.shape != dst.shape) {
    throw DataError("checkpoint tensor '" + std::string(name) + "' has shape " + shape_string(src.shape) +
                    ", model expects " + shape_string(dst.shape));
  }
  std::copy(src.data.begin(), src.data.end(), dst.data.begin());
}

}  // namespace

template <typename T>
Checkpoint snapshot(const Network<T>& net) {
  Checkpoint c;
  const Architecture& a = net.arch();
  c.put("meta/arch", Tensor<float>({7}, std::vector<float>{static_cast<float>(a.kind), float(a.conv1), float(a.conv2),
                                                          float(a.conv3), float(a.gru_units), float(a.fc_units),
                                                          float(a.cube)}));
  for (const auto& p : net.params()) c.put(p.name, to_f32(p.value));
  for (int s = 0; s < 3; ++s) {
    const std::string i = std::to_string(s + 1);
    c.put("bn_running/bn" + i + ".mean", to_f32(net.running_mean()[s]));
    c.put("bn_running/bn" + i + ".var", to_f32(net.running_var()[s]));
  }
  return c;
}

Architecture checkpoint_architecture(const Checkpoint& c) {
  const auto& m = c.at("meta/arch");
  if (m.size() != 7) throw DataError("checkpoint meta/arch must hold 7 values");
  const int kind = static_cast<int>(m[0]);
  if (kind < 0 || kind > 3) throw DataError("checkpoint has unknown model kind " + std::to_string(kind));
  Architecture a;
  a.kind = static_cast<ModelKind>(kind);
  a.conv1 = static_cast<int>(m[1]);
  a.conv2 = static_cast<int>(m[2]);
  a.conv3 = static_cast<int>(m[3]);
  a.gru_units = static_cast<int>(m[4]);
  a.fc_units = static_cast<int>(m[5]);
  a.cube = static_cast<int>(m[6]);
  return a;
}

template <typename T>
void restore(const Checkpoint& c, Network<T>& net) {
  for (auto& p : net.params()) copy_into(c.at(p.name), p.value, p.name);
  for (int s = 0; s < 3; ++s) {
    const std::string i = std::to_string(s + 1);
    copy_into(c.at("bn_running/bn" + i + ".mean"), net.running_mean()[s], "bn running mean");
    copy_into(c.at("bn_running/bn" + i + ".var"), net.running_var()[s], "bn running var");
  }
}

Network<float> load_network(const Checkpoint& c) {
  Network<float> net(checkpoint_architecture(c));
  restore(c, net);
  return net;
}

template Checkpoint snapshot<float>(const Network<float>&);
template Checkpoint snapshot<double>(const Network<double>&);
template void restore<float>(const Checkpoint&, Network<float>&);
template void restore<double>(const Checkpoint&, Network<double>&);

}  // namespace coronary::nn
