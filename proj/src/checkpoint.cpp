#include "pses/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>

namespace pses {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'E', 'S'};

template <typename T>
void write_le(std::ofstream& os, T v) {
  // Little-endian host assumed; payload layout is fixed by the format.
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor<float>>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_le<uint32_t>(os, kCheckpointVersion);
  write_le<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
  for (const NamedTensor<float>& nt : tensors) {
    if (nt.name.size() > std::numeric_limits<uint16_t>::max()) {
      throw CheckpointError("tensor name too long: " + nt.name);
    }
    write_le<uint16_t>(os, static_cast<uint16_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    write_le<uint8_t>(os, static_cast<uint8_t>(nt.tensor.rank()));
    for (int64_t e : nt.tensor.shape()) write_le<uint32_t>(os, static_cast<uint32_t>(e));
    os.write(reinterpret_cast<const char*>(nt.tensor.data()),
             static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(nt.tensor.numel())));
  }
  if (!os) throw CheckpointError("checkpoint write failed: " + path);
}

std::vector<std::pair<std::string, Tensor<float>>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("bad checkpoint magic in " + path);
  }
  const uint32_t version = read_le<uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const uint32_t count = read_le<uint32_t>(is);
  std::vector<std::pair<std::string, Tensor<float>>> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = read_le<uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CheckpointError("checkpoint truncated");
    const uint8_t rank = read_le<uint8_t>(is);
    Shape shape(rank);
    for (uint8_t d = 0; d < rank; ++d) shape[d] = read_le<uint32_t>(is);
    const int64_t numel = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(numel));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sizeof(float) * data.size()));
    if (!is) throw CheckpointError("checkpoint truncated");
    out.emplace_back(std::move(name), Tensor<float>::from(std::move(shape), std::move(data)));
  }
  return out;
}

void load_into(const std::string& path, const std::vector<NamedTensor<float>>& target) {
  auto entries = load_checkpoint(path);
  std::unordered_map<std::string, Tensor<float>> by_name;
  for (auto& [name, tensor] : entries) by_name.emplace(name, tensor);
  for (const NamedTensor<float>& nt : target) {
    auto it = by_name.find(nt.name);
    if (it == by_name.end()) {
      throw CheckpointError("checkpoint is missing tensor '" + nt.name + "'");
    }
    if (!same_shape(it->second.shape(), nt.tensor.shape())) {
      throw CheckpointError("checkpoint tensor '" + nt.name + "' has shape " +
                            shape_str(it->second.shape()) + ", model expects " + shape_str(nt.tensor.shape()));
    }
    Tensor<float> dst = nt.tensor;
    std::memcpy(dst.data(), it->second.data(), sizeof(float) * static_cast<size_t>(dst.numel()));
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw CheckpointError("checkpoint has unexpected tensor '" + by_name.begin()->first + "'");
  }
}

}  // namespace pses
