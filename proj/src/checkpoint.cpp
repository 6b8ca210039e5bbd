#include "epe/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "epe/error.hpp"

namespace epe {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'P', 'E', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t checked_u32(std::size_t v, const std::string& what) {
  if (v > UINT32_MAX) throw ValueError(what + " does not fit the checkpoint format");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  void take(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint '" + path_ + "' is truncated");
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    take(b, 4);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }

 private:
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParamRegistry<float>& registry, const std::filesystem::path& path) {
  const auto state = registry.state();
  std::string out(kMagic, 4);
  put_u32(out, checked_u32(state.size(), "tensor count"));
  for (const auto& [name, var] : state) {
    put_u32(out, checked_u32(name.size(), "name length"));
    out += name;
    const Shape& shape = var->value.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) put_u32(out, checked_u32(e, "extent"));
    out.append(reinterpret_cast<const char*>(var->value.data()), var->value.numel() * sizeof(float));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open '" + path.string() + "' for reading");
  Reader in({std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()}, path.string());

  char magic[4];
  in.take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::magic_mismatch, "'" + path.string() + "' is not an EPE1 checkpoint");
  }
  const std::uint32_t count = in.u32();
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(in.u32());
    in.take(t.name.data(), t.name.size());
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 4) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& e : shape) e = in.u32();
    std::vector<float> data(shape_numel(shape));
    in.take(data.data(), data.size() * sizeof(float));
    t.tensor = Tensor<float>(std::move(shape), std::move(data));
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void apply_checkpoint(ParamRegistry<float>& registry, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.tensor;
  const auto state = registry.state();
  // Validate everything first so a failed load leaves the registry untouched.
  for (const auto& [name, var] : state) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(CheckpointError::Kind::missing_tensor, "checkpoint has no tensor '" + name + "'");
    }
    if (it->second->shape() != var->value.shape()) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "shape mismatch for '" + name + "': checkpoint " + shape_to_string(it->second->shape()) +
                                ", model " + shape_to_string(var->value.shape()));
    }
  }
  for (const auto& [name, var] : state) var->value = *by_name.at(name);
}

}  // namespace epe
