#include "semnn/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace semnn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError("truncated checkpoint " + path.string());
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, std::uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    if (numel(t.shape) != t.values.size()) {
      throw ShapeError("checkpoint entry " + t.name + ": shape " + shape_str(t.shape) +
                       " does not match value count");
    }
    put<std::uint32_t>(os, std::uint32_t(t.name.size()));
    os.write(t.name.data(), std::streamsize(t.name.size()));
    put<std::uint32_t>(os, std::uint32_t(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.values.data()),
             std::streamsize(t.values.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IoError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(is, path);
  std::vector<NamedTensor> out(count);
  for (auto& t : out) {
    const auto len = get<std::uint32_t>(is, path);
    t.name.resize(len);
    if (!is.read(t.name.data(), len)) throw IoError("truncated checkpoint " + path.string());
    const auto rank = get<std::uint32_t>(is, path);
    t.shape.resize(rank);
    for (auto& d : t.shape) d = get<std::uint64_t>(is, path);
    t.values.resize(numel(t.shape));
    if (!is.read(reinterpret_cast<char*>(t.values.data()),
                 std::streamsize(t.values.size() * sizeof(double)))) {
      throw IoError("truncated checkpoint " + path.string());
    }
  }
  return out;
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto h = fnv1a(bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace semnn
