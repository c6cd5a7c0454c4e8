#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "semnn/tensor.h"

namespace semnn {

// Binary checkpoint, version 1. All integers little-endian.
//
//   magic     8 bytes  "SNNCKPT\0"
//   version   u32      1
//   count     u32      number of tensors
//   per tensor:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank     u32, extents u64 x rank
//     values   f64 x product(extents), IEEE-754 little-endian
inline constexpr char kCheckpointMagic[8] = {'S', 'N', 'N', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a over the file bytes, as 16 lowercase hex digits.
std::string file_checksum(const std::filesystem::path& path);
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace semnn
