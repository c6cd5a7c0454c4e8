#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "semnn/tensor.h"

namespace semnn::data {

inline constexpr std::size_t kImageChannels = 3, kImageSide = 32;
inline constexpr std::size_t kImageBytes = kImageChannels * kImageSide * kImageSide;

// Images stored as 8-bit planes (R, G, B), 32x32, one label each.
struct Dataset {
  std::vector<std::uint8_t> pixels;  // size() * kImageBytes
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  // [n, 3, 32, 32] scaled to [-1, 1].
  Tensor images(std::span<const std::size_t> idx) const;
  Dataset subset(std::size_t begin, std::size_t end) const;
};

// Deterministic shapes-and-colours set: one filled shape per image over a
// noisy background, class = shape kind. Labels are balanced (i mod classes)
// and then shuffled. 2 <= classes <= 10.
Dataset make_shapes(std::size_t n, std::size_t classes, std::uint64_t seed);

// Small-image binary record format: 1 label byte + 3072 pixel bytes per record.
void write_small_binary(const std::filesystem::path& path, const Dataset& d);
Dataset read_small_binary(const std::filesystem::path& path, std::size_t classes = 10);

std::vector<std::size_t> label_histogram(const Dataset& d);

}  // namespace semnn::data
