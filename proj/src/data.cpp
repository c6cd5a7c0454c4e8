#include "semnn/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "semnn/checkpoint.h"

namespace semnn::data {

Tensor Dataset::images(std::span<const std::size_t> idx) const {
  std::vector<double> v(idx.size() * kImageBytes);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::uint8_t* src = pixels.data() + idx[i] * kImageBytes;
    for (std::size_t k = 0; k < kImageBytes; ++k) v[i * kImageBytes + k] = double(src[k]) / 127.5 - 1.0;
  }
  return Tensor({idx.size(), kImageChannels, kImageSide, kImageSide}, std::move(v));
}

Dataset Dataset::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw std::out_of_range("Dataset::subset: bad range");
  Dataset d;
  d.classes = classes;
  d.labels.assign(labels.begin() + long(begin), labels.begin() + long(end));
  d.pixels.assign(pixels.begin() + long(begin * kImageBytes), pixels.begin() + long(end * kImageBytes));
  return d;
}

namespace {

bool inside(int kind, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (kind) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return ax <= 0.8 * r && ay <= 0.8 * r;
    case 2: return dy >= -0.8 * r && dy <= 0.8 * r && ax <= 0.5 * (dy + 0.8 * r);
    case 3: return (ax <= 0.25 * r && ay <= r) || (ay <= 0.25 * r && ax <= r);
    case 4: {
      const double d = std::sqrt(dx * dx + dy * dy);
      return d >= 0.55 * r && d <= r;
    }
    case 5: return ax + ay <= r;
    case 6: return ay <= 0.3 * r && ax <= r;
    case 7: return ax <= 0.3 * r && ay <= r;
    case 8: return std::abs(ax - ay) <= 0.3 * r && ax <= 0.9 * r;
    case 9: {
      const double s = 0.35 * r;
      return (dx - 0.5 * r) * (dx - 0.5 * r) + dy * dy <= s * s ||
             (dx + 0.5 * r) * (dx + 0.5 * r) + dy * dy <= s * s;
    }
  }
  return false;
}

std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Dataset make_shapes(std::size_t n, std::size_t classes, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("make_shapes: n must be positive");
  if (classes < 2 || classes > 10) throw std::invalid_argument("make_shapes: classes must be in [2, 10]");
  std::mt19937_64 rng(seed);
  Dataset d;
  d.classes = classes;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = int(i % classes);
  std::shuffle(d.labels.begin(), d.labels.end(), rng);
  d.pixels.resize(n * kImageBytes);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.08);
  for (std::size_t i = 0; i < n; ++i) {
    double bg[3], fg[3];
    for (int c = 0; c < 3; ++c) {
      bg[c] = 0.05 + 0.35 * u(rng);
      fg[c] = 0.6 + 0.35 * u(rng);
    }
    const double cx = 11.0 + 10.0 * u(rng), cy = 11.0 + 10.0 * u(rng);
    const double r = 6.0 + 5.0 * u(rng);
    std::uint8_t* img = d.pixels.data() + i * kImageBytes;
    for (std::size_t y = 0; y < kImageSide; ++y) {
      for (std::size_t x = 0; x < kImageSide; ++x) {
        const bool on = inside(d.labels[i], double(x) - cx, double(y) - cy, r);
        for (int c = 0; c < 3; ++c) {
          const double v = (on ? fg[c] : bg[c]) + noise(rng);
          img[std::size_t(c) * kImageSide * kImageSide + y * kImageSide + x] = to_byte(v);
        }
      }
    }
  }
  return d;
}

void write_small_binary(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const char label = char(d.labels[i]);
    os.write(&label, 1);
    os.write(reinterpret_cast<const char*>(d.pixels.data() + i * kImageBytes), kImageBytes);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Dataset read_small_binary(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  Dataset d;
  d.classes = classes;
  std::vector<char> rec(kImageBytes + 1);
  while (is.read(rec.data(), std::streamsize(rec.size()))) {
    const int label = static_cast<unsigned char>(rec[0]);
    if (std::size_t(label) >= classes) {
      throw IoError(path.string() + ": label " + std::to_string(label) + " outside [0, " +
                    std::to_string(classes) + ")");
    }
    d.labels.push_back(label);
    d.pixels.insert(d.pixels.end(), rec.begin() + 1, rec.end());
  }
  if (is.gcount() != 0) throw IoError(path.string() + ": truncated record");
  if (d.size() == 0) throw IoError(path.string() + ": no records");
  return d;
}

std::vector<std::size_t> label_histogram(const Dataset& d) {
  std::vector<std::size_t> h(d.classes, 0);
  for (int y : d.labels) ++h.at(std::size_t(y));
  return h;
}

}  // namespace semnn::data
