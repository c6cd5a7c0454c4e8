#include "semnn/bitstream.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <string>

#include "semnn/checkpoint.h"

namespace semnn::bits {

BitStream::BitStream(std::size_t bit_length)
    : bytes_((bit_length + 7) / 8, 0), bit_length_(bit_length) {}

void BitStream::set_symbol_layout(std::optional<int> width, std::size_t count) {
  if (width && bit_length_ != std::size_t(*width) * count) {
    throw std::invalid_argument("fixed-length layout " + std::to_string(count) + " x " +
                                std::to_string(*width) + " does not match " +
                                std::to_string(bit_length_) + " bits");
  }
  symbol_width_ = width;
  symbol_count_ = count;
}

void BitStream::set(std::size_t i, bool v) {
  const std::uint8_t mask = std::uint8_t(1U << (7 - (i & 7)));
  if (v) bytes_[i >> 3] |= mask;
  else bytes_[i >> 3] &= std::uint8_t(~mask);
}

void BitStream::push_back(bool v) {
  if (bit_length_ == capacity_bits()) bytes_.push_back(0);
  set(bit_length_++, v);
}

std::size_t BitStream::hamming_distance(const BitStream& other) const {
  if (other.bit_length_ != bit_length_) {
    throw std::invalid_argument("hamming_distance: stream lengths differ");
  }
  std::size_t d = 0;
  for (std::size_t i = 0; i < bit_length_; ++i) d += get(i) != other.get(i);
  return d;
}

bool BitStream::operator==(const BitStream& other) const {
  return bit_length_ == other.bit_length_ && symbol_width_ == other.symbol_width_ &&
         symbol_count_ == other.symbol_count_ && hamming_distance(other) == 0;
}

BitStream pack_fixed(std::span<const int> indices, int width) {
  if (width < 1 || width > 31) throw std::invalid_argument("pack_fixed: width must be in [1, 31]");
  BitStream s(indices.size() * std::size_t(width));
  std::size_t pos = 0;
  for (int v : indices) {
    if (v < 0 || v >= (1 << width)) {
      throw std::out_of_range("pack_fixed: symbol " + std::to_string(v) + " does not fit in " +
                              std::to_string(width) + " bits");
    }
    for (int b = width - 1; b >= 0; --b) s.set(pos++, (v >> b) & 1);
  }
  s.set_symbol_layout(width, indices.size());
  return s;
}

std::vector<int> unpack_fixed(const BitStream& s) {
  if (!s.symbol_width()) throw std::invalid_argument("unpack_fixed: stream has no symbol width");
  const int width = *s.symbol_width();
  if (s.bit_length() % std::size_t(width) != 0) {
    throw std::invalid_argument("unpack_fixed: " + std::to_string(s.bit_length()) +
                                " bits is not a multiple of width " + std::to_string(width));
  }
  std::vector<int> out(s.bit_length() / std::size_t(width));
  std::size_t pos = 0;
  for (auto& v : out) {
    int x = 0;
    for (int b = 0; b < width; ++b) x = (x << 1) | int(s.get(pos++));
    v = x;
  }
  return out;
}

namespace {
constexpr char kDumpMagic[8] = {'S', 'N', 'N', 'B', 'I', 'T', 'S', '1'};
}

void write_dump(const std::filesystem::path& path, const BitStream& s) {
  if (!s.symbol_width()) throw std::invalid_argument("write_dump: only fixed-length streams");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kDumpMagic, 8);
  const std::uint16_t width = std::uint16_t(*s.symbol_width());
  const std::uint64_t count = s.symbol_count();
  os.write(reinterpret_cast<const char*>(&width), sizeof(width));
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  os.write(reinterpret_cast<const char*>(s.bytes().data()), std::streamsize((s.bit_length() + 7) / 8));
  if (!os) throw IoError("write failed for " + path.string());
}

BitStream read_dump(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint16_t width = 0;
  std::uint64_t count = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kDumpMagic, 8) != 0) {
    throw IoError(path.string() + " is not a bit-stream dump (bad magic)");
  }
  if (!is.read(reinterpret_cast<char*>(&width), sizeof(width)) ||
      !is.read(reinterpret_cast<char*>(&count), sizeof(count)) || width == 0) {
    throw IoError("truncated bit-stream header in " + path.string());
  }
  BitStream s(std::size_t(width) * count);
  auto& bytes = s.mutable_bytes();
  if (!is.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()))) {
    throw IoError("truncated bit-stream payload in " + path.string());
  }
  s.set_symbol_layout(int(width), count);
  return s;
}

HuffmanTable huffman_build(std::span<const std::uint64_t> freqs) {
  const std::size_t nonzero = std::count_if(freqs.begin(), freqs.end(), [](auto f) { return f > 0; });
  if (nonzero < 2) {
    throw std::invalid_argument("huffman_build: need at least two symbols with nonzero count");
  }
  struct Tree {
    std::uint64_t weight;
    int min_symbol;
    int left, right;  // child tree ids, or -1
    int symbol;       // leaf symbol or -1
  };
  std::vector<Tree> trees;
  auto cmp = [&trees](int a, int b) {
    if (trees[a].weight != trees[b].weight) return trees[a].weight > trees[b].weight;
    return trees[a].min_symbol > trees[b].min_symbol;
  };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> pq(cmp);
  for (std::size_t s = 0; s < freqs.size(); ++s) {
    if (freqs[s] == 0) continue;
    trees.push_back({freqs[s], int(s), -1, -1, int(s)});
    pq.push(int(trees.size() - 1));
  }
  while (pq.size() > 1) {
    const int a = pq.top();
    pq.pop();
    const int b = pq.top();
    pq.pop();
    trees.push_back({trees[a].weight + trees[b].weight,
                     std::min(trees[a].min_symbol, trees[b].min_symbol), a, b, -1});
    pq.push(int(trees.size() - 1));
  }

  HuffmanTable t;
  t.codes.assign(freqs.size(), {});
  std::vector<std::pair<int, std::vector<bool>>> stack{{pq.top(), {}}};
  while (!stack.empty()) {
    auto [id, prefix] = std::move(stack.back());
    stack.pop_back();
    const auto& node = trees[id];
    if (node.symbol >= 0) {
      t.codes[node.symbol] = prefix;
      continue;
    }
    auto p0 = prefix, p1 = prefix;
    p0.push_back(false);
    p1.push_back(true);
    stack.emplace_back(node.left, std::move(p0));
    stack.emplace_back(node.right, std::move(p1));
  }

  t.trie.emplace_back();
  for (std::size_t s = 0; s < t.codes.size(); ++s) {
    const auto& code = t.codes[s];
    if (code.empty()) continue;
    int cur = 0;
    for (std::size_t i = 0; i < code.size(); ++i) {
      const int b = code[i] ? 1 : 0;
      if (i + 1 == code.size()) {
        t.trie[cur].child[b] = -(int(s) + 1);
        t.trie[cur].has[b] = true;
      } else {
        if (!t.trie[cur].has[b]) {
          t.trie.emplace_back();
          t.trie[cur].child[b] = int(t.trie.size() - 1);
          t.trie[cur].has[b] = true;
        }
        cur = t.trie[cur].child[b];
      }
    }
  }
  return t;
}

BitStream huffman_encode(std::span<const int> symbols, const HuffmanTable& t) {
  BitStream s;
  for (int v : symbols) {
    if (v < 0 || std::size_t(v) >= t.codes.size() || t.codes[v].empty()) {
      throw std::out_of_range("huffman_encode: symbol " + std::to_string(v) + " has no codeword");
    }
    for (bool b : t.codes[v]) s.push_back(b);
  }
  s.set_symbol_layout(std::nullopt, symbols.size());
  return s;
}

ResyncDecode huffman_decode_resync(const BitStream& s, const HuffmanTable& t,
                                   std::size_t expected_count) {
  ResyncDecode out;
  out.symbols.assign(expected_count, 0);
  out.decoded.assign(expected_count, false);
  std::size_t pos = 0, emitted = 0;
  const std::size_t len = s.bit_length();
  while (emitted < expected_count && pos < len) {
    const std::size_t start = pos;
    int cur = 0;
    bool ok = false;
    while (pos < len) {
      const int b = s.get(pos++) ? 1 : 0;
      if (!t.trie[cur].has[b]) break;
      const int next = t.trie[cur].child[b];
      if (next < 0) {
        out.symbols[emitted] = -next - 1;
        out.decoded[emitted] = true;
        ++emitted;
        ok = true;
        break;
      }
      cur = next;
    }
    if (!ok) {
      ++out.resyncs;
      pos = start + 1;
    }
  }
  return out;
}

double positional_recovery(const ResyncDecode& d, std::span<const int> truth) {
  if (truth.empty()) return 1.0;
  const std::size_t n = std::min(truth.size(), d.symbols.size());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < n; ++i) ok += d.decoded[i] && d.symbols[i] == truth[i];
  return double(ok) / double(truth.size());
}

}  // namespace semnn::bits
