#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace semnn::bits {

// Packed bit sequence. Bit i lives in byte i/8 at position 7 - i%8 (MSB first).
class BitStream {
 public:
  BitStream() = default;
  explicit BitStream(std::size_t bit_length);

  std::size_t bit_length() const { return bit_length_; }
  std::size_t capacity_bits() const { return bytes_.size() * 8; }
  std::optional<int> symbol_width() const { return symbol_width_; }
  std::size_t symbol_count() const { return symbol_count_; }
  void set_symbol_layout(std::optional<int> width, std::size_t count);

  bool get(std::size_t i) const { return (bytes_[i >> 3] >> (7 - (i & 7))) & 1U; }
  void set(std::size_t i, bool v);
  void flip(std::size_t i) { bytes_[i >> 3] ^= std::uint8_t(1U << (7 - (i & 7))); }
  void push_back(bool v);

  std::span<const std::uint8_t> bytes() const { return bytes_; }
  std::vector<std::uint8_t>& mutable_bytes() { return bytes_; }

  // Number of positions where the two streams differ (equal lengths required).
  std::size_t hamming_distance(const BitStream& other) const;
  bool operator==(const BitStream& other) const;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_length_ = 0;
  std::optional<int> symbol_width_;
  std::size_t symbol_count_ = 0;
};

// Fixed-length packing: each symbol big-endian in `width` bits, concatenated.
BitStream pack_fixed(std::span<const int> indices, int width);
std::vector<int> unpack_fixed(const BitStream& s);

// Dump format (little-endian integers):
//   magic "SNNBITS1" (8 bytes), symbol_width u16, symbol_count u64,
//   packed bits ceil(symbol_width * symbol_count / 8) bytes.
void write_dump(const std::filesystem::path& path, const BitStream& s);
BitStream read_dump(const std::filesystem::path& path);

struct HuffmanTable {
  std::vector<std::vector<bool>> codes;  // codeword per symbol (empty if unused)
  // Decode trie: node 0 is the root; child[b] < 0 encodes leaf symbol -(child+1).
  struct TrieNode {
    int child[2] = {0, 0};
    bool has[2] = {false, false};
  };
  std::vector<TrieNode> trie;

  std::size_t symbols() const { return codes.size(); }
};

// Optimal prefix code. Ties among equal weights are broken by the smallest
// symbol index contained in each subtree, so the result is deterministic.
HuffmanTable huffman_build(std::span<const std::uint64_t> freqs);
BitStream huffman_encode(std::span<const int> symbols, const HuffmanTable& t);

struct ResyncDecode {
  std::vector<int> symbols;           // exactly expected_count entries (filler 0)
  std::vector<bool> decoded;          // position filled from a complete codeword
  std::size_t resyncs = 0;            // number of single-bit skips performed
};

// Walks the trie; on an invalid branch or a codeword cut off by the stream end,
// skips one bit past the start of the failed codeword and restarts at the root.
// Emits at most expected_count symbols.
ResyncDecode huffman_decode_resync(const BitStream& s, const HuffmanTable& t,
                                   std::size_t expected_count);

// Fraction of positions i with decoded[i] and symbols[i] == truth[i].
double positional_recovery(const ResyncDecode& d, std::span<const int> truth);

}  // namespace semnn::bits
