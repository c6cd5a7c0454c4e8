#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "semnn/bitstream.h"

using namespace semnn;
using bits::BitStream;

namespace {

std::string bit_string(const BitStream& s) {
  std::string out;
  for (std::size_t i = 0; i < s.bit_length(); ++i) out += s.get(i) ? '1' : '0';
  return out;
}

std::vector<int> random_symbols(std::size_t n, int width, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, (1 << width) - 1);
  std::vector<int> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::size_t differing(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

}  // namespace

TEST(PackFixed, SingleSymbol) { EXPECT_EQ(bit_string(bits::pack_fixed(std::vector<int>{5}, 3)), "101"); }

TEST(PackFixed, TwoSymbols) {
  auto s = bits::pack_fixed(std::vector<int>{0, 7}, 3);
  EXPECT_EQ(bit_string(s), "000111");
  EXPECT_EQ(bits::unpack_fixed(s), (std::vector<int>{0, 7}));
}

TEST(PackFixed, LengthAndCapacity) {
  std::mt19937_64 rng(1);
  for (int w = 1; w <= 16; ++w) {
    auto sym = random_symbols(37, w, rng);
    auto s = bits::pack_fixed(sym, w);
    EXPECT_EQ(s.bit_length(), 37u * std::size_t(w));
    EXPECT_LE(s.bit_length(), s.capacity_bits());
    EXPECT_EQ(s.symbol_width(), w);
    EXPECT_EQ(s.symbol_count(), 37u);
  }
}

TEST(PackFixed, RoundTripAllWidths) {
  std::mt19937_64 rng(2);
  for (int w = 1; w <= 16; ++w) {
    auto sym = random_symbols(10000, w, rng);
    EXPECT_EQ(bits::unpack_fixed(bits::pack_fixed(sym, w)), sym) << "width " << w;
  }
}

TEST(PackFixed, RejectsOutOfRange) {
  EXPECT_THROW(bits::pack_fixed(std::vector<int>{8}, 3), std::out_of_range);
  EXPECT_THROW(bits::pack_fixed(std::vector<int>{-1}, 3), std::out_of_range);
  EXPECT_THROW(bits::pack_fixed(std::vector<int>{0}, 0), std::invalid_argument);
  EXPECT_THROW(bits::pack_fixed(std::vector<int>{0}, 32), std::invalid_argument);
}

TEST(UnpackFixed, OneFlipOneSymbol) {
  std::mt19937_64 rng(3);
  auto sym = random_symbols(1000, 3, rng);
  for (std::size_t pos : {0ul, 1ul, 1499ul, 2999ul}) {
    auto s = bits::pack_fixed(sym, 3);
    s.flip(pos);
    EXPECT_EQ(differing(bits::unpack_fixed(s), sym), 1u);
  }
}

TEST(UnpackFixed, FlipsBoundCorruptedSymbols) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    const int w = 1 + int(rng() % 16);
    auto sym = random_symbols(64, w, rng);
    auto s = bits::pack_fixed(sym, w);
    const std::size_t k = rng() % 40;
    std::set<std::size_t> pos;
    while (pos.size() < std::min<std::size_t>(k, s.bit_length())) pos.insert(rng() % s.bit_length());
    for (auto p : pos) s.flip(p);
    EXPECT_LE(differing(bits::unpack_fixed(s), sym), pos.size());
  }
}

TEST(UnpackFixed, NeedsLayout) {
  BitStream s(6);
  EXPECT_THROW(bits::unpack_fixed(s), std::invalid_argument);
}

TEST(BitStream, HammingAndEquality) {
  auto a = bits::pack_fixed(std::vector<int>{1, 2, 3}, 4), b = a;
  EXPECT_TRUE(a == b);
  b.flip(0);
  b.flip(11);
  EXPECT_EQ(a.hamming_distance(b), 2u);
  EXPECT_FALSE(a == b);
}

TEST(Dump, RoundTrip) {
  std::mt19937_64 rng(5);
  auto s = bits::pack_fixed(random_symbols(333, 5, rng), 5);
  const auto p = std::filesystem::temp_directory_path() / "semnn_dump_test.bits";
  bits::write_dump(p, s);
  auto r = bits::read_dump(p);
  EXPECT_TRUE(r == s);
  EXPECT_EQ(r.symbol_width(), 5);
  EXPECT_EQ(r.symbol_count(), 333u);
  std::filesystem::remove(p);
}

TEST(Dump, RejectsBadMagic) {
  const auto p = std::filesystem::temp_directory_path() / "semnn_dump_bad.bits";
  {
    std::ofstream f(p, std::ios::binary);
    f << "NOTADUMP0000000000000";
  }
  EXPECT_THROW(bits::read_dump(p), std::runtime_error);
  std::filesystem::remove(p);
}

TEST(Huffman, TwoEqualSymbols) {
  auto t = bits::huffman_build(std::vector<std::uint64_t>{1, 1});
  EXPECT_EQ(t.codes[0].size(), 1u);
  EXPECT_EQ(t.codes[1].size(), 1u);
}

TEST(Huffman, TextbookLengths) {
  auto t = bits::huffman_build(std::vector<std::uint64_t>{1, 1, 2});
  EXPECT_EQ(t.codes[0].size(), 2u);
  EXPECT_EQ(t.codes[1].size(), 2u);
  EXPECT_EQ(t.codes[2].size(), 1u);
}

TEST(Huffman, KraftEqualityAndEntropyBound) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 15;
    std::vector<std::uint64_t> f(n);
    const double skew = 1.0 + double(rng() % 5);
    for (std::size_t i = 0; i < n; ++i) f[i] = 1 + std::uint64_t(1000.0 * std::pow(skew, -double(i))) + rng() % 3;
    auto t = bits::huffman_build(f);
    double total = 0.0, kraft = 0.0, avg = 0.0, h = 0.0;
    for (auto v : f) total += double(v);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = double(f[i]) / total;
      kraft += std::pow(2.0, -double(t.codes[i].size()));
      avg += p * double(t.codes[i].size());
      h -= p * std::log2(p);
    }
    EXPECT_NEAR(kraft, 1.0, 1e-12);
    EXPECT_LE(avg, h + 1.0);
    EXPECT_GE(avg, h - 1e-12);
  }
}

TEST(Huffman, PrefixFree) {
  auto t = bits::huffman_build(std::vector<std::uint64_t>{50, 20, 10, 10, 5, 3, 1, 1});
  for (std::size_t a = 0; a < t.codes.size(); ++a)
    for (std::size_t b = 0; b < t.codes.size(); ++b) {
      if (a == b || t.codes[a].size() > t.codes[b].size()) continue;
      EXPECT_FALSE(std::equal(t.codes[a].begin(), t.codes[a].end(), t.codes[b].begin())) << a << " " << b;
    }
}

TEST(Huffman, DeterministicTies) {
  std::vector<std::uint64_t> f{3, 3, 3, 3, 3};
  auto a = bits::huffman_build(f), b = bits::huffman_build(f);
  EXPECT_EQ(a.codes, b.codes);
}

TEST(Huffman, CleanStreamFullyRecovered) {
  std::mt19937_64 rng(7);
  std::vector<int> sym(10000);
  std::discrete_distribution<int> d({64.0, 8.0, 1.0, 0.5, 0.25, 0.1, 0.05, 0.01});
  for (auto& s : sym) s = d(rng);
  std::vector<std::uint64_t> f(8, 0);
  for (int s : sym) ++f[std::size_t(s)];
  auto t = bits::huffman_build(f);
  auto dec = bits::huffman_decode_resync(bits::huffman_encode(sym, t), t, sym.size());
  EXPECT_EQ(dec.symbols, sym);
  EXPECT_EQ(dec.resyncs, 0u);
  EXPECT_DOUBLE_EQ(bits::positional_recovery(dec, sym), 1.0);
}

TEST(Huffman, SingleFlipCorruptsSeveralSymbols) {
  // Witness search: some single flip in a 100-symbol stream breaks more than one symbol.
  std::mt19937_64 rng(8);
  std::vector<int> sym(100);
  std::discrete_distribution<int> d({8.0, 4.0, 2.0, 1.0, 1.0});
  for (auto& s : sym) s = d(rng);
  std::vector<std::uint64_t> f(5, 0);
  for (int s : sym) ++f[std::size_t(s)];
  auto t = bits::huffman_build(f);
  const auto clean = bits::huffman_encode(sym, t);
  std::size_t worst = 0;
  for (std::size_t p = 0; p < clean.bit_length(); ++p) {
    auto s = clean;
    s.flip(p);
    auto dec = bits::huffman_decode_resync(s, t, sym.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < sym.size(); ++i) bad += !(dec.decoded[i] && dec.symbols[i] == sym[i]);
    worst = std::max(worst, bad);
  }
  EXPECT_GT(worst, 1u);
}

TEST(Huffman, ResyncSkipsInvalidBranch) {
  // Incomplete code: symbol 0 -> "0", symbol 1 -> "10"; "11" is invalid.
  bits::HuffmanTable t;
  t.codes = {{false}, {true, false}};
  t.trie.resize(2);
  t.trie[0].child[0] = -1;
  t.trie[0].has[0] = true;
  t.trie[0].child[1] = 1;
  t.trie[0].has[1] = true;
  t.trie[1].child[0] = -2;
  t.trie[1].has[0] = true;
  BitStream s;
  for (char c : std::string("0110")) s.push_back(c == '1');
  auto dec = bits::huffman_decode_resync(s, t, 3);
  // "0" -> 0, "11" fails, skip one bit, "10" -> 1
  EXPECT_EQ(dec.resyncs, 1u);
  EXPECT_EQ(dec.symbols[0], 0);
  EXPECT_EQ(dec.symbols[1], 1);
  EXPECT_TRUE(dec.decoded[1]);
  EXPECT_FALSE(dec.decoded[2]);
}

TEST(Huffman, SymbolsWithoutCodeRejected) {
  auto t = bits::huffman_build(std::vector<std::uint64_t>{5, 0, 3});
  EXPECT_TRUE(t.codes[1].empty());
  EXPECT_THROW(bits::huffman_encode(std::vector<int>{1}, t), std::out_of_range);
}
