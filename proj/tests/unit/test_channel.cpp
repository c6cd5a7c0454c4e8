#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "semnn/channel.h"

using namespace semnn;
using channel::ChannelConfig;
using channel::RngState;

namespace {

bits::BitStream pattern(std::size_t n) {
  bits::BitStream s(n);
  for (std::size_t i = 0; i < n; ++i) s.set(i, (i * 7 + i / 3) % 2);
  return s;
}

}  // namespace

TEST(Channel, ZeroBerIsIdentity) {
  auto s = pattern(5000);
  RngState rng(1);
  auto t = channel::transmit(s, ChannelConfig::fixed(0.0), rng);
  EXPECT_TRUE(t.stream == s);
  EXPECT_EQ(t.flips, 0u);
}

TEST(Channel, UnitBerIsComplement) {
  auto s = pattern(5000);
  RngState rng(2);
  auto t = channel::transmit(s, ChannelConfig::fixed(1.0), rng);
  for (std::size_t i = 0; i < s.bit_length(); ++i) ASSERT_NE(t.stream.get(i), s.get(i));
  EXPECT_EQ(t.flips, 5000u);
}

TEST(Channel, HalfBerFlipCountIsBinomial) {
  const std::size_t n = 10000;
  const auto s = pattern(n);
  double mean = 0.0, chi2 = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RngState rng(seed);
    auto t = channel::transmit(s, ChannelConfig::fixed(0.5), rng);
    EXPECT_EQ(t.stream.hamming_distance(s), t.flips);
    const double f = double(t.flips);
    mean += f / double(n) / 200.0;
    chi2 += (f - n / 2.0) * (f - n / 2.0) / (n / 4.0);
  }
  EXPECT_NEAR(mean, 0.5, 0.02);
  // Sum of 200 squared standard normals; 99th percentile of chi-square(200) is 249.4.
  EXPECT_LT(chi2, 249.4);
}

TEST(Channel, FlipsAreIndependentOfPosition) {
  const std::size_t n = 64;
  std::vector<std::size_t> count(n, 0);
  RngState rng(3);
  const auto s = pattern(n);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    auto r = channel::transmit(s, ChannelConfig::fixed(0.1), rng);
    for (std::size_t i = 0; i < n; ++i) count[i] += r.stream.get(i) != s.get(i);
  }
  double chi2 = 0.0;
  const double e = 0.1 * trials;
  for (auto c : count) chi2 += (double(c) - e) * (double(c) - e) / (e * 0.9);
  // chi-square(64) at 0.01 is 93.2
  EXPECT_LT(chi2, 93.2);
}

TEST(SampleBer, DegenerateRange) {
  RngState rng(4);
  EXPECT_EQ(channel::sample_ber(ChannelConfig::uniform(0.01, 0.01), rng), 0.01);
}

TEST(SampleBer, UniformMeanAndRange) {
  RngState rng(5);
  const auto c = ChannelConfig::uniform(1e-4, 5e-2);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double b = channel::sample_ber(c, rng);
    ASSERT_GE(b, 1e-4);
    ASSERT_LE(b, 5e-2);
    mean += b / 100000.0;
  }
  EXPECT_NEAR(mean, 0.02505, 1e-3);
}

TEST(SampleBer, FixedReturnsBer) {
  RngState rng(6);
  EXPECT_EQ(channel::sample_ber(ChannelConfig::fixed(0.3), rng), 0.3);
}

TEST(Channel, RejectsInvalidConfig) {
  RngState rng(7);
  auto s = pattern(8);
  EXPECT_THROW(channel::transmit(s, ChannelConfig::fixed(1.5), rng), std::invalid_argument);
  EXPECT_THROW(channel::transmit(s, ChannelConfig::fixed(-0.1), rng), std::invalid_argument);
  EXPECT_THROW(channel::transmit(s, ChannelConfig::uniform(0.2, 0.1), rng), std::invalid_argument);
  ChannelConfig sched;
  sched.mode = channel::Mode::kPerPositionSchedule;
  EXPECT_THROW(channel::transmit(s, sched, rng), std::invalid_argument);
}

TEST(Channel, CascadeComposes) {
  const double b1 = 0.1, b2 = 0.2, want = b1 + b2 - 2 * b1 * b2;
  const std::size_t n = 200000;
  const auto s = pattern(n);
  RngState rng(8);
  auto once = channel::transmit(s, ChannelConfig::fixed(b1), rng);
  auto twice = channel::transmit(once.stream, ChannelConfig::fixed(b2), rng);
  const double rate = double(twice.stream.hamming_distance(s)) / double(n);
  const double sd = std::sqrt(want * (1 - want) / double(n));
  EXPECT_NEAR(rate, want, 4 * sd);
}

TEST(Channel, SameSeedSameFlips) {
  const auto s = pattern(3000);
  RngState a(9), b(9), c(10);
  auto ta = channel::transmit(s, ChannelConfig::uniform(0.01, 0.2), a);
  auto tb = channel::transmit(s, ChannelConfig::uniform(0.01, 0.2), b);
  auto tc = channel::transmit(s, ChannelConfig::uniform(0.01, 0.2), c);
  EXPECT_TRUE(ta.stream == tb.stream);
  EXPECT_EQ(ta.ber_used, tb.ber_used);
  EXPECT_FALSE(ta.stream == tc.stream);
}

TEST(Channel, ScheduleCyclesPerPosition) {
  ChannelConfig c;
  c.mode = channel::Mode::kPerPositionSchedule;
  c.schedule = {0.0, 1.0};
  const auto s = pattern(100);
  RngState rng(11);
  auto t = channel::transmit(s, c, rng);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(t.stream.get(i) != s.get(i), i % 2 == 1);
  EXPECT_DOUBLE_EQ(t.ber_used, 0.5);
}

TEST(EstimateBer, ConvergesWithPilotLength) {
  RngState rng(12);
  EXPECT_EQ(channel::estimate_ber(0.0, 1024, rng), 0.0);
  const double est = channel::estimate_ber(0.05, 200000, rng);
  EXPECT_NEAR(est, 0.05, 4 * std::sqrt(0.05 * 0.95 / 200000));
  EXPECT_THROW(channel::estimate_ber(0.05, 0, rng), std::invalid_argument);
}

TEST(DeriveSeed, DeterministicAndDistinct) {
  EXPECT_EQ(channel::derive_seed(1, 2, 3), channel::derive_seed(1, 2, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(channel::derive_seed(7, a, b));
  EXPECT_EQ(seen.size(), 1000u);
}
