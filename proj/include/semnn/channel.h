#pragma once

#include <cstdint>
#include <random>

#include "semnn/bitstream.h"

namespace semnn::channel {

using RngState = std::mt19937_64;

enum class Mode { kFixed, kUniformRange, kPerPositionSchedule };

// Bit-error-rate configuration of the binary symmetric channel.
struct ChannelConfig {
  Mode mode = Mode::kUniformRange;
  double ber = 0.0;           // kFixed
  double ber_lo = 1e-4;       // kUniformRange
  double ber_hi = 5e-2;
  std::vector<double> schedule;  // kPerPositionSchedule: one BER per bit, cycled
  std::uint64_t seed = 0;

  static ChannelConfig fixed(double ber, std::uint64_t seed = 0);
  static ChannelConfig uniform(double lo, double hi, std::uint64_t seed = 0);
  void validate() const;
};

// One uniform draw in [lo, hi]; requires kUniformRange. For kFixed returns ber.
double sample_ber(const ChannelConfig& c, RngState& draw);

struct Transmission {
  bits::BitStream stream;
  double ber_used = 0.0;
  std::size_t flips = 0;
};

// Flips every bit independently with probability ber_used. For kUniformRange
// ber_used is drawn once per call; kPerPositionSchedule uses schedule[i % len].
Transmission transmit(const bits::BitStream& s, const ChannelConfig& c, RngState& draw);

// Flips each bit of `s` in place with probability `ber`; returns the flip count.
std::size_t flip_bits(bits::BitStream& s, double ber, RngState& draw);

// Receiver-side BER estimate from `pilot_bits` known bits sent through the
// same channel realisation.
double estimate_ber(double ber, std::size_t pilot_bits, RngState& draw);

// Deterministic per-stream seed derivation (splitmix64 over the parts).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace semnn::channel
