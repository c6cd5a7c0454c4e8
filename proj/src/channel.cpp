#include "semnn/channel.h"

#include <stdexcept>
#include <string>

namespace semnn::channel {

ChannelConfig ChannelConfig::fixed(double ber, std::uint64_t seed) {
  ChannelConfig c;
  c.mode = Mode::kFixed;
  c.ber = ber;
  c.seed = seed;
  return c;
}

ChannelConfig ChannelConfig::uniform(double lo, double hi, std::uint64_t seed) {
  ChannelConfig c;
  c.mode = Mode::kUniformRange;
  c.ber_lo = lo;
  c.ber_hi = hi;
  c.seed = seed;
  return c;
}

void ChannelConfig::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  switch (mode) {
    case Mode::kFixed:
      if (!in_unit(ber)) throw std::invalid_argument("channel: ber must be in [0,1], got " + std::to_string(ber));
      break;
    case Mode::kUniformRange:
      if (!in_unit(ber_lo) || !in_unit(ber_hi) || ber_lo > ber_hi) {
        throw std::invalid_argument("channel: need 0 <= ber_lo <= ber_hi <= 1");
      }
      break;
    case Mode::kPerPositionSchedule:
      if (schedule.empty()) throw std::invalid_argument("channel: empty per-position schedule");
      for (double p : schedule)
        if (!in_unit(p)) throw std::invalid_argument("channel: schedule entry outside [0,1]");
      break;
  }
}

double sample_ber(const ChannelConfig& c, RngState& draw) {
  c.validate();
  if (c.mode == Mode::kFixed) return c.ber;
  if (c.mode != Mode::kUniformRange) {
    throw std::invalid_argument("sample_ber: per-position schedules have no single BER");
  }
  if (c.ber_lo == c.ber_hi) return c.ber_lo;
  std::uniform_real_distribution<double> u(c.ber_lo, c.ber_hi);
  return u(draw);
}

std::size_t flip_bits(bits::BitStream& s, double ber, RngState& draw) {
  if (ber <= 0.0) return 0;
  std::size_t flips = 0;
  if (ber >= 1.0) {
    for (std::size_t i = 0; i < s.bit_length(); ++i) s.flip(i);
    return s.bit_length();
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < s.bit_length(); ++i) {
    if (u(draw) < ber) {
      s.flip(i);
      ++flips;
    }
  }
  return flips;
}

Transmission transmit(const bits::BitStream& s, const ChannelConfig& c, RngState& draw) {
  c.validate();
  Transmission t{s, 0.0, 0};
  if (c.mode == Mode::kPerPositionSchedule) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.bit_length(); ++i) {
      const double p = c.schedule[i % c.schedule.size()];
      acc += p;
      if (u(draw) < p) {
        t.stream.flip(i);
        ++t.flips;
      }
    }
    t.ber_used = s.bit_length() ? acc / double(s.bit_length()) : 0.0;
    return t;
  }
  t.ber_used = sample_ber(c, draw);
  t.flips = flip_bits(t.stream, t.ber_used, draw);
  return t;
}

double estimate_ber(double ber, std::size_t pilot_bits, RngState& draw) {
  if (pilot_bits == 0) throw std::invalid_argument("estimate_ber: pilot length must be positive");
  bits::BitStream pilot(pilot_bits);
  for (std::size_t i = 0; i < pilot_bits; ++i) pilot.set(i, i & 1);
  bits::BitStream received = pilot;
  flip_bits(received, ber, draw);
  return double(received.hamming_distance(pilot)) / double(pilot_bits);
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ b);
}

}  // namespace semnn::channel
