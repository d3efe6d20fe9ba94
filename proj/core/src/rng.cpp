#include "trialforge/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace trialforge {

namespace {

constexpr std::uint32_t kMult0 = 0xD2511F53u;
constexpr std::uint32_t kMult1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::array<std::uint32_t, 4>& c,
                       const std::array<std::uint32_t, 2>& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMult0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMult1) * c[2];
  c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0],
       static_cast<std::uint32_t>(p1),
       static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1],
       static_cast<std::uint32_t>(p0)};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    round_once(counter, key);
  }
  return counter;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

RandomStream::RandomStream(std::uint64_t seed, std::string_view label)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      stream_hash_(fnv1a64(label)) {}

std::array<std::uint32_t, 4> RandomStream::block() {
  const std::array<std::uint32_t, 4> counter{
      static_cast<std::uint32_t>(draw_), static_cast<std::uint32_t>(draw_ >> 32),
      static_cast<std::uint32_t>(stream_hash_),
      static_cast<std::uint32_t>(stream_hash_ >> 32)};
  ++draw_;
  return philox4x32(counter, key_);
}

std::uint64_t RandomStream::next_u64() {
  const auto b = block();
  return static_cast<std::uint64_t>(b[1]) << 32 | b[0];
}

double RandomStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::uniform_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
  // Any contiguous run of k*n integers hits each residue k times, so rejecting
  // draws below 2^64 mod n leaves u % n exactly uniform.
  const std::uint64_t reject_below = (0 - n) % n;
  for (;;) {
    const std::uint64_t u = next_u64();
    if (u >= reject_below) return u % n;
  }
}

double RandomStream::normal(double mean, double sd) {
  const auto b = block();
  const std::uint64_t a = static_cast<std::uint64_t>(b[1]) << 32 | b[0];
  const std::uint64_t c = static_cast<std::uint64_t>(b[3]) << 32 | b[2];
  const double u1 = static_cast<double>((a >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(c >> 11) * 0x1.0p-53;        // [0, 1)
  const double z = std::sqrt(-2.0 * std::log(u1)) *
                   std::cos(2.0 * std::numbers::pi * u2);
  return mean + sd * z;
}

}  // namespace trialforge
