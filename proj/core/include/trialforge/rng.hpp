#pragma once
// Counter-based randomness built on Philox4x32-10, chosen for portable,
// cross-language reproducibility: every draw is a pure function of
// (seed, stream label, draw index), so digests of generated artifacts are
// stable across platforms and scheduling.
//
// Stream derivation rule:
//   key     = (seed lo32, seed hi32)
//   counter = (draw lo32, draw hi32, fnv lo32, fnv hi32)
// where fnv is the FNV-1a-64 hash of the stream label with any integer
// qualifiers appended as "/<decimal>". One Philox block is consumed per
// next_u64() call (lanes 0,1) and per normal() call (all four lanes).

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace trialforge {

// One application of the 10-round Philox4x32 bijection. Exposed for
// known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t fnv1a64(std::string_view bytes);

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view label);

  template <typename... Qualifiers>
  RandomStream(std::uint64_t seed, std::string_view label, Qualifiers... qualifiers)
      : RandomStream(seed, qualify(label, qualifiers...)) {}

  // Uniform over the full 64-bit range; lanes 0,1 of one block.
  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double next_unit();

  // Uniform integer in [0, n) by modulo rejection; n must be positive.
  std::uint64_t uniform_below(std::uint64_t n);

  // One Box-Muller cosine draw from a single block: lanes 0,1 make u1 in
  // (0, 1], lanes 2,3 make u2 in [0, 1).
  double normal(double mean, double sd);

  [[nodiscard]] std::uint64_t draws() const { return draw_; }

 private:
  static std::string qualify(std::string_view label) { return std::string(label); }
  template <typename First, typename... Rest>
  static std::string qualify(std::string_view label, First first, Rest... rest) {
    return qualify(std::string(label) + "/" + std::to_string(first), rest...);
  }

  std::array<std::uint32_t, 4> block();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_hash_ = 0;
  std::uint64_t draw_ = 0;
};

}  // namespace trialforge
