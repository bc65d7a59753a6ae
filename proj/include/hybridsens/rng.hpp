#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace hybridsens {

/// Source of uniform variates on [0,1). Simulators draw through this
/// interface so tests can script exact threshold sequences.
class UniformSource {
 public:
  virtual ~UniformSource() = default;
  virtual double uniform() = 0;

  /// Unit exponential as -log(u); u == 0 is redrawn.
  double exponential();
};

/// Counter-based stream: Philox4x64-10 keyed by (root_seed, stream_index),
/// with the 256-bit counter holding the block number in its low word.
/// Block 0 is the first block emitted, so stream (s, i) produces the same
/// words as Random123's philox4x64_10(ctr = {n,0,0,0}, key = {s,i}) for
/// n = 0, 1, 2, ... Doubles take the top 53 bits of each 64-bit word.
class RngStream final : public UniformSource {
 public:
  RngStream(std::uint64_t root_seed, std::uint64_t stream_index);

  /// Stream for a nested task, e.g. the auxiliary pair (path, k, j). The
  /// components are folded through splitmix64 with a domain tag so derived
  /// indices never collide with plain path indices in practice.
  static RngStream derive(std::uint64_t root_seed,
                          std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64();
  double uniform() override;

  static std::array<std::uint64_t, 4> philox4x64_10(
      std::array<std::uint64_t, 4> counter, std::array<std::uint64_t, 2> key);

 private:
  std::array<std::uint64_t, 2> key_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 4> buffer_{};
  int pos_ = 4;
};

std::uint64_t splitmix64(std::uint64_t x);

inline constexpr std::uint64_t kDefaultSeed = 0x5EED000000000001ULL;

}  // namespace hybridsens
