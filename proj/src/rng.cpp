#include "hybridsens/rng.hpp"

#include <cmath>

namespace hybridsens {

namespace {

constexpr std::uint64_t kPhiloxM0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kPhiloxM1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kPhiloxW0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kPhiloxW1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                    std::uint64_t& lo) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

constexpr std::uint64_t kDerivedTag = 0xA0C5D1E7F00DULL;

}  // namespace

double UniformSource::exponential() {
  double u = uniform();
  while (u == 0.0) u = uniform();
  return -std::log(u);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t root_seed, std::uint64_t stream_index)
    : key_{root_seed, stream_index} {}

RngStream RngStream::derive(std::uint64_t root_seed,
                            std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(kDerivedTag);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 1));
  // Plain path streams use small indices; derived ones live in the upper half.
  return RngStream(root_seed, h | (1ULL << 63));
}

std::array<std::uint64_t, 4> RngStream::philox4x64_10(
    std::array<std::uint64_t, 4> ctr, std::array<std::uint64_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::uint64_t RngStream::next_u64() {
  if (pos_ == 4) {
    buffer_ = philox4x64_10({block_, 0, 0, 0}, key_);
    ++block_;
    pos_ = 0;
  }
  return buffer_[pos_++];
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

}  // namespace hybridsens
