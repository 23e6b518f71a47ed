#include "restorekit/rng.hpp"

#include <cmath>
#include <numbers>

namespace restorekit {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  // pcg32_srandom_r with pre-mixed inputs.
  inc_ = (splitmix64(stream_id ^ 0xA0761D6478BD642FULL) << 1u) | 1u;
  state_ = 0;
  next_u32();
  state_ += splitmix64(seed);
  next_u32();
}

std::uint32_t SeededRng::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * 6364136223846793005ULL + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  const auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
}

double SeededRng::uniform() {
  const std::uint64_t a = next_u32() >> 5;  // 27 bits
  const std::uint64_t b = next_u32() >> 6;  // 26 bits
  return static_cast<double>(a * 67108864ULL + b) / 9007199254740992.0;
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
  if (n <= 1) return 0;
  // Lemire-free rejection on 64-bit draws; n is small everywhere we use it.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  while (true) {
    const std::uint64_t r = (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
    if (r < limit) return r % n;
  }
}

double SeededRng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::vector<double> SeededRng::gaussian_samples(std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = gaussian();
  return out;
}

SeededRng SeededRng::fork(std::uint64_t index) const {
  const std::uint64_t child = splitmix64(stream_id_ ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
  return SeededRng(seed_, child);
}

}  // namespace restorekit
