#pragma once

#include <cstdint>
#include <vector>

namespace restorekit {

/// PCG32 (XSH-RR, 64-bit state) generator with an explicit stream selector.
///
/// The (seed, stream_id) pair fully determines the output sequence. Both are
/// passed through SplitMix64 before seeding, so adjacent seeds or stream ids
/// produce unrelated sequences. Normal variates use Box-Muller on 53-bit
/// uniforms, which keeps results identical across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint32_t next_u32();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double gaussian();
  std::vector<double> gaussian_samples(std::size_t n);

  /// Independent generator for sub-task `index`. Depends only on
  /// (seed, stream_id, index), never on how far this generator has advanced.
  SeededRng fork(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace restorekit
