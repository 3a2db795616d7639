#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace frn {

/// Philox4x32-10 counter-based block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Deterministic stream keyed by (seed, stream id). Every draw advances an
/// internal block counter, so two generators with the same key always agree,
/// and independent trials can each own a stream.
class CounterRng {
 public:
  static constexpr std::string_view kName = "philox4x32-10";

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n), unbiased. n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t blocks_used() const { return block_; }

  /// Jump to a previously recorded position (see blocks_used()). Positions are
  /// block-granular: unread words of the current block are dropped.
  void seek(std::uint64_t block);

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  std::optional<double> spare_normal_;
};

}  // namespace frn
