#pragma once

#include <cstdint>

namespace sara {

/// Counter-based random stream keyed by (seed, stream_id).
///
/// Draw k of a stream is a pure function of (seed, stream_id, k), so streams can be
/// split per layer / per purpose without any shared state and reproduce bit-for-bit
/// on every platform. Normals use the Marsaglia polar method (log + sqrt only).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal() noexcept;
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Child stream whose id is derived from this stream's key and `tag`.
  RngStream split(std::uint64_t tag) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; exposed for deriving stream ids from tags.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combine tags into a stream id (order sensitive).
constexpr std::uint64_t stream_tag(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a * 0x9e3779b97f4a7c15ULL + mix64(b + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t stream_tag(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  return stream_tag(stream_tag(a, b), c);
}

}  // namespace sara
