#include "sara/rng.hpp"

#include <cmath>

namespace sara {

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    : seed_(seed),
      stream_id_(stream_id),
      key_(mix64(seed ^ mix64(stream_id + 0xd1b54a32d192ed03ULL))) {}

std::uint64_t RngStream::next_u64() noexcept {
  // Two keyed finalizer rounds over the counter.
  const std::uint64_t c = counter_++;
  const std::uint64_t a = mix64(key_ + (c + 1) * 0x9e3779b97f4a7c15ULL);
  return mix64(a ^ (key_ >> 17) ^ (c * 0xda942042e4dd58b5ULL));
}

double RngStream::uniform() noexcept {
  // 53-bit mantissa, shifted by half an ulp to exclude 0.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  // Lemire's rejection keeps the result exactly uniform.
  unsigned __int128 prod = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(prod);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      prod = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(prod);
    }
  }
  return static_cast<std::uint64_t>(prod >> 64);
}

RngStream RngStream::split(std::uint64_t tag) const noexcept {
  return RngStream(seed_, stream_tag(stream_id_, tag));
}

}  // namespace sara
