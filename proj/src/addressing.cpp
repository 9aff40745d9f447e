#include "rdht/addressing.hpp"

#include <stdexcept>

namespace rdht {

std::uint64_t hash64(std::span<const std::byte> key) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::byte b : key) {
    h ^= static_cast<std::uint8_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

unsigned index_width(std::uint64_t buckets) {
  if (buckets == 0) throw std::invalid_argument("index_width: bucket count must be >= 1");
  unsigned n = 1;
  while (n < 8 && (buckets - 1) >> (8 * n) != 0) ++n;
  return n;
}

void candidate_indices(std::uint64_t hash, std::uint64_t buckets, unsigned width,
                       std::span<std::uint64_t> out) noexcept {
  const unsigned count = 9 - width;
  for (unsigned i = 0; i < count && i < out.size(); ++i) {
    // Bytes i .. i+width-1 counted from the most significant end.
    const unsigned shift = 8 * (8 - i - width);
    std::uint64_t v = hash >> shift;
    if (width < 8) v &= (std::uint64_t{1} << (8 * width)) - 1;
    out[i] = v % buckets;
  }
}

std::vector<std::uint64_t> candidate_indices(std::uint64_t hash, std::uint64_t buckets) {
  const unsigned n = index_width(buckets);
  std::vector<std::uint64_t> out(9 - n);
  candidate_indices(hash, buckets, n, out);
  return out;
}

Address address_of(std::span<const std::byte> key, std::size_t participants,
                   std::uint64_t buckets) {
  const std::uint64_t h = hash64(key);
  return Address{target_rank(h, participants), candidate_indices(h, buckets)};
}

}  // namespace rdht
