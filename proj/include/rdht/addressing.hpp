#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rdht {

using Rank = std::uint32_t;

/// Cached key -> (rank, candidate buckets) mapping.
struct Address {
  Rank rank = 0;
  std::vector<std::uint64_t> indices;
};

/// FNV-1a, 64 bit.
std::uint64_t hash64(std::span<const std::byte> key) noexcept;

/// Smallest n >= 1 with 2^(8n) >= buckets. Throws std::invalid_argument on 0.
unsigned index_width(std::uint64_t buckets);

inline Rank target_rank(std::uint64_t hash, std::size_t participants) noexcept {
  return static_cast<Rank>(hash % participants);
}

/// Slides an n-byte window over the big-endian bytes of `hash`, one byte at a
/// time, giving 9 - n indices reduced mod `buckets`.
std::vector<std::uint64_t> candidate_indices(std::uint64_t hash, std::uint64_t buckets);

/// Same as above with a precomputed width; writes 9 - width entries to `out`.
void candidate_indices(std::uint64_t hash, std::uint64_t buckets, unsigned width,
                       std::span<std::uint64_t> out) noexcept;

Address address_of(std::span<const std::byte> key, std::size_t participants,
                   std::uint64_t buckets);

}  // namespace rdht
