#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rdht/addressing.hpp"
#include "rdht/checksum.hpp"
#include "rdht/layout.hpp"
#include "rdht/rma.hpp"

namespace rdht {

struct DhtConfig {
  Protocol protocol = Protocol::lockfree;
  std::size_t key_size = 80;
  std::size_t value_size = 104;
  std::uint64_t buckets = 1u << 16;  // per participant window
};

enum class WriteOutcome { inserted, updated, evicted };

struct DhtStats {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t read_misses = 0;
  std::uint64_t checksum_mismatch_retries = 0;
  std::uint64_t invalidations = 0;
  std::uint64_t evictions = 0;
};

DhtStats operator-(const DhtStats& a, const DhtStats& b) noexcept;

/// Re-fetches of a bucket whose checksum disagrees before it is flagged invalid.
inline constexpr int kChecksumRetries = 3;

inline std::uint32_t checksum32(std::span<const std::byte> bytes) noexcept { return crc32(bytes); }

// Per-bucket Readers&Writers lock words.
inline void bucket_write_lock(rma::Endpoint& ep, Rank rank, std::uint64_t lock_offset) {
  rma::lock_exclusive(ep, rank, lock_offset);
}
inline void bucket_write_unlock(rma::Endpoint& ep, Rank rank, std::uint64_t lock_offset) {
  rma::unlock_exclusive(ep, rank, lock_offset);
}
inline void bucket_read_lock(rma::Endpoint& ep, Rank rank, std::uint64_t lock_offset) {
  rma::lock_shared(ep, rank, lock_offset);
}
inline void bucket_read_unlock(rma::Endpoint& ep, Rank rank, std::uint64_t lock_offset) {
  rma::unlock_shared(ep, rank, lock_offset);
}

/// One participant's handle on the distributed table. The table spans the
/// windows of all participants: bucket i of rank r lives at
/// `kWindowHeaderBytes + i * stride` in r's window.
///
/// Construction and free() are collective. Other calls are local to the
/// calling participant and must come from a single thread.
class Dht {
 public:
  Dht(rma::Endpoint& endpoint, const DhtConfig& cfg);

  Dht(const Dht&) = delete;
  Dht& operator=(const Dht&) = delete;

  /// Window bytes needed for `cfg`: header plus bucket storage.
  static std::size_t required_window(const DhtConfig& cfg);

  WriteOutcome write(std::span<const std::byte> key, std::span<const std::byte> value);

  /// Copies the stored value into `value_out` on a hit.
  bool read(std::span<const std::byte> key, std::span<std::byte> value_out);
  std::optional<std::vector<std::byte>> read(std::span<const std::byte> key);

  /// Collective teardown; the handle rejects further operations.
  void free();

  DhtStats stats() const noexcept { return stats_; }
  const DhtConfig& config() const noexcept { return cfg_; }
  const BucketLayout& layout() const noexcept { return layout_; }
  unsigned index_width() const noexcept { return width_; }
  std::size_t participants() const noexcept { return endpoint_.participants(); }
  rma::Endpoint& endpoint() noexcept { return endpoint_; }

  std::uint64_t bucket_offset(std::uint64_t index) const noexcept {
    return rma::kWindowHeaderBytes + index * layout_.stride;
  }
  /// First window byte past the bucket storage.
  std::uint64_t region_end() const noexcept { return bucket_offset(cfg_.buckets); }

 private:
  struct Probe {
    Rank rank = 0;
    unsigned count = 0;
    std::array<std::uint64_t, 8> indices{};
  };

  Probe probe_for(std::span<const std::byte> key) const noexcept;
  void check_sizes(std::span<const std::byte> key, std::size_t value_size) const;
  void check_live() const;
  bool key_at(std::span<const std::byte> image, std::span<const std::byte> key) const noexcept;

  WriteOutcome write_coarse(const Probe& p);
  WriteOutcome write_fine(const Probe& p);
  WriteOutcome write_lockfree(const Probe& p);
  bool read_coarse(const Probe& p, std::span<const std::byte> key, std::span<std::byte> out);
  bool read_fine(const Probe& p, std::span<const std::byte> key, std::span<std::byte> out);
  bool read_lockfree(const Probe& p, std::span<const std::byte> key, std::span<std::byte> out);

  rma::Endpoint& endpoint_;
  DhtConfig cfg_;
  BucketLayout layout_;
  unsigned width_;
  bool freed_ = false;
  DhtStats stats_;
  std::vector<std::byte> image_;    // bucket being written
  std::vector<std::byte> scratch_;  // bucket fetched while probing
};

}  // namespace rdht
