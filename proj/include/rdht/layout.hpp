#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace rdht {

enum class Protocol { coarse, fine, lockfree };

Protocol parse_protocol(const std::string& name);
const char* to_string(Protocol p) noexcept;

inline constexpr std::uint8_t kMetaOccupied = 0x01;
inline constexpr std::uint8_t kMetaInvalid = 0x02;

/// Byte layout of one bucket. Offsets are relative to the bucket start.
///   coarse:   key | value | meta
///   fine:     lock(8) | key | value | meta | pad to 8
///   lockfree: key | value | crc32 (LE) | meta
struct BucketLayout {
  Protocol protocol = Protocol::coarse;
  std::size_t key_size = 0;
  std::size_t value_size = 0;
  std::size_t lock_offset = 0;  // fine only
  std::size_t key_offset = 0;
  std::size_t value_offset = 0;
  std::size_t checksum_offset = 0;  // lockfree only
  std::size_t meta_offset = 0;
  std::size_t stride = 0;

  bool has_lock() const noexcept { return protocol == Protocol::fine; }
  bool has_checksum() const noexcept { return protocol == Protocol::lockfree; }
  /// Bytes beyond key and value.
  std::size_t overhead() const noexcept { return stride - key_size - value_size; }
};

BucketLayout bucket_layout(Protocol protocol, std::size_t key_size, std::size_t value_size);

/// Fills a full `stride`-byte bucket image: key, value, meta, and for lockfree
/// the checksum of key ++ value. Lock and pad bytes are zero.
void encode_bucket(const BucketLayout& layout, std::span<const std::byte> key,
                   std::span<const std::byte> value, std::uint8_t meta,
                   std::span<std::byte> out);

/// crc32 over key ++ value of a lockfree image equals its stored checksum.
bool checksum_matches(const BucketLayout& layout, std::span<const std::byte> image) noexcept;

}  // namespace rdht
