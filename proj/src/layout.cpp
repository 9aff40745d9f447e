#include "rdht/layout.hpp"

#include <cstring>
#include <stdexcept>

#include "rdht/checksum.hpp"

namespace rdht {

Protocol parse_protocol(const std::string& name) {
  if (name == "coarse") return Protocol::coarse;
  if (name == "fine") return Protocol::fine;
  if (name == "lockfree") return Protocol::lockfree;
  throw std::invalid_argument("unknown protocol '" + name + "' (expected coarse|fine|lockfree)");
}

const char* to_string(Protocol p) noexcept {
  switch (p) {
    case Protocol::coarse: return "coarse";
    case Protocol::fine: return "fine";
    case Protocol::lockfree: return "lockfree";
  }
  return "?";
}

BucketLayout bucket_layout(Protocol protocol, std::size_t key_size, std::size_t value_size) {
  if (key_size == 0) throw std::invalid_argument("key size must be >= 1");
  BucketLayout l;
  l.protocol = protocol;
  l.key_size = key_size;
  l.value_size = value_size;
  switch (protocol) {
    case Protocol::coarse:
      l.key_offset = 0;
      l.value_offset = key_size;
      l.meta_offset = key_size + value_size;
      l.stride = l.meta_offset + 1;
      break;
    case Protocol::fine:
      l.lock_offset = 0;
      l.key_offset = 8;
      l.value_offset = 8 + key_size;
      l.meta_offset = l.value_offset + value_size;
      l.stride = (l.meta_offset + 1 + 7) / 8 * 8;
      break;
    case Protocol::lockfree:
      l.key_offset = 0;
      l.value_offset = key_size;
      l.checksum_offset = key_size + value_size;
      l.meta_offset = l.checksum_offset + 4;
      l.stride = l.meta_offset + 1;
      break;
  }
  return l;
}

namespace {

std::uint32_t stored_checksum(const BucketLayout& l, std::span<const std::byte> image) noexcept {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(image[l.checksum_offset + i]))
         << (8 * i);
  return v;
}

}  // namespace

void encode_bucket(const BucketLayout& l, std::span<const std::byte> key,
                   std::span<const std::byte> value, std::uint8_t meta,
                   std::span<std::byte> out) {
  if (key.size() != l.key_size || value.size() != l.value_size || out.size() < l.stride)
    throw std::invalid_argument("encode_bucket: size mismatch");
  std::memset(out.data(), 0, l.stride);
  std::memcpy(out.data() + l.key_offset, key.data(), key.size());
  if (!value.empty()) std::memcpy(out.data() + l.value_offset, value.data(), value.size());
  if (l.has_checksum()) {
    const std::uint32_t crc = crc32(out.subspan(l.key_offset, l.key_size + l.value_size));
    for (int i = 0; i < 4; ++i)
      out[l.checksum_offset + i] = static_cast<std::byte>((crc >> (8 * i)) & 0xFF);
  }
  out[l.meta_offset] = static_cast<std::byte>(meta);
}

bool checksum_matches(const BucketLayout& l, std::span<const std::byte> image) noexcept {
  return crc32(image.subspan(l.key_offset, l.key_size + l.value_size)) ==
         stored_checksum(l, image);
}

}  // namespace rdht
