#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace rdht {

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320). `seed` is a previous
/// result, so crc32(b, crc32(a)) == crc32(a ++ b).
std::uint32_t crc32(std::span<const std::byte> data, std::uint32_t seed = 0) noexcept;

}  // namespace rdht
