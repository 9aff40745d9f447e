#include "rdht/dht.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>

namespace rdht {

DhtStats operator-(const DhtStats& a, const DhtStats& b) noexcept {
  return DhtStats{a.reads - b.reads,
                  a.writes - b.writes,
                  a.read_misses - b.read_misses,
                  a.checksum_mismatch_retries - b.checksum_mismatch_retries,
                  a.invalidations - b.invalidations,
                  a.evictions - b.evictions};
}

std::size_t Dht::required_window(const DhtConfig& cfg) {
  const BucketLayout l = bucket_layout(cfg.protocol, cfg.key_size, cfg.value_size);
  return rma::kWindowHeaderBytes + cfg.buckets * l.stride;
}

Dht::Dht(rma::Endpoint& endpoint, const DhtConfig& cfg)
    : endpoint_(endpoint),
      cfg_(cfg),
      layout_(bucket_layout(cfg.protocol, cfg.key_size, cfg.value_size)),
      width_(rdht::index_width(cfg.buckets)) {
  const std::size_t need = required_window(cfg);
  if (need > endpoint_.window_size())
    throw std::invalid_argument("table needs " + std::to_string(need) +
                                " window bytes, window has " +
                                std::to_string(endpoint_.window_size()));
  image_.resize(layout_.stride);
  scratch_.resize(layout_.stride);

  // Clear the local header and bucket storage, then wait for everybody.
  std::vector<std::byte> zeros(std::min<std::size_t>(need, 1u << 16));
  for (std::size_t off = 0; off < need; off += zeros.size()) {
    const std::size_t n = std::min(zeros.size(), need - off);
    endpoint_.put(endpoint_.rank(), off, std::span(zeros.data(), n));
  }
  endpoint_.barrier();
}

void Dht::free() {
  if (freed_) return;
  endpoint_.barrier();
  freed_ = true;
}

void Dht::check_live() const {
  if (freed_) throw std::logic_error("DHT handle used after free");
}

void Dht::check_sizes(std::span<const std::byte> key, std::size_t value_size) const {
  if (key.size() != cfg_.key_size)
    throw std::invalid_argument("key is " + std::to_string(key.size()) + " bytes, table uses " +
                                std::to_string(cfg_.key_size));
  if (value_size != cfg_.value_size)
    throw std::invalid_argument("value is " + std::to_string(value_size) +
                                " bytes, table uses " + std::to_string(cfg_.value_size));
}

Dht::Probe Dht::probe_for(std::span<const std::byte> key) const noexcept {
  Probe p;
  const std::uint64_t h = hash64(key);
  p.rank = target_rank(h, endpoint_.participants());
  p.count = 9 - width_;
  candidate_indices(h, cfg_.buckets, width_, p.indices);
  return p;
}

bool Dht::key_at(std::span<const std::byte> image, std::span<const std::byte> key) const noexcept {
  return std::memcmp(image.data() + layout_.key_offset, key.data(), key.size()) == 0;
}

WriteOutcome Dht::write(std::span<const std::byte> key, std::span<const std::byte> value) {
  check_live();
  check_sizes(key, value.size());
  encode_bucket(layout_, key, value, kMetaOccupied, image_);
  const Probe p = probe_for(key);
  ++stats_.writes;
  WriteOutcome out{};
  switch (cfg_.protocol) {
    case Protocol::coarse: out = write_coarse(p); break;
    case Protocol::fine: out = write_fine(p); break;
    case Protocol::lockfree: out = write_lockfree(p); break;
  }
  if (out == WriteOutcome::evicted) ++stats_.evictions;
  return out;
}

WriteOutcome Dht::write_coarse(const Probe& p) {
  rma::LockGuard lock(endpoint_, p.rank, rma::kWindowLockOffset, rma::LockMode::exclusive);
  const std::span<const std::byte> key(image_.data() + layout_.key_offset, cfg_.key_size);
  for (unsigned i = 0; i < p.count; ++i) {
    const std::uint64_t off = bucket_offset(p.indices[i]);
    endpoint_.get(p.rank, off, scratch_);
    const auto meta = static_cast<std::uint8_t>(scratch_[layout_.meta_offset]);
    WriteOutcome outcome;
    if (!(meta & kMetaOccupied))
      outcome = WriteOutcome::inserted;
    else if (key_at(scratch_, key))
      outcome = WriteOutcome::updated;
    else if (i + 1 == p.count)
      outcome = WriteOutcome::evicted;
    else
      continue;
    endpoint_.put(p.rank, off, image_);
    return outcome;
  }
  return WriteOutcome::evicted;  // unreachable: count >= 1
}

// One bucket lock at a time: lock, inspect, maybe write, unlock, move on.
WriteOutcome Dht::write_fine(const Probe& p) {
  const std::span<const std::byte> key(image_.data() + layout_.key_offset, cfg_.key_size);
  const std::size_t body = layout_.stride - layout_.key_offset;
  for (unsigned i = 0; i < p.count; ++i) {
    const std::uint64_t off = bucket_offset(p.indices[i]);
    const std::uint64_t lock_off = off + layout_.lock_offset;
    rma::LockGuard lock(endpoint_, p.rank, lock_off, rma::LockMode::exclusive);
    endpoint_.get(p.rank, off + layout_.key_offset,
                  std::span(scratch_).subspan(layout_.key_offset, body));
    const auto meta = static_cast<std::uint8_t>(scratch_[layout_.meta_offset]);
    WriteOutcome outcome;
    if (!(meta & kMetaOccupied))
      outcome = WriteOutcome::inserted;
    else if (key_at(scratch_, key))
      outcome = WriteOutcome::updated;
    else if (i + 1 == p.count)
      outcome = WriteOutcome::evicted;
    else
      continue;
    endpoint_.put(p.rank, off + layout_.key_offset,
                  std::span<const std::byte>(image_).subspan(layout_.key_offset, body));
    return outcome;
  }
  return WriteOutcome::evicted;
}

// Buckets that are free, flagged invalid, or fail their checksum are all
// overwritable. The whole image goes out in one put so checksum and payload
// travel together.
WriteOutcome Dht::write_lockfree(const Probe& p) {
  const std::span<const std::byte> key(image_.data() + layout_.key_offset, cfg_.key_size);
  for (unsigned i = 0; i < p.count; ++i) {
    const std::uint64_t off = bucket_offset(p.indices[i]);
    endpoint_.get(p.rank, off, scratch_);
    const auto meta = static_cast<std::uint8_t>(scratch_[layout_.meta_offset]);
    WriteOutcome outcome;
    if (!(meta & kMetaOccupied) || (meta & kMetaInvalid) || !checksum_matches(layout_, scratch_))
      outcome = WriteOutcome::inserted;
    else if (key_at(scratch_, key))
      outcome = WriteOutcome::updated;
    else if (i + 1 == p.count)
      outcome = WriteOutcome::evicted;
    else
      continue;
    endpoint_.put(p.rank, off, image_);
    return outcome;
  }
  return WriteOutcome::evicted;
}

bool Dht::read(std::span<const std::byte> key, std::span<std::byte> value_out) {
  check_live();
  check_sizes(key, value_out.size());
  const Probe p = probe_for(key);
  ++stats_.reads;
  bool hit = false;
  switch (cfg_.protocol) {
    case Protocol::coarse: hit = read_coarse(p, key, value_out); break;
    case Protocol::fine: hit = read_fine(p, key, value_out); break;
    case Protocol::lockfree: hit = read_lockfree(p, key, value_out); break;
  }
  if (!hit) ++stats_.read_misses;
  return hit;
}

std::optional<std::vector<std::byte>> Dht::read(std::span<const std::byte> key) {
  std::vector<std::byte> value(cfg_.value_size);
  if (!read(key, std::span(value))) return std::nullopt;
  return value;
}

bool Dht::read_coarse(const Probe& p, std::span<const std::byte> key, std::span<std::byte> out) {
  rma::LockGuard lock(endpoint_, p.rank, rma::kWindowLockOffset, rma::LockMode::shared);
  for (unsigned i = 0; i < p.count; ++i) {
    endpoint_.get(p.rank, bucket_offset(p.indices[i]), scratch_);
    const auto meta = static_cast<std::uint8_t>(scratch_[layout_.meta_offset]);
    if ((meta & kMetaOccupied) && key_at(scratch_, key)) {
      std::memcpy(out.data(), scratch_.data() + layout_.value_offset, out.size());
      return true;
    }
  }
  return false;
}

bool Dht::read_fine(const Probe& p, std::span<const std::byte> key, std::span<std::byte> out) {
  const std::size_t body = layout_.stride - layout_.key_offset;
  for (unsigned i = 0; i < p.count; ++i) {
    const std::uint64_t off = bucket_offset(p.indices[i]);
    {
      rma::LockGuard lock(endpoint_, p.rank, off + layout_.lock_offset, rma::LockMode::shared);
      endpoint_.get(p.rank, off + layout_.key_offset,
                    std::span(scratch_).subspan(layout_.key_offset, body));
    }
    const auto meta = static_cast<std::uint8_t>(scratch_[layout_.meta_offset]);
    if ((meta & kMetaOccupied) && key_at(scratch_, key)) {
      std::memcpy(out.data(), scratch_.data() + layout_.value_offset, out.size());
      return true;
    }
  }
  return false;
}

// A key-matching bucket whose checksum disagrees is fetched again up to
// kChecksumRetries times; if it never validates, its meta byte is flagged
// invalid and probing moves on.
bool Dht::read_lockfree(const Probe& p, std::span<const std::byte> key,
                        std::span<std::byte> out) {
  for (unsigned i = 0; i < p.count; ++i) {
    const std::uint64_t off = bucket_offset(p.indices[i]);
    for (int attempt = 0;; ++attempt) {
      endpoint_.get(p.rank, off, scratch_);
      const auto meta = static_cast<std::uint8_t>(scratch_[layout_.meta_offset]);
      if (!(meta & kMetaOccupied) || (meta & kMetaInvalid) || !key_at(scratch_, key)) break;
      if (checksum_matches(layout_, scratch_)) {
        std::memcpy(out.data(), scratch_.data() + layout_.value_offset, out.size());
        return true;
      }
      if (attempt == kChecksumRetries) {
        const std::byte flag{static_cast<std::uint8_t>(kMetaOccupied | kMetaInvalid)};
        endpoint_.put(p.rank, off + layout_.meta_offset, std::span(&flag, 1));
        ++stats_.invalidations;
        break;
      }
      ++stats_.checksum_mismatch_retries;
    }
  }
  return false;
}

}  // namespace rdht
