#pragma once

// One-sided remote memory contract. Every participant owns one window; any
// participant can get/put bytes and run 64-bit atomics against any window.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>

#include "rdht/addressing.hpp"

namespace rdht::rma {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Backend { threads, sockets };
enum class LockMode { shared, exclusive };

/// Lock word value held by an active writer; lower values count readers.
inline constexpr std::uint64_t kExclusiveLock = 0x10000000;

/// Every window starts with one reserved word holding the window lock.
inline constexpr std::uint64_t kWindowLockOffset = 0;
inline constexpr std::size_t kWindowHeaderBytes = 8;

class Endpoint {
 public:
  virtual ~Endpoint() = default;

  virtual Rank rank() const noexcept = 0;
  virtual std::size_t participants() const noexcept = 0;
  virtual std::size_t window_size() const noexcept = 0;
  virtual Backend backend() const noexcept = 0;

  /// Not atomic across the range: a concurrent put may be observed torn.
  virtual void get(Rank target, std::uint64_t offset, std::span<std::byte> out) = 0;
  /// Returns once the bytes are visible to every participant.
  virtual void put(Rank target, std::uint64_t offset, std::span<const std::byte> data) = 0;
  /// Returns the prior word; `offset` must be 8-byte aligned.
  virtual std::uint64_t cas64(Rank target, std::uint64_t offset, std::uint64_t expected,
                              std::uint64_t desired) = 0;
  virtual std::uint64_t faa64(Rank target, std::uint64_t offset, std::int64_t delta) = 0;
  /// Collective: no participant leaves before all have entered.
  virtual void barrier() = 0;

  /// Withdraws this participant from future barriers after a local failure so
  /// the others are not left waiting.
  virtual void leave() noexcept {}
};

/// Participant-local window memory. Both backends serve contract operations
/// from this type, so atomics stay word-linearizable whoever issues them.
class Window {
 public:
  explicit Window(std::size_t size);

  std::size_t size() const noexcept { return size_; }

  void get(std::uint64_t offset, std::span<std::byte> out) const;
  void put(std::uint64_t offset, std::span<const std::byte> data);
  std::uint64_t cas64(std::uint64_t offset, std::uint64_t expected, std::uint64_t desired);
  std::uint64_t faa64(std::uint64_t offset, std::int64_t delta);

  void check_range(std::uint64_t offset, std::size_t len) const;
  void check_word(std::uint64_t offset) const;

 private:
  std::unique_ptr<std::uint64_t[]> words_;
  std::size_t size_;
};

/// Exponential backoff for lock retry loops: 1 us doubling up to 256 us.
class Backoff {
 public:
  void pause();
  void reset() noexcept { delay_ = kInitial; }

  static constexpr std::chrono::microseconds kInitial{1};
  static constexpr std::chrono::microseconds kCap{256};

 private:
  std::chrono::microseconds delay_ = kInitial;
};

// Readers&Writers on a lock word at `offset` of `target`'s window.
// Writer: cas(0 -> kExclusiveLock) until it succeeds; release subtracts it.
// Reader: faa(+1), success iff the prior value < kExclusiveLock, otherwise
// revoke with faa(-1) and retry; release is faa(-1).
void lock_exclusive(Endpoint& ep, Rank target, std::uint64_t offset);
void unlock_exclusive(Endpoint& ep, Rank target, std::uint64_t offset);
void lock_shared(Endpoint& ep, Rank target, std::uint64_t offset);
void unlock_shared(Endpoint& ep, Rank target, std::uint64_t offset);

/// Whole-window lock over the reserved header word.
void window_lock(Endpoint& ep, Rank target, LockMode mode);
void window_unlock(Endpoint& ep, Rank target, LockMode mode);

/// Holds a window or word lock for the lifetime of the guard.
class LockGuard {
 public:
  LockGuard(Endpoint& ep, Rank target, std::uint64_t offset, LockMode mode);
  ~LockGuard();
  LockGuard(const LockGuard&) = delete;
  LockGuard& operator=(const LockGuard&) = delete;

 private:
  Endpoint& ep_;
  Rank target_;
  std::uint64_t offset_;
  LockMode mode_;
};

struct UniverseConfig {
  std::size_t participants = 1;
  std::size_t window_size = 64u << 20;
  Backend backend = Backend::threads;
};

/// All participants of one job living in this process. The sockets flavour runs
/// every participant's server on loopback; see socket_backend.hpp for the
/// one-participant-per-process variant.
class Universe {
 public:
  virtual ~Universe() = default;
  virtual std::size_t participants() const noexcept = 0;
  virtual std::size_t window_size() const noexcept = 0;
  virtual Backend backend() const noexcept = 0;
  virtual Endpoint& endpoint(Rank rank) = 0;
};

std::unique_ptr<Universe> create_universe(const UniverseConfig& cfg);

/// Runs `body` once per participant, each on its own thread, and rethrows the
/// first failure after all threads have finished.
void run_participants(Universe& universe, const std::function<void(Endpoint&)>& body);

Backend parse_backend(const std::string& name);
const char* to_string(Backend b) noexcept;

}  // namespace rdht::rma
