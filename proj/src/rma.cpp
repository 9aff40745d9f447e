#include "rdht/rma.hpp"

#include <sys/prctl.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "rdht/socket_backend.hpp"
#include "rdht/thread_backend.hpp"

namespace rdht::rma {

Window::Window(std::size_t size)
    : words_(std::make_unique<std::uint64_t[]>((size + 7) / 8)), size_(size) {
  if (size == 0) throw std::invalid_argument("window size must be > 0");
}

void Window::check_range(std::uint64_t offset, std::size_t len) const {
  if (offset > size_ || len > size_ - offset)
    throw std::out_of_range("window access [" + std::to_string(offset) + ", +" +
                            std::to_string(len) + ") exceeds window of " +
                            std::to_string(size_) + " bytes");
}

void Window::check_word(std::uint64_t offset) const {
  if (offset % 8 != 0)
    throw std::invalid_argument("atomic offset " + std::to_string(offset) +
                                " is not 8-byte aligned");
  check_range(offset, 8);
}

// Bytes are copied with relaxed per-byte atomics: a concurrent put yields a
// per-byte mix of old and new contents, never undefined behaviour.
void Window::get(std::uint64_t offset, std::span<std::byte> out) const {
  check_range(offset, out.size());
  auto* base = reinterpret_cast<unsigned char*>(words_.get()) + offset;
  std::atomic_thread_fence(std::memory_order_acquire);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::byte{std::atomic_ref<unsigned char>(base[i]).load(std::memory_order_relaxed)};
  std::atomic_thread_fence(std::memory_order_acquire);
}

void Window::put(std::uint64_t offset, std::span<const std::byte> data) {
  check_range(offset, data.size());
  auto* base = reinterpret_cast<unsigned char*>(words_.get()) + offset;
  std::atomic_thread_fence(std::memory_order_release);
  for (std::size_t i = 0; i < data.size(); ++i)
    std::atomic_ref<unsigned char>(base[i]).store(static_cast<unsigned char>(data[i]),
                                                  std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_seq_cst);
}

std::uint64_t Window::cas64(std::uint64_t offset, std::uint64_t expected, std::uint64_t desired) {
  check_word(offset);
  std::atomic_ref<std::uint64_t> word(words_[offset / 8]);
  word.compare_exchange_strong(expected, desired, std::memory_order_acq_rel,
                               std::memory_order_acquire);
  return expected;
}

std::uint64_t Window::faa64(std::uint64_t offset, std::int64_t delta) {
  check_word(offset);
  std::atomic_ref<std::uint64_t> word(words_[offset / 8]);
  return word.fetch_add(static_cast<std::uint64_t>(delta), std::memory_order_acq_rel);
}

void Backoff::pause() {
  // Default timer slack (50 us) would swamp the 1 us starting delay.
  thread_local const bool tight_slack = [] { return ::prctl(PR_SET_TIMERSLACK, 1UL) == 0; }();
  (void)tight_slack;
  std::this_thread::sleep_for(delay_);
  delay_ = std::min(delay_ * 2, kCap);
}

void lock_exclusive(Endpoint& ep, Rank target, std::uint64_t offset) {
  Backoff backoff;
  while (ep.cas64(target, offset, 0, kExclusiveLock) != 0) backoff.pause();
}

void unlock_exclusive(Endpoint& ep, Rank target, std::uint64_t offset) {
  ep.faa64(target, offset, -static_cast<std::int64_t>(kExclusiveLock));
}

void lock_shared(Endpoint& ep, Rank target, std::uint64_t offset) {
  Backoff backoff;
  while (ep.faa64(target, offset, 1) >= kExclusiveLock) {
    ep.faa64(target, offset, -1);
    backoff.pause();
  }
}

void unlock_shared(Endpoint& ep, Rank target, std::uint64_t offset) {
  ep.faa64(target, offset, -1);
}

void window_lock(Endpoint& ep, Rank target, LockMode mode) {
  if (mode == LockMode::exclusive)
    lock_exclusive(ep, target, kWindowLockOffset);
  else
    lock_shared(ep, target, kWindowLockOffset);
}

void window_unlock(Endpoint& ep, Rank target, LockMode mode) {
  if (mode == LockMode::exclusive)
    unlock_exclusive(ep, target, kWindowLockOffset);
  else
    unlock_shared(ep, target, kWindowLockOffset);
}

LockGuard::LockGuard(Endpoint& ep, Rank target, std::uint64_t offset, LockMode mode)
    : ep_(ep), target_(target), offset_(offset), mode_(mode) {
  if (mode_ == LockMode::exclusive)
    lock_exclusive(ep_, target_, offset_);
  else
    lock_shared(ep_, target_, offset_);
}

LockGuard::~LockGuard() {
  try {
    if (mode_ == LockMode::exclusive)
      unlock_exclusive(ep_, target_, offset_);
    else
      unlock_shared(ep_, target_, offset_);
  } catch (...) {
    // Transport already failed; the caller sees the original error.
  }
}

std::unique_ptr<Universe> create_universe(const UniverseConfig& cfg) {
  if (cfg.participants == 0) throw std::invalid_argument("participants must be >= 1");
  if (cfg.window_size == 0) throw std::invalid_argument("window size must be > 0");
  switch (cfg.backend) {
    case Backend::threads:
      return std::make_unique<ThreadUniverse>(cfg.participants, cfg.window_size);
    case Backend::sockets:
      return std::make_unique<LoopbackSocketUniverse>(cfg.participants, cfg.window_size);
  }
  throw std::invalid_argument("unknown backend");
}

void run_participants(Universe& universe, const std::function<void(Endpoint&)>& body) {
  std::mutex mu;
  std::exception_ptr first;
  std::vector<std::thread> threads;
  threads.reserve(universe.participants());
  for (Rank r = 0; r < universe.participants(); ++r) {
    threads.emplace_back([&, r] {
      Endpoint& ep = universe.endpoint(r);
      try {
        body(ep);
      } catch (...) {
        {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
        ep.leave();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

Backend parse_backend(const std::string& name) {
  if (name == "threads") return Backend::threads;
  if (name == "sockets") return Backend::sockets;
  throw std::invalid_argument("unknown backend '" + name + "' (expected threads|sockets)");
}

const char* to_string(Backend b) noexcept {
  return b == Backend::threads ? "threads" : "sockets";
}

}  // namespace rdht::rma
