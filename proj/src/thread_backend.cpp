#include "rdht/thread_backend.hpp"

namespace rdht::rma {

class ThreadUniverse::ThreadEndpoint final : public Endpoint {
 public:
  ThreadEndpoint(ThreadUniverse& u, Rank rank) : u_(u), rank_(rank) {}

  Rank rank() const noexcept override { return rank_; }
  std::size_t participants() const noexcept override { return u_.participants(); }
  std::size_t window_size() const noexcept override { return u_.window_size_; }
  Backend backend() const noexcept override { return Backend::threads; }

  void get(Rank target, std::uint64_t offset, std::span<std::byte> out) override {
    u_.window(target).get(offset, out);
  }
  void put(Rank target, std::uint64_t offset, std::span<const std::byte> data) override {
    u_.window(target).put(offset, data);
  }
  std::uint64_t cas64(Rank target, std::uint64_t offset, std::uint64_t expected,
                      std::uint64_t desired) override {
    return u_.window(target).cas64(offset, expected, desired);
  }
  std::uint64_t faa64(Rank target, std::uint64_t offset, std::int64_t delta) override {
    return u_.window(target).faa64(offset, delta);
  }
  void barrier() override { u_.barrier_.arrive_and_wait(); }
  void leave() noexcept override { u_.barrier_.arrive_and_drop(); }

 private:
  ThreadUniverse& u_;
  Rank rank_;
};

ThreadUniverse::ThreadUniverse(std::size_t participants, std::size_t window_size)
    : window_size_(window_size), barrier_(static_cast<std::ptrdiff_t>(participants)) {
  if (participants == 0) throw std::invalid_argument("participants must be >= 1");
  windows_.reserve(participants);
  endpoints_.reserve(participants);
  for (std::size_t r = 0; r < participants; ++r) {
    windows_.push_back(std::make_unique<Window>(window_size));
    endpoints_.push_back(std::make_unique<ThreadEndpoint>(*this, static_cast<Rank>(r)));
  }
}

ThreadUniverse::~ThreadUniverse() = default;

Endpoint& ThreadUniverse::endpoint(Rank rank) {
  if (rank >= endpoints_.size()) throw std::out_of_range("rank out of range");
  return *endpoints_[rank];
}

Window& ThreadUniverse::window(Rank rank) {
  if (rank >= windows_.size())
    throw std::out_of_range("rank " + std::to_string(rank) + " out of range");
  return *windows_[rank];
}

}  // namespace rdht::rma
