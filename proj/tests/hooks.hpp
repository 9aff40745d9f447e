#pragma once

#include <functional>
#include <span>
#include <thread>

#include "rdht/rma.hpp"

namespace rdht::testing {

using rma::Backend;
using rma::Endpoint;

// Forwards to another endpoint; lets a test intercept gets and puts.
class HookEndpoint : public Endpoint {
 public:
  explicit HookEndpoint(Endpoint& inner) : inner_(inner) {}
  Rank rank() const noexcept override { return inner_.rank(); }
  std::size_t participants() const noexcept override { return inner_.participants(); }
  std::size_t window_size() const noexcept override { return inner_.window_size(); }
  Backend backend() const noexcept override { return inner_.backend(); }
  void get(Rank t, std::uint64_t off, std::span<std::byte> out) override {
    inner_.get(t, off, out);
    if (on_get) on_get(t, off, out);
  }
  void put(Rank t, std::uint64_t off, std::span<const std::byte> data) override {
    if (split_puts && data.size() > 1) {
      const std::size_t half = data.size() / 2;
      inner_.put(t, off, data.first(half));
      std::this_thread::yield();
      inner_.put(t, off + half, data.subspan(half));
    } else {
      inner_.put(t, off, data);
    }
  }
  std::uint64_t cas64(Rank t, std::uint64_t off, std::uint64_t e, std::uint64_t d) override {
    return inner_.cas64(t, off, e, d);
  }
  std::uint64_t faa64(Rank t, std::uint64_t off, std::int64_t d) override {
    return inner_.faa64(t, off, d);
  }
  void barrier() override { inner_.barrier(); }
  void leave() noexcept override { inner_.leave(); }

  std::function<void(Rank, std::uint64_t, std::span<std::byte>)> on_get;
  bool split_puts = false;

 private:
  Endpoint& inner_;
};

}  // namespace rdht::testing
