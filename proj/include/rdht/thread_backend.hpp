#pragma once

#include <barrier>
#include <memory>
#include <vector>

#include "rdht/rma.hpp"

namespace rdht::rma {

/// In-process backend: one window per participant in shared memory, contract
/// operations are direct loads/stores and hardware atomics.
class ThreadUniverse final : public Universe {
 public:
  ThreadUniverse(std::size_t participants, std::size_t window_size);
  ~ThreadUniverse() override;

  std::size_t participants() const noexcept override { return windows_.size(); }
  std::size_t window_size() const noexcept override { return window_size_; }
  Backend backend() const noexcept override { return Backend::threads; }
  Endpoint& endpoint(Rank rank) override;

  Window& window(Rank rank);

 private:
  class ThreadEndpoint;

  std::size_t window_size_;
  std::vector<std::unique_ptr<Window>> windows_;
  std::barrier<> barrier_;
  std::vector<std::unique_ptr<ThreadEndpoint>> endpoints_;
};

}  // namespace rdht::rma
