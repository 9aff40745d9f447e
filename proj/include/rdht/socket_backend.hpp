#pragma once

// TCP backend. Each participant serves its own window; every initiator keeps
// one connection per target and issues requests on it in order.
//
// Wire format, all integers little-endian:
//   request  = u8 opcode | u64 offset | u32 len | payload
//   response = u8 status | payload
// opcode: 1 GET (len bytes back), 2 PUT (len payload bytes), 3 CAS (payload
// expected u64, desired u64; prior u64 back), 4 FAA (payload delta i64; prior
// u64 back), 5 BARRIER (sent to rank 0, answered once all have arrived).
// CAS and FAA carry len = 8.

#include <atomic>
#include <barrier>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rdht/rma.hpp"

namespace rdht::rma {

enum class Opcode : std::uint8_t { get = 1, put = 2, cas = 3, faa = 4, barrier = 5 };
enum class Status : std::uint8_t { ok = 0, out_of_range = 1, misaligned = 2, bad_request = 3 };

inline constexpr std::size_t kRequestHeaderBytes = 13;

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port".
HostPort parse_host_port(const std::string& text);

/// Bootstrap listener owned by rank 0; joiners connect here to learn their
/// rank and the peer table.
class Rendezvous {
 public:
  explicit Rendezvous(const HostPort& bind_addr);
  ~Rendezvous();
  Rendezvous(Rendezvous&& other) noexcept;
  Rendezvous& operator=(Rendezvous&&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  int release() noexcept;

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

class SocketEndpoint final : public Endpoint {
 public:
  /// Rank 0: waits for participants - 1 joiners, then wires the full mesh.
  static std::unique_ptr<SocketEndpoint> host(Rendezvous rendezvous, std::size_t participants,
                                              std::size_t window_size);
  static std::unique_ptr<SocketEndpoint> host(const HostPort& bind_addr,
                                              std::size_t participants,
                                              std::size_t window_size);
  /// Ranks 1..P-1; rank assignment follows rendezvous arrival order.
  static std::unique_ptr<SocketEndpoint> join(const HostPort& root);

  ~SocketEndpoint() override;
  SocketEndpoint(const SocketEndpoint&) = delete;
  SocketEndpoint& operator=(const SocketEndpoint&) = delete;

  Rank rank() const noexcept override { return rank_; }
  std::size_t participants() const noexcept override { return participants_; }
  std::size_t window_size() const noexcept override { return window_->size(); }
  Backend backend() const noexcept override { return Backend::sockets; }

  void get(Rank target, std::uint64_t offset, std::span<std::byte> out) override;
  void put(Rank target, std::uint64_t offset, std::span<const std::byte> data) override;
  std::uint64_t cas64(Rank target, std::uint64_t offset, std::uint64_t expected,
                      std::uint64_t desired) override;
  std::uint64_t faa64(Rank target, std::uint64_t offset, std::int64_t delta) override;
  void barrier() override;
  void leave() noexcept override;

  Window& local_window() noexcept { return *window_; }
  /// Port serving this participant's window.
  std::uint16_t data_port() const noexcept { return data_port_; }

 private:
  struct Peer {
    std::uint32_t ipv4 = 0;  // network byte order
    std::uint16_t port = 0;
  };
  struct Connection {
    int fd = -1;
    std::mutex mu;
  };

  SocketEndpoint(Rank rank, std::size_t participants, std::size_t window_size);

  void start_server();
  void connect_mesh(const std::vector<Peer>& peers);
  void accept_loop();
  void serve(int fd);
  void call(Rank target, Opcode op, std::uint64_t offset, std::uint32_t len,
            std::span<const std::byte> payload, std::span<std::byte> response);

  Rank rank_;
  std::size_t participants_;
  std::unique_ptr<Window> window_;

  int listen_fd_ = -1;
  std::uint16_t data_port_ = 0;
  std::thread acceptor_;
  std::atomic<bool> closing_{false};

  std::mutex serve_mu_;
  std::condition_variable serve_cv_;
  std::vector<std::thread> serve_threads_;
  std::vector<int> serve_fds_;
  std::size_t active_serves_ = 0;

  std::vector<std::unique_ptr<Connection>> clients_;
  std::optional<std::barrier<>> root_barrier_;
  std::atomic<bool> left_{false};
};

/// Every participant in this process, talking TCP over 127.0.0.1.
class LoopbackSocketUniverse final : public Universe {
 public:
  LoopbackSocketUniverse(std::size_t participants, std::size_t window_size);
  ~LoopbackSocketUniverse() override;

  std::size_t participants() const noexcept override { return endpoints_.size(); }
  std::size_t window_size() const noexcept override { return window_size_; }
  Backend backend() const noexcept override { return Backend::sockets; }
  Endpoint& endpoint(Rank rank) override;

 private:
  std::size_t window_size_;
  std::vector<std::unique_ptr<SocketEndpoint>> endpoints_;
};

}  // namespace rdht::rma
