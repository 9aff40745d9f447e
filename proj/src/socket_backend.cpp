#include "rdht/socket_backend.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <utility>

namespace rdht::rma {
namespace {

constexpr std::uint32_t kMagic = 0x54484452;  // "RDHT"
constexpr auto kTeardownGrace = std::chrono::seconds(5);
constexpr auto kJoinPatience = std::chrono::seconds(10);

[[noreturn]] void fail(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

template <typename T>
void store_le(std::byte* dst, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    dst[i] = static_cast<std::byte>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
}

template <typename T>
T load_le(const std::byte* src) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(src[i])) << (8 * i);
  return static_cast<T>(v);
}

bool read_all(int fd, void* buf, std::size_t n) {
  auto* p = static_cast<char*>(buf);
  while (n > 0) {
    ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

bool write_all(int fd, const void* buf, std::size_t n) {
  const auto* p = static_cast<const char*>(buf);
  while (n > 0) {
    ssize_t r = ::send(fd, p, n, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

sockaddr_in resolve(const HostPort& hp) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string host = hp.host.empty() ? "0.0.0.0" : hp.host;
  if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr)
    throw TransportError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(hp.port);
  return addr;
}

std::pair<int, std::uint16_t> listen_on(sockaddr_in addr) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail("socket");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    fail("bind");
  }
  if (::listen(fd, 128) != 0) {
    ::close(fd);
    fail("listen");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return {fd, ntohs(addr.sin_port)};
}

int connect_to(sockaddr_in addr) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) fail("socket");
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    fail("connect");
  }
  set_nodelay(fd);
  return fd;
}

Status status_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::out_of_range&) {
    return Status::out_of_range;
  } catch (const std::invalid_argument&) {
    return Status::misaligned;
  } catch (...) {
    return Status::bad_request;
  }
}

}  // namespace

HostPort parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("expected host:port, got '" + text + "'");
  HostPort hp;
  hp.host = text.substr(0, colon);
  const std::string digits = text.substr(colon + 1);
  unsigned long port = 0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || end != digits.data() + digits.size() || digits.empty())
    throw std::invalid_argument("bad port in '" + text + "'");
  if (port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
  hp.port = static_cast<std::uint16_t>(port);
  return hp;
}

Rendezvous::Rendezvous(const HostPort& bind_addr) {
  std::tie(fd_, port_) = listen_on(resolve(bind_addr));
}

Rendezvous::~Rendezvous() {
  if (fd_ >= 0) ::close(fd_);
}

Rendezvous::Rendezvous(Rendezvous&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}

int Rendezvous::release() noexcept { return std::exchange(fd_, -1); }

SocketEndpoint::SocketEndpoint(Rank rank, std::size_t participants, std::size_t window_size)
    : rank_(rank), participants_(participants), window_(std::make_unique<Window>(window_size)) {
  clients_.resize(participants);
  if (rank_ == 0) root_barrier_.emplace(static_cast<std::ptrdiff_t>(participants));
}

void SocketEndpoint::start_server() {
  sockaddr_in any{};
  any.sin_family = AF_INET;
  any.sin_addr.s_addr = htonl(INADDR_ANY);
  std::tie(listen_fd_, data_port_) = listen_on(any);
  acceptor_ = std::thread([this] { accept_loop(); });
}

std::unique_ptr<SocketEndpoint> SocketEndpoint::host(const HostPort& bind_addr,
                                                     std::size_t participants,
                                                     std::size_t window_size) {
  return host(Rendezvous(bind_addr), participants, window_size);
}

std::unique_ptr<SocketEndpoint> SocketEndpoint::host(Rendezvous rendezvous,
                                                     std::size_t participants,
                                                     std::size_t window_size) {
  if (participants == 0) throw std::invalid_argument("participants must be >= 1");
  std::unique_ptr<SocketEndpoint> ep(new SocketEndpoint(0, participants, window_size));
  ep->start_server();

  const int boot = rendezvous.release();
  std::vector<int> joiners;
  std::vector<Peer> peers(participants);
  peers[0].port = ep->data_port_;
  try {
    while (joiners.size() + 1 < participants) {
      sockaddr_in from{};
      socklen_t len = sizeof(from);
      int fd = ::accept(boot, reinterpret_cast<sockaddr*>(&from), &len);
      if (fd < 0) {
        if (errno == EINTR) continue;
        fail("accept");
      }
      std::byte hello[6];
      if (!read_all(fd, hello, sizeof(hello)) || load_le<std::uint32_t>(hello) != kMagic) {
        ::close(fd);
        continue;
      }
      joiners.push_back(fd);
      peers[joiners.size()] = Peer{from.sin_addr.s_addr, load_le<std::uint16_t>(hello + 4)};
    }
    std::vector<std::byte> reply(4 + 4 + 4 + 8 + participants * 6);
    for (std::size_t i = 0; i < joiners.size(); ++i) {
      std::byte* p = reply.data();
      store_le<std::uint32_t>(p, kMagic);
      store_le<std::uint32_t>(p + 4, static_cast<std::uint32_t>(i + 1));
      store_le<std::uint32_t>(p + 8, static_cast<std::uint32_t>(participants));
      store_le<std::uint64_t>(p + 12, window_size);
      p += 20;
      for (const Peer& peer : peers) {
        std::memcpy(p, &peer.ipv4, 4);
        store_le<std::uint16_t>(p + 4, peer.port);
        p += 6;
      }
      if (!write_all(joiners[i], reply.data(), reply.size())) fail("rendezvous reply");
    }
  } catch (...) {
    for (int fd : joiners) ::close(fd);
    ::close(boot);
    throw;
  }
  for (int fd : joiners) ::close(fd);
  ::close(boot);
  ep->connect_mesh(peers);
  return ep;
}

std::unique_ptr<SocketEndpoint> SocketEndpoint::join(const HostPort& root) {
  const sockaddr_in root_addr = resolve(root);
  // Set up our own server before announcing its port.
  sockaddr_in any{};
  any.sin_family = AF_INET;
  any.sin_addr.s_addr = htonl(INADDR_ANY);
  auto [listen_fd, data_port] = listen_on(any);

  int fd = -1;
  try {
    // The root may still be starting up; keep knocking for a while.
    const auto deadline = std::chrono::steady_clock::now() + kJoinPatience;
    for (;;) {
      try {
        fd = connect_to(root_addr);
        break;
      } catch (const TransportError&) {
        if (std::chrono::steady_clock::now() >= deadline) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    }
    std::byte hello[6];
    store_le<std::uint32_t>(hello, kMagic);
    store_le<std::uint16_t>(hello + 4, data_port);
    if (!write_all(fd, hello, sizeof(hello))) fail("rendezvous hello");
    std::byte head[20];
    if (!read_all(fd, head, sizeof(head)) || load_le<std::uint32_t>(head) != kMagic)
      throw TransportError("rendezvous: bad reply from root");
    const auto rank = load_le<std::uint32_t>(head + 4);
    const auto participants = load_le<std::uint32_t>(head + 8);
    const auto window_size = load_le<std::uint64_t>(head + 12);
    std::vector<std::byte> table(participants * 6);
    if (!read_all(fd, table.data(), table.size()))
      throw TransportError("rendezvous: truncated peer table");
    ::close(fd);
    fd = -1;

    std::vector<Peer> peers(participants);
    for (std::size_t i = 0; i < participants; ++i) {
      std::memcpy(&peers[i].ipv4, table.data() + 6 * i, 4);
      peers[i].port = load_le<std::uint16_t>(table.data() + 6 * i + 4);
    }
    // Root reports itself without an address; reach it where we reached the
    // rendezvous.
    peers[0].ipv4 = root_addr.sin_addr.s_addr;

    std::unique_ptr<SocketEndpoint> ep(new SocketEndpoint(rank, participants, window_size));
    ep->listen_fd_ = listen_fd;
    ep->data_port_ = data_port;
    listen_fd = -1;
    ep->acceptor_ = std::thread([raw = ep.get()] { raw->accept_loop(); });
    ep->connect_mesh(peers);
    return ep;
  } catch (...) {
    if (fd >= 0) ::close(fd);
    if (listen_fd >= 0) ::close(listen_fd);
    throw;
  }
}

void SocketEndpoint::connect_mesh(const std::vector<Peer>& peers) {
  for (Rank r = 0; r < participants_; ++r) {
    if (r == rank_) continue;
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = peers[r].ipv4;
    addr.sin_port = htons(peers[r].port);
    auto conn = std::make_unique<Connection>();
    conn->fd = connect_to(addr);
    clients_[r] = std::move(conn);
  }
}

void SocketEndpoint::accept_loop() {
  while (!closing_.load()) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    set_nodelay(fd);
    std::lock_guard lock(serve_mu_);
    if (closing_.load()) {
      ::close(fd);
      return;
    }
    ++active_serves_;
    serve_fds_.push_back(fd);
    serve_threads_.emplace_back([this, fd] { serve(fd); });
  }
}

void SocketEndpoint::serve(int fd) {
  std::vector<std::byte> buf;
  std::byte header[kRequestHeaderBytes];
  while (read_all(fd, header, sizeof(header))) {
    const auto op = static_cast<Opcode>(header[0]);
    const auto offset = load_le<std::uint64_t>(header + 1);
    const auto len = load_le<std::uint32_t>(header + 9);

    if ((op == Opcode::get || op == Opcode::put) && len > window_->size()) {
      // Cannot be in range; refuse without buffering. A put's payload would
      // desynchronise the stream, so that connection is dropped as well.
      const auto refused = static_cast<std::byte>(Status::out_of_range);
      if (!write_all(fd, &refused, 1) || op == Opcode::put) break;
      continue;
    }
    std::size_t payload = 0;
    switch (op) {
      case Opcode::put: payload = len; break;
      case Opcode::cas: payload = 16; break;
      case Opcode::faa: payload = 8; break;
      default: break;
    }
    buf.resize(1 + std::max<std::size_t>(payload, op == Opcode::get ? len : 8));
    if (payload > 0 && !read_all(fd, buf.data() + 1, payload)) break;

    Status status = Status::ok;
    std::size_t reply = 0;
    try {
      switch (op) {
        case Opcode::get:
          window_->get(offset, std::span(buf.data() + 1, len));
          reply = len;
          break;
        case Opcode::put:
          window_->put(offset, std::span(buf.data() + 1, len));
          break;
        case Opcode::cas: {
          const auto prior = window_->cas64(offset, load_le<std::uint64_t>(buf.data() + 1),
                                            load_le<std::uint64_t>(buf.data() + 9));
          store_le(buf.data() + 1, prior);
          reply = 8;
          break;
        }
        case Opcode::faa: {
          const auto prior = window_->faa64(offset, load_le<std::int64_t>(buf.data() + 1));
          store_le(buf.data() + 1, prior);
          reply = 8;
          break;
        }
        case Opcode::barrier:
          if (!root_barrier_) {
            status = Status::bad_request;
            break;
          }
          root_barrier_->arrive_and_wait();
          break;
        default:
          status = Status::bad_request;
      }
    } catch (...) {
      status = status_of(std::current_exception());
      reply = 0;
    }
    buf[0] = static_cast<std::byte>(status);
    if (!write_all(fd, buf.data(), 1 + reply)) break;
  }
  // Each peer holds exactly one connection to us; once it hangs up it takes
  // no further part in barriers.
  if (root_barrier_ && !closing_.load()) root_barrier_->arrive_and_drop();
  std::lock_guard lock(serve_mu_);
  --active_serves_;
  serve_cv_.notify_all();
}

void SocketEndpoint::call(Rank target, Opcode op, std::uint64_t offset, std::uint32_t len,
                          std::span<const std::byte> payload, std::span<std::byte> response) {
  if (target >= participants_) throw std::out_of_range("rank " + std::to_string(target) + " out of range");
  Connection* conn = clients_[target].get();
  if (conn == nullptr || conn->fd < 0) throw TransportError("no connection to rank " + std::to_string(target));

  std::vector<std::byte> msg(kRequestHeaderBytes + payload.size());
  msg[0] = static_cast<std::byte>(op);
  store_le(msg.data() + 1, offset);
  store_le(msg.data() + 9, len);
  if (!payload.empty()) std::memcpy(msg.data() + kRequestHeaderBytes, payload.data(), payload.size());

  std::lock_guard lock(conn->mu);
  if (!write_all(conn->fd, msg.data(), msg.size()))
    fail("send to rank " + std::to_string(target));
  std::byte status;
  if (!read_all(conn->fd, &status, 1)) throw TransportError("rank " + std::to_string(target) + " hung up");
  switch (static_cast<Status>(status)) {
    case Status::ok: break;
    case Status::out_of_range: throw std::out_of_range("remote window access out of range");
    case Status::misaligned: throw std::invalid_argument("remote atomic offset misaligned");
    default: throw TransportError("rank " + std::to_string(target) + " rejected request");
  }
  if (!response.empty() && !read_all(conn->fd, response.data(), response.size()))
    throw TransportError("rank " + std::to_string(target) + " hung up mid-response");
}

void SocketEndpoint::get(Rank target, std::uint64_t offset, std::span<std::byte> out) {
  if (target == rank_) return window_->get(offset, out);
  window_->check_range(offset, out.size());
  call(target, Opcode::get, offset, static_cast<std::uint32_t>(out.size()), {}, out);
}

void SocketEndpoint::put(Rank target, std::uint64_t offset, std::span<const std::byte> data) {
  if (target == rank_) return window_->put(offset, data);
  window_->check_range(offset, data.size());
  call(target, Opcode::put, offset, static_cast<std::uint32_t>(data.size()), data, {});
}

std::uint64_t SocketEndpoint::cas64(Rank target, std::uint64_t offset, std::uint64_t expected,
                                    std::uint64_t desired) {
  if (target == rank_) return window_->cas64(offset, expected, desired);
  window_->check_word(offset);
  std::byte payload[16], prior[8];
  store_le(payload, expected);
  store_le(payload + 8, desired);
  call(target, Opcode::cas, offset, 8, payload, prior);
  return load_le<std::uint64_t>(prior);
}

std::uint64_t SocketEndpoint::faa64(Rank target, std::uint64_t offset, std::int64_t delta) {
  if (target == rank_) return window_->faa64(offset, delta);
  window_->check_word(offset);
  std::byte payload[8], prior[8];
  store_le(payload, delta);
  call(target, Opcode::faa, offset, 8, payload, prior);
  return load_le<std::uint64_t>(prior);
}

void SocketEndpoint::barrier() {
  if (rank_ == 0) {
    root_barrier_->arrive_and_wait();
    return;
  }
  call(0, Opcode::barrier, 0, 0, {}, {});
}

void SocketEndpoint::leave() noexcept {
  if (left_.exchange(true)) return;
  if (rank_ == 0) {
    root_barrier_->arrive_and_drop();
    return;
  }
  // Hanging up on the root releases our barrier slot there.
  if (clients_[0] && clients_[0]->fd >= 0) ::shutdown(clients_[0]->fd, SHUT_RDWR);
}

SocketEndpoint::~SocketEndpoint() {
  closing_.store(true);
  for (auto& c : clients_) {
    if (c && c->fd >= 0) {
      ::shutdown(c->fd, SHUT_RDWR);
      ::close(c->fd);
      c->fd = -1;
    }
  }
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);

  std::unique_lock lock(serve_mu_);
  // Peers may still be finishing their last requests; give them a moment to
  // hang up before cutting them off.
  serve_cv_.wait_for(lock, kTeardownGrace, [this] { return active_serves_ == 0; });
  for (int fd : serve_fds_) ::shutdown(fd, SHUT_RDWR);
  auto threads = std::move(serve_threads_);
  lock.unlock();
  for (auto& t : threads) t.join();
  for (int fd : serve_fds_) ::close(fd);
}

LoopbackSocketUniverse::LoopbackSocketUniverse(std::size_t participants, std::size_t window_size)
    : window_size_(window_size) {
  if (participants == 0) throw std::invalid_argument("participants must be >= 1");
  Rendezvous rendezvous(HostPort{"127.0.0.1", 0});
  const HostPort root{"127.0.0.1", rendezvous.port()};

  std::vector<std::unique_ptr<SocketEndpoint>> made(participants);
  std::vector<std::exception_ptr> errors(participants);
  std::vector<std::thread> threads;
  threads.emplace_back([&] {
    try {
      made[0] = SocketEndpoint::host(std::move(rendezvous), participants, window_size);
    } catch (...) {
      errors[0] = std::current_exception();
    }
  });
  for (std::size_t i = 1; i < participants; ++i) {
    threads.emplace_back([&, i] {
      try {
        made[i] = SocketEndpoint::join(root);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  endpoints_.resize(participants);
  for (auto& ep : made) {
    const Rank r = ep->rank();
    endpoints_[r] = std::move(ep);
  }
}

LoopbackSocketUniverse::~LoopbackSocketUniverse() {
  std::vector<std::thread> threads;
  for (auto& ep : endpoints_) threads.emplace_back([e = std::move(ep)]() mutable { e.reset(); });
  for (auto& t : threads) t.join();
}

Endpoint& LoopbackSocketUniverse::endpoint(Rank rank) {
  if (rank >= endpoints_.size()) throw std::out_of_range("rank out of range");
  return *endpoints_[rank];
}

}  // namespace rdht::rma
