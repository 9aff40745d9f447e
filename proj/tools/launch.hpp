#pragma once

// Shared participant bootstrap for the command line tools.

#include <cstdio>
#include <functional>
#include <memory>
#include <string>

#include "rdht/rma.hpp"
#include "rdht/socket_backend.hpp"

namespace rdht::tools {

struct LaunchOptions {
  std::string backend = "threads";
  std::size_t participants = 1;
  std::size_t window_size = 0;
  std::string listen;
  std::string connect;
};

/// Runs `body` for every participant this process hosts: all of them for the
/// threads backend or loopback sockets, exactly one with --listen/--connect.
inline void launch(const LaunchOptions& opt, const std::function<void(rma::Endpoint&)>& body) {
  const rma::Backend backend = rma::parse_backend(opt.backend);
  const bool distributed = !opt.listen.empty() || !opt.connect.empty();
  if (distributed) {
    if (backend != rma::Backend::sockets)
      throw std::invalid_argument("--listen/--connect require --backend sockets");
    if (!opt.listen.empty() && !opt.connect.empty())
      throw std::invalid_argument("--listen and --connect are mutually exclusive");
    std::unique_ptr<rma::SocketEndpoint> ep =
        !opt.listen.empty()
            ? rma::SocketEndpoint::host(rma::parse_host_port(opt.listen), opt.participants,
                                        opt.window_size)
            : rma::SocketEndpoint::join(rma::parse_host_port(opt.connect));
    body(*ep);
    ep->barrier();
    return;
  }
  auto universe = rma::create_universe({opt.participants, opt.window_size, backend});
  rma::run_participants(*universe, body);
}

}  // namespace rdht::tools
