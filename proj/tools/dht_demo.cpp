// dht-demo: surrogate caching of an expensive per-cell kernel in a 1-D
// advection loop.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <mutex>

#include "launch.hpp"
#include "rdht/surrogate.hpp"

using namespace rdht;

int main(int argc, char** argv) {
  CLI::App app{"Surrogate cache demo"};

  std::string protocol = "lockfree";
  std::string csv;
  long cost_us = 100;
  bool no_cache = false;
  tools::LaunchOptions launch;
  surrogate::DemoConfig cfg;

  app.add_option("--protocol", protocol, "coarse | fine | lockfree")
      ->check(CLI::IsMember({"coarse", "fine", "lockfree"}));
  app.add_option("--backend", launch.backend, "threads | sockets")
      ->check(CLI::IsMember({"threads", "sockets"}));
  app.add_option("--participants", launch.participants, "Participant count")
      ->check(CLI::PositiveNumber);
  app.add_option("--grid-width", cfg.grid_width, "Cells")->check(CLI::PositiveNumber);
  app.add_option("--steps", cfg.steps, "Time steps")->check(CLI::PositiveNumber);
  app.add_option("--digits", cfg.digits, "Significant digits kept in keys")
      ->check(CLI::PositiveNumber);
  app.add_option("--kernel-cost-us", cost_us, "Artificial kernel cost in microseconds")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--buckets", cfg.buckets, "Buckets per participant window")
      ->check(CLI::PositiveNumber);
  app.add_flag("--no-cache", no_cache, "Run the kernel for every cell");
  app.add_option("--csv", csv, "Per-step CSV (step,hits,misses,hit_rate)");
  auto* listen = app.add_option("--listen", launch.listen, "Host rank 0 at ADDR (host:port)");
  app.add_option("--connect", launch.connect, "Join the job hosted at ADDR (host:port)")
      ->excludes(listen);

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.protocol = parse_protocol(protocol);
    cfg.kernel_cost = std::chrono::microseconds(cost_us);
    cfg.use_cache = !no_cache;
    launch.window_size = surrogate::demo_window_size(cfg, launch.participants);

    surrogate::DemoSummary summary;
    bool have = false;
    std::mutex mu;
    tools::launch(launch, [&](rma::Endpoint& ep) {
      auto mine = surrogate::run_demo(ep, cfg);
      if (ep.rank() == 0) {
        std::lock_guard lock(mu);
        summary = std::move(mine);
        have = true;
      }
    });
    if (!have) return 0;

    const double last = summary.steps.empty() ? 0.0 : summary.steps.back().hit_rate();
    std::printf("protocol=%s cache=%s participants=%zu cells=%zu steps=%zu digits=%d "
                "kernel_calls=%llu hits=%llu hit_rate=%.4f final_step_hit_rate=%.4f "
                "seconds=%.3f\n",
                protocol.c_str(), cfg.use_cache ? "on" : "off", launch.participants,
                cfg.grid_width, cfg.steps, cfg.digits,
                static_cast<unsigned long long>(summary.kernel_calls),
                static_cast<unsigned long long>(summary.hits), summary.hit_rate(), last,
                summary.seconds);
    if (!csv.empty()) surrogate::write_step_csv(summary, csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dht-demo: %s\n", e.what());
    return 1;
  }
  return 0;
}
