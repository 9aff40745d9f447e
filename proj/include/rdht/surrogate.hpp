#pragma once

// Surrogate cache for an expensive per-cell kernel: inputs rounded to a fixed
// number of significant digits key the table, and a hit replaces a kernel call.

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rdht/dht.hpp"
#include "rdht/rma.hpp"

namespace rdht::surrogate {

inline constexpr std::size_t kSpecies = 9;
inline constexpr std::size_t kInputs = kSpecies + 1;  // + time step
inline constexpr std::size_t kOutputs = 13;
inline constexpr std::size_t kKeyBytes = kInputs * sizeof(double);     // 80
inline constexpr std::size_t kValueBytes = kOutputs * sizeof(double);  // 104

using CellInput = std::array<double, kInputs>;
using CellResult = std::array<double, kOutputs>;
using SurrogateKey = std::array<std::byte, kKeyBytes>;

/// Rounds to `digits` significant decimal digits, ties away from zero, judged
/// on the exact binary value of x. Zero, infinities and NaN pass through.
double round_significant(double x, int digits);

/// Rounded inputs as little-endian IEEE-754 doubles.
SurrogateKey make_key(const CellInput& in, int digits);
CellInput parse_key(const SurrogateKey& key);

/// Deterministic stand-in for a geochemistry solve. Species relax toward a
/// mass-conserving equilibrium at rate 1 over the time step:
///   T = sum c, s = T / (1 + T), w_i = exp(-(0.5 (i - 4) s + 0.25 i)) / sum w
///   eq_i = T w_i, out_i = eq_i + (c_i - eq_i) exp(-dt)
/// followed by T, s, exp(-dt), dt. Busy-spins for `cost` to emulate expense.
CellResult expensive_kernel(const CellInput& in,
                            std::chrono::nanoseconds cost = std::chrono::nanoseconds{0});

/// The equilibrium composition the kernel relaxes toward.
std::array<double, kSpecies> equilibrium(const std::array<double, kSpecies>& c);

struct CachedCall {
  CellResult result;
  bool hit = false;
};

/// Table lookup under the rounded key; on a miss runs the kernel and stores
/// its exact result.
CachedCall cached_simulate(Dht& dht, const CellInput& in, int digits,
                           std::chrono::nanoseconds cost = std::chrono::nanoseconds{0});

struct DemoConfig {
  std::size_t grid_width = 4096;
  std::size_t steps = 100;
  int digits = 4;
  std::chrono::microseconds kernel_cost{100};
  bool use_cache = true;
  bool inject = true;  // constant inflow at the left boundary
  double courant = 0.5;
  double time_step = 0.25;
  std::uint64_t buckets = 1u << 14;
  Protocol protocol = Protocol::lockfree;
};

struct StepStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  double hit_rate() const noexcept {
    const auto n = hits + misses;
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }
};

struct DemoSummary {
  std::vector<StepStats> steps;  // summed over participants
  std::uint64_t kernel_calls = 0;
  std::uint64_t hits = 0;
  double seconds = 0;  // slowest participant
  double hit_rate() const noexcept {
    const auto n = hits + kernel_calls;
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }
};

DhtConfig demo_table(const DemoConfig& cfg);
std::size_t demo_window_size(const DemoConfig& cfg, std::size_t participants);

/// Collective. 1-D first-order upwind advection of the nine species, then the
/// cached kernel on every owned cell, once per step. The grid is split into
/// contiguous blocks; each step ships a block's last cell to the right
/// neighbour's ghost slot and meets at a barrier.
DemoSummary run_demo(rma::Endpoint& ep, const DemoConfig& cfg);

/// Drives all participants of an in-process universe; returns rank 0's summary.
DemoSummary run_demo(rma::Universe& universe, const DemoConfig& cfg);

void write_step_csv(const DemoSummary& summary, const std::string& path);

}  // namespace rdht::surrogate
