#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rdht/dht.hpp"
#include "rdht/rma.hpp"
#include "rdht/workload.hpp"

namespace rdht::bench {

/// Aggregate over all participants for one barrier-delimited phase.
struct BenchResult {
  std::string protocol;
  std::string backend;
  std::size_t participants = 0;
  std::string phase;  // write | read | mixed
  std::string distribution;
  std::uint64_t ops = 0;
  double seconds = 0;  // slowest participant
  double ops_per_sec = 0;
  std::uint64_t misses = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t invalidations = 0;
  std::uint64_t evictions = 0;
  // Not part of the CSV.
  std::uint64_t reads = 0;
  std::uint64_t wrong_values = 0;
};

/// Bytes per participant reserved behind the table for gathering results.
inline constexpr std::size_t kGatherSlotBytes = 64;

/// Window size holding `cfg` plus the gather area for `participants`.
std::size_t window_size_for(const DhtConfig& cfg, std::size_t participants);

/// Collective. Writes spec.ops pairs per participant, barrier, reads them back.
/// Every participant returns the same aggregate {write, read}.
std::pair<BenchResult, BenchResult> run_write_then_read(
    Dht& dht, const workload::WorkloadSpec& spec,
    std::shared_ptr<const workload::ZipfTable> zipf = nullptr);

/// Collective. spec.ops operations per participant, each a read with
/// probability spec.read_ratio, otherwise a write.
BenchResult run_mixed(Dht& dht, const workload::WorkloadSpec& spec,
                      std::shared_ptr<const workload::ZipfTable> zipf = nullptr);

/// Collective: builds the table on `ep`, runs the plan, frees the table.
std::vector<BenchResult> run_participant(rma::Endpoint& ep, const DhtConfig& cfg,
                                         const workload::WorkloadSpec& spec,
                                         std::shared_ptr<const workload::ZipfTable> zipf = nullptr);

/// Drives every participant of an in-process universe; returns rank 0's results.
std::vector<BenchResult> run_benchmark(rma::Universe& universe, const DhtConfig& cfg,
                                       const workload::WorkloadSpec& spec);

inline constexpr const char* kCsvHeader =
    "protocol,backend,participants,phase,distribution,ops,seconds,ops_per_sec,misses,"
    "mismatches,invalidations,evictions";

/// RFC 4180 field quoting.
std::string csv_field(const std::string& s);
void write_csv(const std::vector<BenchResult>& results, std::ostream& out);
void emit_csv(const std::vector<BenchResult>& results, const std::string& path);

}  // namespace rdht::bench
