#include "rdht/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rdht::bench {
namespace {

using workload::WorkloadSpec;

struct Counters {
  std::uint64_t ops = 0;
  std::uint64_t nanos = 0;
  std::uint64_t reads = 0;
  std::uint64_t misses = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t invalidations = 0;
  std::uint64_t evictions = 0;
  std::uint64_t wrong_values = 0;
};
static_assert(sizeof(Counters) == kGatherSlotBytes);

std::uint64_t gather_base(const Dht& dht) { return (dht.region_end() + 7) / 8 * 8; }

// Everybody deposits its counters at rank 0, then everybody reads them all.
std::vector<Counters> all_gather(Dht& dht, const Counters& mine) {
  rma::Endpoint& ep = dht.endpoint();
  const std::uint64_t base = gather_base(dht);
  ep.put(0, base + ep.rank() * kGatherSlotBytes,
         std::as_bytes(std::span(&mine, 1)));
  ep.barrier();
  std::vector<Counters> all(ep.participants());
  ep.get(0, base, std::as_writable_bytes(std::span(all)));
  ep.barrier();
  return all;
}

BenchResult aggregate(Dht& dht, const Counters& mine, const char* phase, const WorkloadSpec& spec) {
  const auto all = all_gather(dht, mine);
  BenchResult r;
  r.protocol = to_string(dht.config().protocol);
  r.backend = rma::to_string(dht.endpoint().backend());
  r.participants = dht.participants();
  r.phase = phase;
  r.distribution = workload::to_string(spec.distribution);
  std::uint64_t slowest = 0;
  for (const Counters& c : all) {
    r.ops += c.ops;
    r.reads += c.reads;
    r.misses += c.misses;
    r.mismatches += c.mismatches;
    r.invalidations += c.invalidations;
    r.evictions += c.evictions;
    r.wrong_values += c.wrong_values;
    slowest = std::max(slowest, c.nanos);
  }
  r.seconds = static_cast<double>(slowest) * 1e-9;
  r.ops_per_sec = r.seconds > 0 ? static_cast<double>(r.ops) / r.seconds : 0.0;
  return r;
}

void account(Counters& c, const DhtStats& delta) {
  c.reads = delta.reads;
  c.misses = delta.read_misses;
  c.mismatches = delta.checksum_mismatch_retries;
  c.invalidations = delta.invalidations;
  c.evictions = delta.evictions;
}

std::shared_ptr<const workload::ZipfTable> table_for(const WorkloadSpec& spec,
                                                     std::shared_ptr<const workload::ZipfTable> zipf) {
  if (spec.distribution != workload::Distribution::zipf) return nullptr;
  if (zipf && zipf->range() == spec.zipf_range && zipf->skew() == spec.zipf_skew) return zipf;
  return std::make_shared<const workload::ZipfTable>(spec.zipf_skew, spec.zipf_range);
}

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count());
}

}  // namespace

std::size_t window_size_for(const DhtConfig& cfg, std::size_t participants) {
  return (Dht::required_window(cfg) + 7) / 8 * 8 + participants * kGatherSlotBytes;
}

std::pair<BenchResult, BenchResult> run_write_then_read(
    Dht& dht, const WorkloadSpec& spec, std::shared_ptr<const workload::ZipfTable> zipf) {
  spec.validate();
  zipf = table_for(spec, std::move(zipf));
  rma::Endpoint& ep = dht.endpoint();
  const auto& cfg = dht.config();
  std::vector<std::byte> key(cfg.key_size), value(cfg.value_size), got(cfg.value_size);

  Counters w;
  {
    workload::KeyStream keys(spec, ep.rank(), zipf);
    ep.barrier();
    const DhtStats before = dht.stats();
    const auto t0 = Clock::now();
    for (std::uint64_t i = 0; i < spec.ops; ++i) {
      workload::expand_key(keys.next(), key);
      workload::fill_value(key, i, value);
      dht.write(key, value);
    }
    w.nanos = elapsed_ns(t0);
    w.ops = spec.ops;
    account(w, dht.stats() - before);
  }
  BenchResult write = aggregate(dht, w, "write", spec);

  Counters r;
  {
    workload::KeyStream keys(spec, ep.rank(), zipf);
    ep.barrier();
    const DhtStats before = dht.stats();
    const auto t0 = Clock::now();
    for (std::uint64_t i = 0; i < spec.ops; ++i) {
      workload::expand_key(keys.next(), key);
      if (dht.read(key, got) && !workload::value_matches_key(key, got)) ++r.wrong_values;
    }
    r.nanos = elapsed_ns(t0);
    r.ops = spec.ops;
    account(r, dht.stats() - before);
  }
  BenchResult read = aggregate(dht, r, "read", spec);
  return {std::move(write), std::move(read)};
}

BenchResult run_mixed(Dht& dht, const WorkloadSpec& spec,
                      std::shared_ptr<const workload::ZipfTable> zipf) {
  spec.validate();
  zipf = table_for(spec, std::move(zipf));
  rma::Endpoint& ep = dht.endpoint();
  const auto& cfg = dht.config();
  std::vector<std::byte> key(cfg.key_size), value(cfg.value_size), got(cfg.value_size);

  workload::KeyStream keys(spec, ep.rank(), zipf);
  std::mt19937_64 coin(workload::mix64(spec.seed + ep.rank()) ^ 0x6d69786564ULL);

  Counters c;
  ep.barrier();
  const DhtStats before = dht.stats();
  const auto t0 = Clock::now();
  for (std::uint64_t i = 0; i < spec.ops; ++i) {
    workload::expand_key(keys.next(), key);
    if (workload::ZipfGenerator::unit(coin) < spec.read_ratio) {
      if (dht.read(key, got) && !workload::value_matches_key(key, got)) ++c.wrong_values;
    } else {
      workload::fill_value(key, i, value);
      dht.write(key, value);
    }
  }
  c.nanos = elapsed_ns(t0);
  c.ops = spec.ops;
  account(c, dht.stats() - before);
  return aggregate(dht, c, "mixed", spec);
}

std::vector<BenchResult> run_participant(rma::Endpoint& ep, const DhtConfig& cfg,
                                         const WorkloadSpec& spec,
                                         std::shared_ptr<const workload::ZipfTable> zipf) {
  if (window_size_for(cfg, ep.participants()) > ep.window_size())
    throw std::invalid_argument("window too small for table plus gather area");
  Dht dht(ep, cfg);
  std::vector<BenchResult> out;
  if (spec.plan == workload::Plan::write_then_read) {
    auto [w, r] = run_write_then_read(dht, spec, zipf);
    out.push_back(std::move(w));
    out.push_back(std::move(r));
  } else {
    out.push_back(run_mixed(dht, spec, zipf));
  }
  dht.free();
  return out;
}

std::vector<BenchResult> run_benchmark(rma::Universe& universe, const DhtConfig& cfg,
                                       const WorkloadSpec& spec) {
  spec.validate();
  const auto zipf = table_for(spec, nullptr);
  std::vector<BenchResult> results;
  rma::run_participants(universe, [&](rma::Endpoint& ep) {
    auto mine = run_participant(ep, cfg, spec, zipf);
    if (ep.rank() == 0) results = std::move(mine);
  });
  return results;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_csv(const std::vector<BenchResult>& results, std::ostream& out) {
  out << kCsvHeader << "\r\n";
  for (const BenchResult& r : results) {
    std::ostringstream seconds, rate;
    seconds << std::setprecision(17) << r.seconds;
    rate << std::setprecision(17) << r.ops_per_sec;
    out << csv_field(r.protocol) << ',' << csv_field(r.backend) << ',' << r.participants << ','
        << csv_field(r.phase) << ',' << csv_field(r.distribution) << ',' << r.ops << ','
        << seconds.str() << ',' << rate.str() << ',' << r.misses << ',' << r.mismatches << ','
        << r.invalidations << ',' << r.evictions << "\r\n";
  }
}

void emit_csv(const std::vector<BenchResult>& results, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(results, f);
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace rdht::bench
