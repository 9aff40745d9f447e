#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rdht::workload {

/// splitmix64 finalizer; a bijection on 64-bit integers.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Key bytes for number `x`: block j is the big-endian encoding of
/// mix64(x ^ j * 0x9E3779B97F4A7C15), truncated to out.size() bytes.
void expand_key(std::uint64_t x, std::span<std::byte> out) noexcept;
std::vector<std::byte> expand_key(std::uint64_t x, std::size_t key_size);

class UniformGenerator {
 public:
  explicit UniformGenerator(std::uint64_t seed) : rng_(seed) {}
  std::uint64_t next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

/// Cumulative table of P(X = k) = k^-skew / H over k = 1..range.
class ZipfTable {
 public:
  ZipfTable(double skew, std::uint64_t range);

  double skew() const noexcept { return skew_; }
  std::uint64_t range() const noexcept { return cdf_.size(); }
  /// H = sum_{j=1..range} j^-skew.
  double harmonic() const noexcept { return harmonic_; }
  /// Maps u in [0, 1) to k in [1, range] by binary search.
  std::uint64_t sample(double u) const noexcept;

 private:
  double skew_;
  double harmonic_ = 0;
  std::vector<double> cdf_;
};

class ZipfGenerator {
 public:
  ZipfGenerator(std::shared_ptr<const ZipfTable> table, std::uint64_t seed)
      : table_(std::move(table)), rng_(seed) {}
  std::uint64_t next() { return table_->sample(unit(rng_)); }

  static double unit(std::mt19937_64& rng) noexcept {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  }

 private:
  std::shared_ptr<const ZipfTable> table_;
  std::mt19937_64 rng_;
};

enum class Distribution { uniform, zipf };
enum class Plan { write_then_read, mixed };

Distribution parse_distribution(const std::string& name);
const char* to_string(Distribution d) noexcept;
Plan parse_plan(const std::string& name);

struct WorkloadSpec {
  Distribution distribution = Distribution::uniform;
  double zipf_skew = 0.99;
  std::uint64_t zipf_range = 712500;
  Plan plan = Plan::write_then_read;
  /// Pairs per participant (write_then_read) or operations per participant (mixed).
  std::uint64_t ops = 100000;
  double read_ratio = 0.95;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Key numbers for one participant; participant i draws from seed + i.
class KeyStream {
 public:
  KeyStream(const WorkloadSpec& spec, std::uint32_t participant,
            std::shared_ptr<const ZipfTable> zipf = nullptr);
  std::uint64_t next();

 private:
  Distribution dist_;
  UniformGenerator uniform_;
  std::unique_ptr<ZipfGenerator> zipf_;
};

/// Benchmark payload: the key's leading bytes, then `seq` little-endian if
/// there is room, zeros after.
void fill_value(std::span<const std::byte> key, std::uint64_t seq, std::span<std::byte> value) noexcept;
/// True if the value carries `key` the way fill_value embeds it.
bool value_matches_key(std::span<const std::byte> key, std::span<const std::byte> value) noexcept;

}  // namespace rdht::workload
