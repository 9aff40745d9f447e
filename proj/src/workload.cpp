#include "rdht/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace rdht::workload {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

void expand_key(std::uint64_t x, std::span<std::byte> out) noexcept {
  for (std::size_t j = 0; j * 8 < out.size(); ++j) {
    const std::uint64_t block = mix64(x ^ (j * 0x9E3779B97F4A7C15ULL));
    for (std::size_t b = 0; b < 8 && j * 8 + b < out.size(); ++b)
      out[j * 8 + b] = static_cast<std::byte>((block >> (56 - 8 * b)) & 0xFF);
  }
}

std::vector<std::byte> expand_key(std::uint64_t x, std::size_t key_size) {
  std::vector<std::byte> key(key_size);
  expand_key(x, key);
  return key;
}

ZipfTable::ZipfTable(double skew, std::uint64_t range) : skew_(skew) {
  if (range == 0) throw std::invalid_argument("zipf range must be >= 1");
  if (!(skew >= 0)) throw std::invalid_argument("zipf skew must be >= 0");
  cdf_.resize(range);
  double sum = 0;
  for (std::uint64_t k = 1; k <= range; ++k) {
    sum += std::pow(static_cast<double>(k), -skew);
    cdf_[k - 1] = sum;
  }
  harmonic_ = sum;
  for (double& c : cdf_) c /= sum;
  cdf_.back() = 1.0;
}

std::uint64_t ZipfTable::sample(double u) const noexcept {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = static_cast<std::uint64_t>(it - cdf_.begin());
  return std::min<std::uint64_t>(idx, cdf_.size() - 1) + 1;
}

Distribution parse_distribution(const std::string& name) {
  if (name == "uniform") return Distribution::uniform;
  if (name == "zipf" || name == "zipfian") return Distribution::zipf;
  throw std::invalid_argument("unknown distribution '" + name + "' (expected uniform|zipf)");
}

const char* to_string(Distribution d) noexcept {
  return d == Distribution::uniform ? "uniform" : "zipf";
}

Plan parse_plan(const std::string& name) {
  if (name == "wtr") return Plan::write_then_read;
  if (name == "mixed") return Plan::mixed;
  throw std::invalid_argument("unknown workload '" + name + "' (expected wtr|mixed)");
}

void WorkloadSpec::validate() const {
  if (ops < 1) throw std::invalid_argument("op count must be >= 1");
  if (!(read_ratio >= 0.0 && read_ratio <= 1.0))
    throw std::invalid_argument("read ratio must lie in [0, 1]");
  if (distribution == Distribution::zipf) {
    if (zipf_range < 1) throw std::invalid_argument("zipf range must be >= 1");
    if (!(zipf_skew >= 0)) throw std::invalid_argument("zipf skew must be >= 0");
  }
}

KeyStream::KeyStream(const WorkloadSpec& spec, std::uint32_t participant,
                     std::shared_ptr<const ZipfTable> zipf)
    : dist_(spec.distribution), uniform_(spec.seed + participant) {
  if (dist_ == Distribution::zipf) {
    if (!zipf) zipf = std::make_shared<const ZipfTable>(spec.zipf_skew, spec.zipf_range);
    zipf_ = std::make_unique<ZipfGenerator>(std::move(zipf), spec.seed + participant);
  }
}

std::uint64_t KeyStream::next() {
  return dist_ == Distribution::uniform ? uniform_.next() : zipf_->next();
}

void fill_value(std::span<const std::byte> key, std::uint64_t seq, std::span<std::byte> value) noexcept {
  std::fill(value.begin(), value.end(), std::byte{0});
  const std::size_t n = std::min(key.size(), value.size());
  std::memcpy(value.data(), key.data(), n);
  for (std::size_t i = 0; i < 8 && n + i < value.size(); ++i)
    value[n + i] = static_cast<std::byte>((seq >> (8 * i)) & 0xFF);
}

bool value_matches_key(std::span<const std::byte> key, std::span<const std::byte> value) noexcept {
  const std::size_t n = std::min(key.size(), value.size());
  return std::memcmp(key.data(), value.data(), n) == 0;
}

}  // namespace rdht::workload
