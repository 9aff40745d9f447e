#include "rdht/surrogate.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <thread>

namespace rdht::surrogate {
namespace {

using Clock = std::chrono::steady_clock;
using Species = std::array<double, kSpecies>;

constexpr std::size_t kCellBytes = kSpecies * sizeof(double);

void store_double(std::byte* dst, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xFF);
}

double load_double(const std::byte* src) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(src[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

template <std::size_t N>
void store_all(std::span<std::byte> dst, const std::array<double, N>& v) {
  for (std::size_t i = 0; i < N; ++i) store_double(dst.data() + 8 * i, v[i]);
}

template <std::size_t N>
std::array<double, N> load_all(std::span<const std::byte> src) {
  std::array<double, N> v{};
  for (std::size_t i = 0; i < N; ++i) v[i] = load_double(src.data() + 8 * i);
  return v;
}

void busy_spin(std::chrono::nanoseconds cost) {
  if (cost.count() <= 0) return;
  const auto until = Clock::now() + cost;
  while (Clock::now() < until) {
  }
}

// Background pore water and the injected solution, before equilibration.
constexpr Species kBackground = {1.0, 0.5, 0.2, 0.8, 0.1, 0.05, 0.3, 0.02, 0.6};
constexpr Species kInflow = {0.05, 2.0, 0.4, 0.01, 1.5, 0.3, 0.02, 0.9, 0.1};

}  // namespace

double round_significant(double x, int digits) {
  if (digits < 1) throw std::invalid_argument("significant digits must be >= 1");
  if (x == 0.0 || !std::isfinite(x)) return x;
  if (digits >= 17) return x;  // 17 digits already identify every double

  // Twenty guard digits beyond the cut decide the rounding direction.
  char buf[64];
  const int precision = digits + 20;
  const auto res = std::to_chars(buf, buf + sizeof(buf), std::fabs(x),
                                 std::chars_format::scientific, precision);
  const std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
  const auto e = text.find('e');
  std::string mantissa;
  mantissa.reserve(static_cast<std::size_t>(precision) + 1);
  for (char ch : text.substr(0, e))
    if (ch != '.') mantissa += ch;
  int exponent = 0;
  std::from_chars(text.data() + e + 1 + (text[e + 1] == '+'), text.data() + text.size(), exponent);

  std::string kept = mantissa.substr(0, static_cast<std::size_t>(digits));
  if (mantissa[static_cast<std::size_t>(digits)] >= '5') {
    int i = digits - 1;
    for (; i >= 0 && kept[static_cast<std::size_t>(i)] == '9'; --i) kept[static_cast<std::size_t>(i)] = '0';
    if (i < 0)
      kept.insert(kept.begin(), '1');
    else
      ++kept[static_cast<std::size_t>(i)];
  }
  const std::string rounded = kept + "e" + std::to_string(exponent - (digits - 1));
  double out = 0;
  std::from_chars(rounded.data(), rounded.data() + rounded.size(), out);
  return std::signbit(x) ? -out : out;
}

SurrogateKey make_key(const CellInput& in, int digits) {
  SurrogateKey key{};
  for (std::size_t i = 0; i < kInputs; ++i)
    store_double(key.data() + 8 * i, round_significant(in[i], digits));
  return key;
}

CellInput parse_key(const SurrogateKey& key) { return load_all<kInputs>(key); }

Species equilibrium(const Species& c) {
  double total = 0;
  for (double v : c) total += v;
  const double s = total / (1.0 + total);
  Species w{};
  double norm = 0;
  for (std::size_t i = 0; i < kSpecies; ++i) {
    const double fi = static_cast<double>(i);
    w[i] = std::exp(-(0.5 * (fi - 4.0) * s + 0.25 * fi));
    norm += w[i];
  }
  for (std::size_t i = 0; i < kSpecies; ++i) w[i] = total * w[i] / norm;
  return w;
}

CellResult expensive_kernel(const CellInput& in, std::chrono::nanoseconds cost) {
  Species c{};
  std::copy_n(in.begin(), kSpecies, c.begin());
  const double dt = in[kSpecies];
  double total = 0;
  for (double v : c) total += v;
  const Species eq = equilibrium(c);
  const double relax = std::exp(-dt);

  CellResult out{};
  for (std::size_t i = 0; i < kSpecies; ++i) out[i] = eq[i] + (c[i] - eq[i]) * relax;
  out[9] = total;
  out[10] = total / (1.0 + total);
  out[11] = relax;
  out[12] = dt;
  busy_spin(cost);
  return out;
}

CachedCall cached_simulate(Dht& dht, const CellInput& in, int digits,
                           std::chrono::nanoseconds cost) {
  const SurrogateKey key = make_key(in, digits);
  std::array<std::byte, kValueBytes> value{};
  if (dht.read(key, value)) return CachedCall{load_all<kOutputs>(value), true};
  CachedCall call{expensive_kernel(in, cost), false};
  store_all(value, call.result);
  dht.write(key, value);
  return call;
}

DhtConfig demo_table(const DemoConfig& cfg) {
  DhtConfig t;
  t.protocol = cfg.protocol;
  t.key_size = kKeyBytes;
  t.value_size = kValueBytes;
  t.buckets = cfg.buckets;
  return t;
}

namespace {

struct DemoLayout {
  std::uint64_t halo = 0;    // two ghost slots, alternating by step parity
  std::uint64_t gather = 0;  // per participant: hits, misses per step, then wall ns
  std::uint64_t end = 0;
};

DemoLayout layout_for(const DemoConfig& cfg, std::size_t participants) {
  DemoLayout l;
  l.halo = (Dht::required_window(demo_table(cfg)) + 7) / 8 * 8;
  l.gather = l.halo + 2 * kCellBytes;
  l.end = l.gather + participants * (2 * cfg.steps + 1) * sizeof(std::uint64_t);
  return l;
}

}  // namespace

std::size_t demo_window_size(const DemoConfig& cfg, std::size_t participants) {
  return layout_for(cfg, participants).end;
}

DemoSummary run_demo(rma::Endpoint& ep, const DemoConfig& cfg) {
  const std::size_t P = ep.participants();
  if (cfg.grid_width < P) throw std::invalid_argument("grid narrower than participant count");
  if (cfg.steps == 0) throw std::invalid_argument("steps must be >= 1");
  const DemoLayout lay = layout_for(cfg, P);
  if (lay.end > ep.window_size()) throw std::invalid_argument("window too small for demo");

  std::optional<Dht> dht;
  if (cfg.use_cache) dht.emplace(ep, demo_table(cfg));

  const Rank me = ep.rank();
  const std::size_t lo = me * cfg.grid_width / P;
  const std::size_t hi = (me + 1) * cfg.grid_width / P;
  const Species background = equilibrium(kBackground);
  const Species inflow = cfg.inject ? kInflow : background;
  std::vector<Species> cells(hi - lo, background), next(hi - lo);
  std::vector<StepStats> steps(cfg.steps);
  const auto cost = std::chrono::duration_cast<std::chrono::nanoseconds>(cfg.kernel_cost);

  ep.barrier();
  const auto t0 = Clock::now();
  std::array<std::byte, kCellBytes> buf{};
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::uint64_t slot = lay.halo + (step % 2) * kCellBytes;
    if (me + 1 < P) {
      store_all(buf, cells.back());
      ep.put(me + 1, slot, buf);
    }
    ep.barrier();
    Species ghost = inflow;
    if (me > 0) {
      ep.get(me, slot, buf);
      ghost = load_all<kSpecies>(buf);
    }

    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Species& left = i == 0 ? ghost : cells[i - 1];
      for (std::size_t k = 0; k < kSpecies; ++k)
        next[i][k] = cells[i][k] - cfg.courant * (cells[i][k] - left[k]);
    }

    StepStats& st = steps[step];
    for (std::size_t i = 0; i < cells.size(); ++i) {
      CellInput in{};
      std::copy(next[i].begin(), next[i].end(), in.begin());
      in[kSpecies] = cfg.time_step;
      CellResult out;
      if (dht) {
        const CachedCall call = cached_simulate(*dht, in, cfg.digits, cost);
        out = call.result;
        call.hit ? ++st.hits : ++st.misses;
      } else {
        out = expensive_kernel(in, cost);
        ++st.misses;
      }
      std::copy_n(out.begin(), kSpecies, cells[i].begin());
    }
  }
  const auto nanos = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());

  // Gather per-step counts plus wall time at rank 0; everyone reads them back.
  const std::size_t words = 2 * cfg.steps + 1;
  std::vector<std::uint64_t> mine(words);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    mine[2 * s] = steps[s].hits;
    mine[2 * s + 1] = steps[s].misses;
  }
  mine.back() = nanos;
  ep.barrier();
  ep.put(0, lay.gather + me * words * sizeof(std::uint64_t), std::as_bytes(std::span(mine)));
  ep.barrier();
  std::vector<std::uint64_t> all(P * words);
  ep.get(0, lay.gather, std::as_writable_bytes(std::span(all)));
  ep.barrier();

  DemoSummary summary;
  summary.steps.resize(cfg.steps);
  std::uint64_t slowest = 0;
  for (std::size_t r = 0; r < P; ++r) {
    const std::uint64_t* row = all.data() + r * words;
    for (std::size_t s = 0; s < cfg.steps; ++s) {
      summary.steps[s].hits += row[2 * s];
      summary.steps[s].misses += row[2 * s + 1];
    }
    slowest = std::max(slowest, row[words - 1]);
  }
  for (const StepStats& s : summary.steps) {
    summary.hits += s.hits;
    summary.kernel_calls += s.misses;
  }
  summary.seconds = static_cast<double>(slowest) * 1e-9;
  if (dht) dht->free();
  return summary;
}

DemoSummary run_demo(rma::Universe& universe, const DemoConfig& cfg) {
  DemoSummary summary;
  rma::run_participants(universe, [&](rma::Endpoint& ep) {
    DemoSummary mine = run_demo(ep, cfg);
    if (ep.rank() == 0) summary = std::move(mine);
  });
  return summary;
}

void write_step_csv(const DemoSummary& summary, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << "step,hits,misses,hit_rate\r\n";
  for (std::size_t s = 0; s < summary.steps.size(); ++s)
    f << s << ',' << summary.steps[s].hits << ',' << summary.steps[s].misses << ','
      << summary.steps[s].hit_rate() << "\r\n";
}

}  // namespace rdht::surrogate
