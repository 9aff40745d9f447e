// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hooks.hpp"
#include "scenarios.hpp"
#include "rdht/socket_backend.hpp"
#include "rdht/surrogate.hpp"
#include "rdht/thread_backend.hpp"

using namespace rdht;
using namespace rdht::rma;
using Clock = std::chrono::steady_clock;

namespace {

constexpr Protocol kProtocols[] = {Protocol::coarse, Protocol::fine, Protocol::lockfree};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* title, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  std::printf("%s %2d %s:%s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.str().c_str(),
              seconds_since(t0));
  std::fflush(stdout);
  failures += !v.pass;
}

std::uint64_t word_at(Endpoint& ep, Rank r, std::uint64_t off) {
  std::uint64_t w;
  ep.get(r, off, std::as_writable_bytes(std::span(&w, 1)));
  return w;
}

// ---- 1 -------------------------------------------------------------------

constexpr int kOracleOps = 10000;
constexpr std::uint64_t kOracleBuckets = 512;
constexpr std::uint64_t kOracleKeys = 1500;

void correctness_oracle(Verdict& v) {
  const auto t0 = Clock::now();
  for (Protocol p : kProtocols) {
    ThreadUniverse u(1, Dht::required_window({p, 80, 104, kOracleBuckets}));
    const auto run = testing::oracle_scenario(u.endpoint(0), p, kOracleBuckets, kOracleOps,
                                              kOracleKeys, 1);
    v.detail << ' ' << to_string(p) << " mismatches=" << run.mismatches
             << " evictions=" << run.evictions;
    v.require(run.ops == kOracleOps && run.mismatches == 0, "oracle agreement");
    v.require(run.evictions > 0, "eviction exercised");
  }
  const double t = seconds_since(t0);
  v.require(t < 10, "runtime < 10 s");
}

// ---- 2 -------------------------------------------------------------------

constexpr std::uint64_t kStressOps = 100000;

void no_wrong_value(Verdict& v) {
  const auto t0 = Clock::now();
  const auto spec = testing::stress_spec(kStressOps);
  for (Protocol p : kProtocols) {
    const auto cfg = testing::stress_table(p);
    ThreadUniverse u(8, bench::window_size_for(cfg, 8));
    const auto res = bench::run_benchmark(u, cfg, spec);
    v.detail << ' ' << to_string(p) << " reads=" << res[0].reads
             << " wrong=" << res[0].wrong_values;
    v.require(res[0].ops == 8 * kStressOps, "all operations ran");
    v.require(res[0].wrong_values == 0, "zero wrong values");
  }
  v.require(seconds_since(t0) < 60, "runtime < 60 s");
}

// ---- 3 -------------------------------------------------------------------

void protocol_ordering(Verdict& v) {
  // Write-only zipfian phase over loopback TCP, where a remote operation
  // costs a round trip as it does on a real interconnect.
  constexpr std::size_t P = 12;
  constexpr int kRuns = 5;
  workload::WorkloadSpec spec;
  spec.distribution = workload::Distribution::zipf;
  spec.ops = 1500;
  double median[3];
  std::size_t window = 0;
  for (Protocol p : kProtocols)
    window = std::max(window, bench::window_size_for({p, 80, 104, 1u << 15}, P));
  LoopbackSocketUniverse u(P, window);
  for (int i = 0; i < 3; ++i) {
    const DhtConfig cfg{kProtocols[i], 80, 104, 1u << 15};
    std::vector<double> rates;
    for (int run = 0; run < kRuns; ++run) {
      spec.seed = static_cast<std::uint64_t>(run) * 1000;
      std::vector<bench::BenchResult> res;
      run_participants(u, [&](Endpoint& ep) {
        Dht d(ep, cfg);
        const auto w = bench::run_write_then_read(d, spec).first;
        if (ep.rank() == 0) res.push_back(w);
        d.free();
      });
      rates.push_back(res[0].ops_per_sec);
    }
    std::sort(rates.begin(), rates.end());
    median[i] = rates[kRuns / 2];
    v.detail << ' ' << to_string(kProtocols[i]) << '=' << median[i] / 1e6 << "Mops/s";
  }
  v.detail << " fine/coarse=" << median[1] / median[0] << " lockfree/fine=" << median[2] / median[1];
  v.require(median[1] >= 1.5 * median[0], "fine >= 1.5x coarse");
  v.require(median[2] >= 1.5 * median[1], "lockfree >= 1.5x fine");
}

// ---- 4 -------------------------------------------------------------------

void mismatch_accounting(Verdict& v) {
  constexpr std::size_t P = 8;
  for (Protocol p : kProtocols) {
    const DhtConfig cfg{p, 80, 104, 1u << 15};
    ThreadUniverse u(P, bench::window_size_for(cfg, P));

    workload::WorkloadSpec wtr;
    wtr.ops = 50000;
    const auto ro = bench::run_benchmark(u, cfg, wtr);
    v.require(ro[1].mismatches == 0, std::string(to_string(p)) + " read-only mismatches == 0");

    workload::WorkloadSpec mixed = wtr;
    mixed.plan = workload::Plan::mixed;
    mixed.ops = 100000;
    const auto mu = bench::run_benchmark(u, cfg, mixed);
    v.require(mu[0].mismatches == 0, std::string(to_string(p)) + " mixed-uniform mismatches == 0");

    v.detail << ' ' << to_string(p) << " ro=" << ro[1].mismatches << " mu=" << mu[0].mismatches;
    if (p == Protocol::lockfree) {
      auto mz = mixed;
      mz.distribution = workload::Distribution::zipf;
      const auto r = bench::run_benchmark(u, cfg, mz);
      const double frac = r[0].reads ? double(r[0].mismatches) / double(r[0].reads) : 0.0;
      v.detail << " mz=" << r[0].mismatches << '/' << r[0].reads;
      v.require(frac < 1e-3, "mixed-zipf lockfree mismatch fraction < 1e-3");
    }
  }
}

// ---- 5 -------------------------------------------------------------------

void atomicity(Verdict& v) {
  {
    constexpr int kContenders = 64, kRounds = 1000;
    ThreadUniverse u(1, kRounds * 8);
    std::vector<int> winners(kRounds, 0);
    std::atomic<int> wins{0};
    std::barrier round_start(kContenders);
    std::vector<std::thread> ts;
    for (int t = 0; t < kContenders; ++t)
      ts.emplace_back([&, t] {
        for (int r = 0; r < kRounds; ++r) {
          round_start.arrive_and_wait();
          if (u.endpoint(0).cas64(0, r * 8, 0, t + 1) == 0) {
            wins.fetch_add(1);
            __atomic_fetch_add(&winners[r], 1, __ATOMIC_RELAXED);
          }
        }
      });
    for (auto& t : ts) t.join();
    const bool one_each = std::all_of(winners.begin(), winners.end(), [](int w) { return w == 1; });
    v.detail << " cas rounds with one winner=" << std::count(winners.begin(), winners.end(), 1);
    v.require(one_each, "exactly one cas winner per round");
  }
  {
    ThreadUniverse u(1, 64);
    std::vector<std::thread> ts;
    for (int t = 0; t < 64; ++t)
      ts.emplace_back([&] {
        for (int i = 0; i < 1000; ++i) u.endpoint(0).faa64(0, 8, 1);
      });
    for (auto& t : ts) t.join();
    const auto sum = word_at(u.endpoint(0), 0, 8);
    v.detail << " faa sum=" << sum;
    v.require(sum == 64000, "faa sum exact");
  }
  for (Protocol p : {Protocol::coarse, Protocol::fine}) {
    // Non-atomic get/modify/put of a canary under the protocol's lock word.
    const auto layout = bucket_layout(p, 80, 104);
    const std::uint64_t bucket = kWindowHeaderBytes + 3 * layout.stride;
    const std::uint64_t lock = p == Protocol::coarse ? kWindowLockOffset : bucket + layout.lock_offset;
    const std::uint64_t canary = bucket + layout.value_offset;
    constexpr std::size_t P = 4;
    constexpr int kThreads = 8, kEach = 125000;
    ThreadUniverse u(P, 4096);
    std::vector<std::thread> ts;
    for (int t = 0; t < kThreads; ++t)
      ts.emplace_back([&, t] {
        Endpoint& ep = u.endpoint(static_cast<Rank>(t % P));
        for (int i = 0; i < kEach; ++i) {
          lock_exclusive(ep, 1, lock);
          std::uint64_t c;
          ep.get(1, canary, std::as_writable_bytes(std::span(&c, 1)));
          ++c;
          ep.put(1, canary, std::as_bytes(std::span(&c, 1)));
          unlock_exclusive(ep, 1, lock);
        }
      });
    for (auto& t : ts) t.join();
    std::uint64_t c;
    u.endpoint(0).get(1, canary, std::as_writable_bytes(std::span(&c, 1)));
    v.detail << ' ' << to_string(p) << " canary=" << c;
    v.require(c == kThreads * kEach, std::string(to_string(p)) + " canary lost no increments");
  }
}

// ---- 6 -------------------------------------------------------------------

void lock_protocol(Verdict& v) {
  ThreadUniverse u(2, 4096);
  Endpoint& a = u.endpoint(0);
  Endpoint& b = u.endpoint(1);
  constexpr std::uint64_t kWord = 64;

  lock_exclusive(a, 1, kWord);
  const auto held = word_at(a, 1, kWord);
  v.detail << " writer word=0x" << std::hex << held << std::dec;
  v.require(held == 0x10000000, "writer leaves 0x10000000");

  std::atomic<bool> reader_in{false};
  std::thread reader([&] {
    lock_shared(b, 1, kWord);
    reader_in = true;
  });
  int exact = 0, beyond = 0;
  for (int i = 0; i < 100; ++i) {
    std::this_thread::sleep_for(std::chrono::microseconds(500));
    const auto w = word_at(a, 1, kWord);
    exact += w == kExclusiveLock;
    beyond += w > kExclusiveLock + 1;
  }
  v.require(!reader_in.load(), "reader waits while writer holds");
  v.require(exact > 0 && beyond == 0, "reader revokes its increment");
  unlock_exclusive(a, 1, kWord);
  reader.join();
  v.require(reader_in.load(), "reader acquires after release");
  v.require(word_at(a, 1, kWord) == 1, "reader holds shared");
  unlock_shared(b, 1, kWord);

  constexpr int kReaders = 32;
  std::barrier sync(kReaders + 1);
  std::vector<std::thread> ts;
  for (int i = 0; i < kReaders; ++i)
    ts.emplace_back([&, i] {
      Endpoint& ep = u.endpoint(static_cast<Rank>(i % 2));
      lock_shared(ep, 1, kWord);
      sync.arrive_and_wait();
      sync.arrive_and_wait();
      unlock_shared(ep, 1, kWord);
    });
  sync.arrive_and_wait();
  const auto co = word_at(a, 1, kWord);
  sync.arrive_and_wait();
  for (auto& t : ts) t.join();
  v.detail << " co-holding readers=" << co;
  v.require(co == kReaders, "32 readers co-hold");
  v.require(word_at(a, 1, kWord) == 0, "word returns to 0");
}

// ---- 7 -------------------------------------------------------------------

struct ChildReport {
  std::string text;
  int status = -1;
};

// Four processes; rank assignment comes from the rendezvous. Each child runs
// the oracle and stress scenarios for every protocol and prints one line per
// scenario to its pipe.
void backend_equivalence(Verdict& v) {
  const auto t0 = Clock::now();
  constexpr std::size_t P = 4;
  std::size_t window = 0;
  for (Protocol p : kProtocols) {
    window = std::max(window, Dht::required_window({p, 80, 104, kOracleBuckets}));
    window = std::max(window, bench::window_size_for(testing::stress_table(p), P));
  }

  // Reference traces for the same P on the threads backend.
  std::vector<std::uint64_t> want_trace;
  for (Protocol p : kProtocols) {
    ThreadUniverse u(P, window);
    testing::OracleRun run0;
    run_participants(u, [&](Endpoint& ep) {
      auto r = testing::oracle_scenario(ep, p, kOracleBuckets, kOracleOps, kOracleKeys, 1);
      if (ep.rank() == 0) run0 = r;
    });
    want_trace.push_back(run0.trace);
  }

  Rendezvous rv(HostPort{"127.0.0.1", 0});
  const HostPort root{"127.0.0.1", rv.port()};
  std::vector<pid_t> pids;
  std::vector<int> pipes;
  for (std::size_t i = 0; i < P; ++i) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
      ::close(fds[0]);
      int code = 0;
      std::ostringstream out;
      try {
        std::unique_ptr<SocketEndpoint> ep =
            i == 0 ? SocketEndpoint::host(std::move(rv), P, window) : SocketEndpoint::join(root);
        for (Protocol p : kProtocols) {
          const auto run = testing::oracle_scenario(*ep, p, kOracleBuckets, kOracleOps, kOracleKeys, 1);
          const auto res = bench::run_participant(*ep, testing::stress_table(p),
                                                  testing::stress_spec(kStressOps));
          out << to_string(p) << ' ' << run.ops << ' ' << run.mismatches << ' ' << run.trace << ' '
              << res[0].ops << ' ' << res[0].wrong_values << '\n';
        }
        ep->barrier();
      } catch (const std::exception& e) {
        out << "error " << e.what() << '\n';
        code = 1;
      }
      const std::string s = out.str();
      [[maybe_unused]] auto n = ::write(fds[1], s.data(), s.size());
      ::close(fds[1]);
      ::_exit(code);
    }
    ::close(fds[1]);
    pids.push_back(pid);
    pipes.push_back(fds[0]);
  }

  std::vector<ChildReport> reports(P);
  for (std::size_t i = 0; i < P; ++i) {
    char buf[4096];
    ssize_t n;
    while ((n = ::read(pipes[i], buf, sizeof(buf))) > 0) reports[i].text.append(buf, n);
    ::close(pipes[i]);
    ::waitpid(pids[i], &reports[i].status, 0);
  }
  for (std::size_t i = 0; i < P; ++i)
    v.require(WIFEXITED(reports[i].status) && WEXITSTATUS(reports[i].status) == 0,
              "process " + std::to_string(i) + " exited cleanly: " + reports[i].text);

  // The process holding rank 0 is the one whose oracle run did work.
  bool found = false;
  for (const auto& r : reports) {
    std::istringstream in(r.text);
    std::string proto;
    std::size_t ops, mism;
    std::uint64_t trace, sops, wrong;
    int k = 0;
    bool rank0 = false;
    while (in >> proto >> ops >> mism >> trace >> sops >> wrong) {
      v.require(wrong == 0, proto + " zero wrong values");
      v.require(sops == P * kStressOps, proto + " all stress ops ran");
      if (ops > 0) {
        rank0 = true;
        v.require(mism == 0, proto + " oracle agreement");
        v.require(trace == want_trace[k], proto + " trace identical to threads backend");
        v.detail << ' ' << proto << " mismatches=" << mism << " wrong=" << wrong;
      }
      ++k;
    }
    if (rank0) found = k == 3;
  }
  v.require(found, "rank 0 reported all protocols");
  v.require(seconds_since(t0) < 120, "runtime < 120 s");
}

// ---- 8 -------------------------------------------------------------------

void torn_write_detection(Verdict& v) {
  ThreadUniverse u(1, 1u << 16);
  testing::HookEndpoint hook(u.endpoint(0));
  Dht d(hook, {Protocol::lockfree, 80, 104, 64});
  const auto& lay = d.layout();
  const auto key = workload::expand_key(8, 80);
  std::vector<std::byte> v_old(104), v_new(104);
  workload::fill_value(key, 0x1111111111111111ULL, v_old);
  workload::fill_value(key, 0x2222222222222222ULL, v_new);
  std::vector<std::byte> img_old(lay.stride);
  encode_bucket(lay, key, v_old, kMetaOccupied, img_old);
  d.write(key, v_new);

  // Byte-wise interleave of the stored image with the old one; meta stays
  // real. In random mode each fetch is torn with probability one half.
  std::mt19937 rng(1);
  int phase = 0;
  bool tear = false, coin = false;
  std::uint64_t torn = 0;
  hook.on_get = [&](Rank, std::uint64_t, std::span<std::byte> out) {
    if (!tear || out.size() != lay.stride) return;
    if (coin && rng() % 2) return;
    const auto meta = std::to_integer<std::uint8_t>(out[lay.meta_offset]);
    if (!(meta & kMetaOccupied) || (meta & kMetaInvalid)) return;
    for (std::size_t i = 0; i < lay.meta_offset; ++i)
      if ((i + phase) % 2) out[i] = img_old[i];
    ++torn;
  };

  // Persistent tearing: three retries, then the bucket is flagged.
  tear = true;
  auto before = d.stats();
  const bool hit = d.read(key).has_value();
  auto delta = d.stats() - before;
  tear = false;
  v.require(!hit, "persistently torn bucket reads as a miss");
  v.require(delta.checksum_mismatch_retries == 3, "three retries counted");
  v.require(delta.invalidations == 1, "one invalidation counted");
  std::byte meta;
  u.endpoint(0).get(0, d.bucket_offset(candidate_indices(hash64(key), 64)[0]) + lay.meta_offset,
                    std::span(&meta, 1));
  v.require(std::to_integer<int>(meta) == (kMetaOccupied | kMetaInvalid), "bucket flagged invalid");
  v.detail << " persistent: retries=" << delta.checksum_mismatch_retries
           << " invalidations=" << delta.invalidations;

  // Random tearing: reads return the stored value or nothing, and every torn
  // fetch shows up either as a retry or as an invalidation.
  d.write(key, v_new);
  std::uint64_t bad = 0, hits = 0;
  torn = 0;
  coin = true;
  before = d.stats();
  std::vector<std::byte> got(104);
  for (int i = 0; i < 5000; ++i) {
    phase = static_cast<int>(rng() % 2);
    const auto inv0 = d.stats().invalidations;
    tear = true;
    if (d.read(key, got)) {
      ++hits;
      bad += got != v_new;
    }
    tear = false;
    if (d.stats().invalidations != inv0) d.write(key, v_new);
  }
  delta = d.stats() - before;
  v.detail << " random: reads=" << 5000 << " hits=" << hits << " torn=" << torn
           << " retries=" << delta.checksum_mismatch_retries
           << " invalidations=" << delta.invalidations;
  v.require(bad == 0, "no checksum-inconsistent value surfaced");
  v.require(torn == delta.checksum_mismatch_retries + delta.invalidations,
            "every torn fetch accounted");
  v.require(hits > 0 && delta.invalidations > 0, "both outcomes exercised");
}

// ---- 9 -------------------------------------------------------------------

void zipf_generator(Verdict& v) {
  constexpr std::uint64_t N = 712500;
  constexpr double s = 0.99;
  long double H = 0;
  for (std::uint64_t k = N; k >= 1; --k) H += std::pow(static_cast<long double>(k), -s);
  const double want = static_cast<double>(1.0L / H);

  workload::ZipfGenerator g(std::make_shared<const workload::ZipfTable>(s, N), 12345);
  constexpr std::uint64_t kDraws = 10000000;
  std::uint64_t ones = 0;
  for (std::uint64_t i = 0; i < kDraws; ++i) ones += g.next() == 1;
  const double got = double(ones) / double(kDraws);
  const double rel = std::fabs(got - want) / want;
  v.detail << " P(X=1)=" << got << " oracle=" << want << " rel.err=" << rel;
  v.require(rel < 0.05, "within 5 % of 1/H");
}

// ---- 10 ------------------------------------------------------------------

void surrogate_demo(Verdict& v) {
  surrogate::DemoConfig cfg;  // width 4096, 100 steps, 4 digits, 100 us kernel, lockfree
  constexpr std::size_t P = 8;
  ThreadUniverse u(P, surrogate::demo_window_size(cfg, P));
  const auto cached = surrogate::run_demo(u, cfg);
  auto plain_cfg = cfg;
  plain_cfg.use_cache = false;
  const auto plain = surrogate::run_demo(u, plain_cfg);
  const double last = cached.steps.back().hit_rate();
  v.detail << " cached=" << cached.seconds << "s uncached=" << plain.seconds
           << "s final-step hit rate=" << last << " overall=" << cached.hit_rate();
  v.require(cached.seconds < plain.seconds, "cached run faster");
  v.require(last > 0.5, "final-step hit rate > 50 %");
}

// ---- 11 ------------------------------------------------------------------

void layout_arithmetic(Verdict& v) {
  const std::size_t want[] = {185, 200, 189};
  for (int i = 0; i < 3; ++i) {
    const DhtConfig cfg{kProtocols[i], 80, 104, 16};
    ThreadUniverse u(1, Dht::required_window(cfg));
    Dht d(u.endpoint(0), cfg);
    v.detail << ' ' << to_string(kProtocols[i]) << '=' << d.layout().stride;
    v.require(d.layout().stride == want[i], std::string(to_string(kProtocols[i])) + " stride");
    d.free();
  }
  v.require(bucket_layout(Protocol::coarse, 80, 104).overhead() == 1, "coarse adds one byte");
  v.require(bucket_layout(Protocol::lockfree, 80, 104).overhead() == 5, "lockfree adds checksum + meta");
  // Fine buckets add the lock word and padding on top of the coarse layout.
  const auto fine = bucket_layout(Protocol::fine, 80, 104);
  const auto extra = fine.stride - bucket_layout(Protocol::coarse, 80, 104).stride;
  v.require(extra <= 15, "fine overhead beyond coarse at most 15 bytes");
  bool bounded = true;
  for (std::size_t k = 1; k <= 64; ++k)
    for (std::size_t val = 1; val <= 64; ++val) {
      const auto f = bucket_layout(Protocol::fine, k, val);
      bounded &= f.stride % 8 == 0 && f.stride - (k + val + 1) <= 15;
    }
  v.require(bounded, "fine overhead bounded for all small shapes");
}

}  // namespace

int main() {
  report(1, "correctness oracle", correctness_oracle);
  report(2, "no wrong values under contention", no_wrong_value);
  report(3, "protocol ordering", protocol_ordering);
  report(4, "mismatch accounting", mismatch_accounting);
  report(5, "atomicity suite", atomicity);
  report(6, "lock protocol", lock_protocol);
  report(7, "backend equivalence", backend_equivalence);
  report(8, "torn-write detection", torn_write_detection);
  report(9, "zipf generator", zipf_generator);
  report(10, "surrogate demo", surrogate_demo);
  report(11, "bucket layout arithmetic", layout_arithmetic);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
