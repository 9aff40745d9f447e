#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "rdht/bench.hpp"
#include "rdht/dht.hpp"
#include "rdht/surrogate.hpp"
#include "rdht/thread_backend.hpp"

namespace py = pybind11;
using namespace rdht;

namespace {

std::span<const std::byte> view(const py::bytes& b) {
  const std::string_view s = b;
  return std::as_bytes(std::span(s.data(), s.size()));
}

py::bytes to_bytes(std::span<const std::byte> b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

// Single-participant table living in this process.
class Table {
 public:
  Table(const std::string& protocol, std::size_t key_size, std::size_t value_size,
        std::uint64_t buckets)
      : cfg_{parse_protocol(protocol), key_size, value_size, buckets},
        universe_(1, Dht::required_window(cfg_)),
        dht_(universe_.endpoint(0), cfg_) {}

  std::string write(const py::bytes& key, const py::bytes& value) {
    switch (dht_.write(view(key), view(value))) {
      case WriteOutcome::inserted: return "inserted";
      case WriteOutcome::updated: return "updated";
      case WriteOutcome::evicted: return "evicted";
    }
    return "";
  }

  py::object read(const py::bytes& key) {
    auto v = dht_.read(view(key));
    if (!v) return py::none();
    return to_bytes(*v);
  }

  py::dict stats() const {
    const DhtStats s = dht_.stats();
    py::dict d;
    d["reads"] = s.reads;
    d["writes"] = s.writes;
    d["read_misses"] = s.read_misses;
    d["checksum_mismatch_retries"] = s.checksum_mismatch_retries;
    d["invalidations"] = s.invalidations;
    d["evictions"] = s.evictions;
    return d;
  }

  std::size_t stride() const { return dht_.layout().stride; }

 private:
  DhtConfig cfg_;
  rma::ThreadUniverse universe_;
  Dht dht_;
};

py::dict result_dict(const bench::BenchResult& r) {
  py::dict d;
  d["protocol"] = r.protocol;
  d["backend"] = r.backend;
  d["participants"] = r.participants;
  d["phase"] = r.phase;
  d["distribution"] = r.distribution;
  d["ops"] = r.ops;
  d["seconds"] = r.seconds;
  d["ops_per_sec"] = r.ops_per_sec;
  d["misses"] = r.misses;
  d["mismatches"] = r.mismatches;
  d["invalidations"] = r.invalidations;
  d["evictions"] = r.evictions;
  d["wrong_values"] = r.wrong_values;
  return d;
}

surrogate::CellInput cell_input(const std::vector<double>& in) {
  if (in.size() != surrogate::kInputs)
    throw py::value_error("expected " + std::to_string(surrogate::kInputs) + " inputs");
  surrogate::CellInput c;
  std::copy(in.begin(), in.end(), c.begin());
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distributed hash-table cache over one-sided remote memory access";

  m.def("hash64", [](const py::bytes& b) { return hash64(view(b)); }, "FNV-1a 64-bit hash");
  m.def("index_width", &index_width, py::arg("buckets"));
  m.def("candidate_indices",
        py::overload_cast<std::uint64_t, std::uint64_t>(&candidate_indices), py::arg("hash"),
        py::arg("buckets"));
  m.def("target_rank", &target_rank, py::arg("hash"), py::arg("participants"));
  m.def("crc32", [](const py::bytes& b, std::uint32_t seed) { return crc32(view(b), seed); },
        py::arg("data"), py::arg("seed") = 0);
  m.def(
      "bucket_layout",
      [](const std::string& protocol, std::size_t key_size, std::size_t value_size) {
        const BucketLayout l = bucket_layout(parse_protocol(protocol), key_size, value_size);
        py::dict d;
        d["stride"] = l.stride;
        d["key_offset"] = l.key_offset;
        d["value_offset"] = l.value_offset;
        d["meta_offset"] = l.meta_offset;
        d["lock_offset"] = l.has_lock() ? py::object(py::int_(l.lock_offset)) : py::none();
        d["checksum_offset"] =
            l.has_checksum() ? py::object(py::int_(l.checksum_offset)) : py::none();
        return d;
      },
      py::arg("protocol"), py::arg("key_size") = 80, py::arg("value_size") = 104);

  py::class_<Table>(m, "Table")
      .def(py::init<const std::string&, std::size_t, std::size_t, std::uint64_t>(),
           py::arg("protocol") = "lockfree", py::arg("key_size") = 80,
           py::arg("value_size") = 104, py::arg("buckets") = 1024)
      .def("write", &Table::write, py::arg("key"), py::arg("value"))
      .def("read", &Table::read, py::arg("key"))
      .def("stats", &Table::stats)
      .def_property_readonly("stride", &Table::stride);

  m.def("round_significant", &surrogate::round_significant, py::arg("x"), py::arg("digits"));
  m.def(
      "make_key",
      [](const std::vector<double>& in, int digits) {
        const auto key = surrogate::make_key(cell_input(in), digits);
        return to_bytes(key);
      },
      py::arg("inputs"), py::arg("digits"));
  m.def(
      "kernel",
      [](const std::vector<double>& in) {
        const auto out = surrogate::expensive_kernel(cell_input(in));
        return std::vector<double>(out.begin(), out.end());
      },
      py::arg("inputs"));

  m.def(
      "run_benchmark",
      [](const std::string& protocol, const std::string& backend, std::size_t participants,
         std::uint64_t buckets, const std::string& workload, const std::string& dist,
         std::uint64_t ops, double read_ratio, double zipf_skew, std::uint64_t zipf_range,
         std::uint64_t seed) {
        const DhtConfig cfg{parse_protocol(protocol), 80, 104, buckets};
        workload::WorkloadSpec spec;
        spec.plan = workload::parse_plan(workload);
        spec.distribution = workload::parse_distribution(dist);
        spec.ops = ops;
        spec.read_ratio = read_ratio;
        spec.zipf_skew = zipf_skew;
        spec.zipf_range = zipf_range;
        spec.seed = seed;
        spec.validate();
        std::vector<bench::BenchResult> res;
        {
          py::gil_scoped_release nogil;
          auto u = rma::create_universe({participants, bench::window_size_for(cfg, participants),
                                         rma::parse_backend(backend)});
          res = bench::run_benchmark(*u, cfg, spec);
        }
        py::list out;
        for (const auto& r : res) out.append(result_dict(r));
        return out;
      },
      py::arg("protocol") = "lockfree", py::arg("backend") = "threads",
      py::arg("participants") = 2, py::arg("buckets") = 1u << 14, py::arg("workload") = "wtr",
      py::arg("dist") = "uniform", py::arg("ops") = 10000, py::arg("read_ratio") = 0.95,
      py::arg("zipf_skew") = 0.99, py::arg("zipf_range") = 712500, py::arg("seed") = 0);

  m.def(
      "run_demo",
      [](std::size_t participants, std::size_t grid_width, std::size_t steps, int digits,
         long kernel_cost_us, bool use_cache, bool inject, std::uint64_t buckets,
         const std::string& protocol) {
        surrogate::DemoConfig cfg;
        cfg.grid_width = grid_width;
        cfg.steps = steps;
        cfg.digits = digits;
        cfg.kernel_cost = std::chrono::microseconds(kernel_cost_us);
        cfg.use_cache = use_cache;
        cfg.inject = inject;
        cfg.buckets = buckets;
        cfg.protocol = parse_protocol(protocol);
        surrogate::DemoSummary s;
        {
          py::gil_scoped_release nogil;
          rma::ThreadUniverse u(participants, surrogate::demo_window_size(cfg, participants));
          s = surrogate::run_demo(u, cfg);
        }
        std::vector<double> rates;
        for (const auto& st : s.steps) rates.push_back(st.hit_rate());
        py::dict d;
        d["seconds"] = s.seconds;
        d["hits"] = s.hits;
        d["kernel_calls"] = s.kernel_calls;
        d["hit_rate"] = s.hit_rate();
        d["step_hit_rates"] = rates;
        return d;
      },
      py::arg("participants") = 2, py::arg("grid_width") = 256, py::arg("steps") = 10,
      py::arg("digits") = 4, py::arg("kernel_cost_us") = 0, py::arg("use_cache") = true,
      py::arg("inject") = true, py::arg("buckets") = 1u << 14, py::arg("protocol") = "lockfree");
}
