#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "shardjoin/harness.hpp"
#include "shardjoin/join.hpp"
#include "shardjoin/metrics.hpp"
#include "shardjoin/schedule.hpp"

namespace py = pybind11;
using namespace shardjoin;

namespace {

py::dict report_dict(const LoadReport& r) {
  py::dict d;
  d["node_id"] = r.node_id;
  d["compute_time_ns"] = r.compute_time_ns;
  d["send_time_ns"] = r.send_time_ns;
  d["recv_time_ns"] = r.recv_time_ns;
  d["join_span_ns"] = r.join_span_ns;
  d["bytes_sent"] = r.bytes_sent;
  d["bytes_received"] = r.bytes_received;
  d["payload_bytes_sent"] = r.payload_bytes_sent;
  d["payload_bytes_received"] = r.payload_bytes_received;
  d["pool_block_ns"] = r.pool_block_ns;
  d["joins"] = r.joins;
  d["result_entries"] = r.result_entries;
  d["gain"] = intra_node_gain(r);
  return d;
}

// Runs the first point of a manifest (config-file text) in the simulator.
py::dict simulate_manifest(const std::string& text, std::uint64_t seed, double jitter) {
  const auto m = manifest_from_kv(KeyValueFile::parse(text));
  const auto point = expand_sweep(m).front();
  SimOptions o;
  o.engine = m.engine;
  o.seed = seed;
  o.jitter_probability = jitter;
  SimResult res;
  std::vector<ResultEntry> got;
  std::vector<ResultEntry> want;
  {
    py::gil_scoped_release release;
    const auto data = generate_cluster_data(point.config, point.gen_r, point.gen_s);
    res = run_sim(point.config, data.r, data.s, o);
    if (res.ok()) {
      got = res.sink_entries(point.config.sink_id);
    }
    want = reference_join(data.r, data.s, point.config.predicate,
                          ResultLayout::for_config(point.config));
  }
  py::dict d;
  d["ok"] = res.ok();
  d["error"] = res.error;
  d["deadlock"] = res.deadlock;
  d["violations"] = res.violations;
  d["entries"] = got.size();
  d["checksum"] = result_checksum(got);
  d["reference_entries"] = want.size();
  d["reference_checksum"] = result_checksum(want);
  d["matches_reference"] = res.ok() && got == want;
  d["cluster_join_span_ns"] = res.metrics.cluster_join_span_ns;
  py::list nodes;
  for (const auto& r : res.metrics.nodes) {
    nodes.append(report_dict(r));
  }
  d["nodes"] = nodes;
  return d;
}

std::vector<Key> generate_keys(const std::string& table, NodeId node, std::uint64_t tuples,
                               Key domain, std::uint64_t seed, const std::string& distribution,
                               std::uint32_t tuple_size) {
  if (table != "R" && table != "S") {
    throw ConfigError("table must be R or S");
  }
  GenSpec g;
  g.seed = seed;
  g.tuples = tuples;
  g.domain = domain;
  g.tuple_size = tuple_size;
  parse_distribution(distribution, g);
  g.validate();
  const auto p = generate_partition(g, table == "R" ? TableId::kR : TableId::kS, node);
  std::vector<Key> keys(p.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    keys[i] = p.tuples.key(i);
  }
  return keys;
}

} // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Barrier-free distributed hash join: simulator and helpers";

  // Deliberately leaked: the type must outlive module teardown.
  static const auto* error_type = new py::object(py::exception<Error>(mod, "ShardjoinError"));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) {
        std::rethrow_exception(p);
      }
    } catch (const Error& e) {
      const auto& type = *error_type;
      py::object inst = type(e.what());
      inst.attr("category") = category_name(e.category());
      PyErr_SetObject(type.ptr(), inst.ptr());
    }
  });

  mod.def("hash_key", &hash_key, py::arg("key"), py::arg("num_buckets"));
  mod.def(
      "ring_peers",
      [](NodeId node, std::uint32_t k, std::uint32_t n) {
        const auto p = ring_peers(node, k, n);
        return py::make_tuple(p.sender, p.receiver);
      },
      py::arg("node"), py::arg("step"), py::arg("num_nodes"),
      "(sender, receiver) of `node` at shuffle step `step`");
  mod.def("expected_send_volume", &expected_send_volume, py::arg("relation_size"),
          py::arg("num_nodes"));
  mod.def("speedup", &speedup, py::arg("span_1"), py::arg("span_n"));
  mod.def(
      "exit_code_for",
      [](const std::string& category) {
        for (auto c : {ErrorCategory::kConfig, ErrorCategory::kTransport, ErrorCategory::kProtocol,
                       ErrorCategory::kFormat, ErrorCategory::kIo, ErrorCategory::kTimeout,
                       ErrorCategory::kInternal}) {
          if (category == category_name(c)) {
            return exit_code_for(c);
          }
        }
        throw ConfigError("unknown error category '" + category + "'");
      },
      py::arg("category"));
  mod.def("generate_keys", &generate_keys, py::arg("table"), py::arg("node"), py::arg("tuples"),
          py::arg("domain"), py::arg("seed") = 0, py::arg("distribution") = "uniform",
          py::arg("tuple_size") = 16,
          "Keys of one generated partition; payload bytes (tuple_size) shift the random stream");
  mod.def("simulate", &simulate_manifest, py::arg("manifest"), py::arg("seed") = 0,
          py::arg("jitter") = 0.0,
          "Run a manifest's first sweep point in-process and compare with a reference join");
}
