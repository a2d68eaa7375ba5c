#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shardjoin/config.hpp"
#include "shardjoin/metrics.hpp"
#include "shardjoin/node.hpp"
#include "shardjoin/sim.hpp"
#include "shardjoin/workload.hpp"

namespace shardjoin {

// Process exit codes of the CLI. 1 is reserved for failed verification.
int exit_code_for(ErrorCategory c);
constexpr int kExitVerifyFailed = 1;

enum class SweepAxis { kNone, kNodes, kTableSize, kComputeThreads };

std::string to_string(SweepAxis a);

// A run manifest uses the config-file grammar plus:
//   engine          barrier-free | barrier-baseline
//   num_nodes       cluster size when no `node` lines are given
//   host, base_port endpoints of generated node lists (node i at base_port + i)
//   seed, distribution          generator settings (see GenSpec)
//   total_tuples_r/_s           split evenly over the nodes, overriding
//                               partition_size_r/_s
//   sweep           "<axis>: v1,v2,..." with axis nodes | table_size | compute_threads
//   output_dir      where orchestrate writes runs and summary.csv
//   run_timeout_s   per sweep point, local launch
//   verify          on | off: orchestrate checks the sink result against a
//                   reference join
struct RunManifest {
  ClusterConfig config;
  GenSpec gen;
  Engine engine = Engine::kBarrierFree;
  std::string host = "127.0.0.1";
  std::uint16_t base_port = 9100;
  std::uint64_t total_tuples_r = 0;
  std::uint64_t total_tuples_s = 0;
  SweepAxis sweep = SweepAxis::kNone;
  std::vector<std::uint64_t> sweep_values;
  std::string output_dir = "shardjoin-out";
  std::chrono::seconds run_timeout{600};
  bool verify = false;
};

RunManifest manifest_from_kv(const KeyValueFile& kv);
RunManifest load_manifest(const std::string& path);

// One concrete run: the manifest with the sweep value applied.
struct RunPoint {
  std::uint64_t sweep_value = 0;
  ClusterConfig config;
  GenSpec gen_r;
  GenSpec gen_s;
};

std::vector<RunPoint> expand_sweep(const RunManifest& m);

struct GeneratedData {
  std::vector<Partition> r;
  std::vector<Partition> s;
};

GeneratedData generate_cluster_data(const ClusterConfig& config, const GenSpec& gen_r,
                                    const GenSpec& gen_s);
// Writes R_i.sjpt and S_i.sjpt for every node, creating `dir`.
void write_cluster_data(const GeneratedData& data, const std::string& dir);

// Order-independent 64-bit digest of a result multiset (keys and lineage).
std::uint64_t result_checksum(std::span<const ResultEntry> entries);

// Per-run metrics file: one row per node plus a `summary` row carrying the
// cluster span and the speedup (when known).
void write_run_metrics_csv(std::ostream& out, const ClusterMetrics& metrics,
                           std::optional<double> speedup);

struct SummaryRow {
  std::uint64_t sweep_value = 0;
  std::optional<NodeId> node; // empty on the cluster row
  std::uint64_t compute_ns = 0;
  std::uint64_t send_ns = 0;
  std::uint64_t recv_ns = 0;
  std::uint64_t span_ns = 0;
  std::optional<double> gain;
  std::optional<double> speedup;
  bool failed = false;
};

// Columns: sweep_value,node,compute_ns,send_ns,recv_ns,span_ns,gain,speedup,status
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

// Rows for one finished sweep point. Speedup is span_1 / span of this point,
// where span_1 is the cluster span of the first sweep point.
std::vector<SummaryRow> summarize_point(std::uint64_t sweep_value, const ClusterMetrics& m,
                                        std::optional<std::uint64_t> baseline_span);

// Launches every sweep point as N local `node` processes of `self_exe`.
// Returns 0 when every run succeeded (and verified, if requested).
int orchestrate(const RunManifest& m, const std::string& self_exe, std::ostream& log);

struct SimulateOptions {
  std::uint32_t seeds = 100;
  std::string inject; // "", "no-barrier", "drop-bucket"
  double jitter = 0.05;
  std::chrono::milliseconds watchdog{60000};
  std::string dump_dir;
};

struct SimulateReport {
  std::uint32_t runs = 0;
  std::uint32_t failures = 0;
  std::uint32_t deadlocks = 0;
  std::uint32_t violations = 0;
  std::uint32_t mismatches = 0;
};

// Runs the manifest's cluster in the simulator once per seed, checking
// every trace and comparing the sink result with a reference join.
SimulateReport simulate(const RunManifest& m, const SimulateOptions& options, std::ostream& log);

} // namespace shardjoin
