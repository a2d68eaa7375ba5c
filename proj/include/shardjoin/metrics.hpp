#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "shardjoin/common.hpp"

namespace shardjoin {

// Per-node timing ledger. Loads are busy time summed over the threads of a
// role, measured from a record's pop to the next pop call, so queue waits
// are excluded and blocking inside a handler (pool, socket) is included.
struct LoadReport {
  NodeId node_id = 0;
  std::uint64_t compute_time_ns = 0;
  std::uint64_t send_time_ns = 0;
  std::uint64_t recv_time_ns = 0;
  // Shuffle start to JOIN_EXIT completion at this node.
  std::uint64_t join_span_ns = 0;
  // Partition shuffle bytes, framing included.
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  // Tuple bytes only.
  std::uint64_t payload_bytes_sent = 0;
  std::uint64_t payload_bytes_received = 0;
  // Result collection, reported separately from the join-phase loads.
  std::uint64_t result_send_ns = 0;
  std::uint64_t result_recv_ns = 0;
  std::uint64_t result_bytes_sent = 0;
  std::uint64_t result_bytes_received = 0;
  // Time receive threads spent blocked on an exhausted frame pool.
  std::uint64_t pool_block_ns = 0;
  std::uint64_t pool_blocked_acquires = 0;
  std::uint64_t pool_peak_bytes = 0;
  std::uint64_t joins = 0;
  std::uint64_t result_entries = 0;
  // Sink only: shuffle start to the moment every node's completion is known.
  std::uint64_t cluster_join_span_ns = 0;

  std::uint64_t total_load_ns() const { return compute_time_ns + send_time_ns + recv_time_ns; }
};

struct ClusterMetrics {
  std::vector<LoadReport> nodes;
  std::uint64_t cluster_join_span_ns = 0;

  std::uint64_t max_node_span_ns() const;
};

// (compute + send + recv) / join span. Throws std::domain_error on a zero span.
double intra_node_gain(const LoadReport& report);
// span_1 / span_n. Throws std::domain_error unless both are positive.
double speedup(double span_1, double span_n);
// Tuples one node ships under broadcast: |R| (1 - 1/n).
double expected_send_volume(double relation_size, std::uint32_t n);

const std::vector<std::string>& load_report_columns();
std::vector<std::string> load_report_row(const LoadReport& r);
void write_load_report_csv(std::ostream& out, const std::vector<LoadReport>& reports,
                           bool header = true);
std::vector<LoadReport> read_load_report_csv(std::istream& in);

} // namespace shardjoin
