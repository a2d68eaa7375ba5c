#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "shardjoin/config.hpp"
#include "shardjoin/metrics.hpp"
#include "shardjoin/progress.hpp"
#include "shardjoin/relation.hpp"
#include "shardjoin/result.hpp"
#include "shardjoin/trace.hpp"
#include "shardjoin/transport.hpp"

namespace shardjoin {

enum class NodePhase : int { kLoading = 0, kShuffling, kJoining, kResultTransfer, kDone };

const char* phase_name(NodePhase p);

// Test and fault-injection knobs. All default to off.
struct EngineHooks {
  std::uint32_t compute_delay_us = 0;     // sleep per JOIN
  std::uint32_t materialize_delay_us = 0; // sleep per received bucket
  std::uint32_t send_delay_us = 0;        // sleep before each partition transfer
  // Mutation: compute threads skip the local barrier on JOIN_EXIT, and
  // threads other than 0 wait merge_delay_us before merging.
  bool skip_local_barrier = false;
  std::uint32_t merge_delay_us = 0;
  // Mutation: never join this bucket index (local or received).
  std::int64_t drop_bucket = -1;
};

struct NodeOptions {
  Transport* transport = nullptr;
  Trace* trace = nullptr;
  Progress* progress = nullptr;
  EngineHooks hooks;
};

struct NodeOutcome {
  NodeId node_id = 0;
  bool sink = false;
  LoadReport report;
  ResultLayout layout;
  std::vector<ResultBlock> local_results;
  // Sink only: result blocks per producing node, own results included.
  std::vector<std::vector<ResultBlock>> collected;

  // Everything the node holds at the end: the collected cluster result at
  // the sink, the local result elsewhere. Sorted.
  std::vector<ResultEntry> entries() const;
  std::uint64_t entry_count() const;
};

// One node of the barrier-free engine: a listener, n_send senders, n_recv
// receivers and n_compute compute threads coordinated only through Q_c,
// Q_s, Q_r, the shuffle counters and an intra-node compute barrier.
class NodeEngine {
 public:
  NodeEngine(ClusterConfig config, NodeId id, const Partition& r, const Partition& s,
             NodeOptions options);
  ~NodeEngine();
  NodeEngine(const NodeEngine&) = delete;
  NodeEngine& operator=(const NodeEngine&) = delete;

  // Builds the local hash tables and binds the listener. Called by run()
  // if the caller has not done so; a simulator calls it on every node
  // first so no sender ever meets an unbound peer.
  void prepare();
  // Runs the join to completion. Throws Error carrying the first failure.
  NodeOutcome run();
  // Stops every thread of this node. Safe from any thread, idempotent.
  void abort(const std::string& reason);
  NodePhase phase() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

NodeOutcome run_node(const ClusterConfig& config, NodeId id, const Partition& r,
                     const Partition& s, const NodeOptions& options);

} // namespace shardjoin
