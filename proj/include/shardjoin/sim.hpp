#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shardjoin/config.hpp"
#include "shardjoin/mem_transport.hpp"
#include "shardjoin/metrics.hpp"
#include "shardjoin/node.hpp"
#include "shardjoin/trace.hpp"

namespace shardjoin {

enum class Engine { kBarrierFree, kBaseline };

std::string to_string(Engine e);
Engine parse_engine(const std::string& text);

struct SimOptions {
  Engine engine = Engine::kBarrierFree;
  // Seeds the interleaving perturbation. Jitter is off when probability is 0.
  std::uint64_t seed = 0;
  double jitter_probability = 0.0;
  // A run that makes no progress for this long is declared deadlocked.
  std::chrono::milliseconds watchdog{60000};
  std::size_t pipe_capacity = MemTransport::kDefaultPipeCapacity;
  bool trace = true;
  // Applied to every node, then overridden per node where set.
  EngineHooks hooks;
  std::vector<std::optional<EngineHooks>> node_hooks;
  // Trace dump target on deadlock or failure; empty disables.
  std::string dump_path;
};

struct SimResult {
  std::vector<NodeOutcome> outcomes; // by node id; empty on failure
  ClusterMetrics metrics;
  std::vector<TraceEvent> trace;
  std::vector<std::string> violations;
  bool deadlock = false;
  std::string error; // first failure, empty on success

  bool ok() const { return error.empty() && !deadlock && violations.empty(); }
  // The sink's collected cluster result, sorted.
  std::vector<ResultEntry> sink_entries(NodeId sink) const;
  // Union of every node's local result, sorted.
  std::vector<ResultEntry> union_entries() const;
};

// Runs every node of `config` in this process over in-memory pipes.
// r_parts[i], s_parts[i] belong to node i.
SimResult run_sim(const ClusterConfig& config, const std::vector<Partition>& r_parts,
                  const std::vector<Partition>& s_parts, const SimOptions& options);

} // namespace shardjoin
