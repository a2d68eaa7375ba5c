#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "shardjoin/node.hpp"

namespace shardjoin {

// Magic of the baseline's barrier messages, which share the data listener.
// Arrival: "SJB1" | generation u32 | node u32. Release: one kAckByte on the
// same connection.
constexpr std::array<std::byte, 4> kBarrierMagic = {std::byte{'S'}, std::byte{'J'},
                                                    std::byte{'B'}, std::byte{'1'}};
constexpr std::size_t kBarrierMessageSize = 12;

struct BaselineOptions {
  Transport* transport = nullptr;
  Trace* trace = nullptr;
  Progress* progress = nullptr;
  // Honors send_delay_us and compute_delay_us.
  EngineHooks hooks;
  std::chrono::milliseconds barrier_timeout{60000};
};

// Phase-synchronized ring join: local join, then for k = 1..n-1 send R_i to
// (i+k)%n, join what arrives from (i-k+n)%n with S_i, and wait on a
// cluster-wide barrier run by the sink. Broadcast mode only.
class BaselineNode {
 public:
  BaselineNode(ClusterConfig config, NodeId id, const Partition& r, const Partition& s,
               BaselineOptions options);
  ~BaselineNode();
  BaselineNode(const BaselineNode&) = delete;
  BaselineNode& operator=(const BaselineNode&) = delete;

  void prepare();
  NodeOutcome run();
  void abort(const std::string& reason);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

NodeOutcome run_baseline_node(const ClusterConfig& config, NodeId id, const Partition& r,
                              const Partition& s, const BaselineOptions& options);

} // namespace shardjoin
