#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "shardjoin/common.hpp"

namespace shardjoin {

// Event vocabulary recorded by the node runtime. Queue pushes and pops are
// recorded under the queue lock, so trace order is queue order.
namespace ev {
inline constexpr const char* kNodeStart = "NODE_START";
inline constexpr const char* kPhase = "PHASE";
inline constexpr const char* kSchedule = "SCHEDULE";
inline constexpr const char* kLocalReady = "LOCAL_READY";
inline constexpr const char* kAccept = "ACCEPT";
inline constexpr const char* kPushJoin = "PUSH_JOIN";
inline constexpr const char* kPopJoin = "POP_JOIN";
inline constexpr const char* kJoinDone = "JOIN_DONE";
inline constexpr const char* kPushJoinExit = "PUSH_JOIN_EXIT";
inline constexpr const char* kPopJoinExit = "POP_JOIN_EXIT";
inline constexpr const char* kMerge = "MERGE";
inline constexpr const char* kBarrierArrive = "BARRIER_ARRIVE";
inline constexpr const char* kBarrierPass = "BARRIER_PASS";
inline constexpr const char* kPushResultReady = "PUSH_RESULT_READY";
inline constexpr const char* kPopResultReady = "POP_RESULT_READY";
inline constexpr const char* kPushPartitionReady = "PUSH_PARTITION_READY";
inline constexpr const char* kPopPartitionReady = "POP_PARTITION_READY";
inline constexpr const char* kSendPartitionDone = "SEND_PARTITION_DONE";
inline constexpr const char* kSendResultDone = "SEND_RESULT_DONE";
inline constexpr const char* kPushRecvData = "PUSH_RECV_DATA";
inline constexpr const char* kPopRecvData = "POP_RECV_DATA";
inline constexpr const char* kHtfOpen = "HTF_OPEN";
inline constexpr const char* kHtfFree = "HTF_FREE";
inline constexpr const char* kPartitionDone = "PARTITION_DONE";
inline constexpr const char* kResultDone = "RESULT_DONE";
inline constexpr const char* kPushExitQs = "PUSH_EXIT_QS";
inline constexpr const char* kPushExitQr = "PUSH_EXIT_QR";
inline constexpr const char* kPushExitQc = "PUSH_EXIT_QC";
inline constexpr const char* kPopExit = "POP_EXIT";
inline constexpr const char* kFinalize = "FINALIZE";
inline constexpr const char* kThreadExit = "THREAD_EXIT";
} // namespace ev

namespace role {
inline constexpr const char* kNode = "node";
inline constexpr const char* kScheduler = "scheduler";
inline constexpr const char* kListener = "listener";
inline constexpr const char* kCompute = "compute";
inline constexpr const char* kSend = "send";
inline constexpr const char* kRecv = "recv";
} // namespace role

struct TraceEvent {
  std::uint64_t seq = 0;
  NodeId node = 0;
  std::uint32_t thread = 0;
  std::string role;
  std::string event;
  std::uint64_t t_ns = 0;
  std::vector<std::pair<std::string, std::int64_t>> attrs;

  // Value of a named attribute, or `fallback`.
  std::int64_t attr(const std::string& name, std::int64_t fallback = -1) const;
};

// Append-only event log shared by every node of a run.
class Trace {
 public:
  explicit Trace(bool enabled = true) : enabled_(enabled), epoch_(std::chrono::steady_clock::now()) {}

  bool enabled() const { return enabled_; }
  void record(NodeId node, std::uint32_t thread, const char* role, const char* event,
              std::vector<std::pair<std::string, std::int64_t>> attrs = {});
  std::vector<TraceEvent> events() const;
  std::size_t size() const;

  void write_jsonl(std::ostream& out) const;

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point epoch_;
  mutable std::mutex mutex_;
  std::vector<TraceEvent> events_;
};

std::vector<TraceEvent> read_trace_jsonl(std::istream& in);
void write_trace_jsonl(const std::vector<TraceEvent>& events, std::ostream& out);

// Checks every per-node ordering of the barrier-free protocol. Returns one
// message per violation; empty means the trace is well formed.
std::vector<std::string> check_trace(const std::vector<TraceEvent>& events);

} // namespace shardjoin
