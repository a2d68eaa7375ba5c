#include "shardjoin/trace.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

namespace shardjoin {

std::int64_t TraceEvent::attr(const std::string& name, std::int64_t fallback) const {
  for (const auto& [k, v] : attrs) {
    if (k == name) {
      return v;
    }
  }
  return fallback;
}

void Trace::record(NodeId node, std::uint32_t thread, const char* role, const char* event,
                   std::vector<std::pair<std::string, std::int64_t>> attrs) {
  if (!enabled_) {
    return;
  }
  const auto now = std::chrono::steady_clock::now();
  TraceEvent e;
  e.node = node;
  e.thread = thread;
  e.role = role;
  e.event = event;
  e.t_ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(now - epoch_).count());
  e.attrs = std::move(attrs);
  std::lock_guard lock(mutex_);
  e.seq = events_.size();
  events_.push_back(std::move(e));
}

std::vector<TraceEvent> Trace::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

std::size_t Trace::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

void Trace::write_jsonl(std::ostream& out) const {
  write_trace_jsonl(events(), out);
}

void write_trace_jsonl(const std::vector<TraceEvent>& events, std::ostream& out) {
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["node"] = e.node;
    j["thread"] = e.thread;
    j["role"] = e.role;
    j["event"] = e.event;
    j["t_ns"] = e.t_ns;
    for (const auto& [k, v] : e.attrs) {
      j[k] = v;
    }
    out << j.dump() << '\n';
  }
}

std::vector<TraceEvent> read_trace_jsonl(std::istream& in) {
  static const std::set<std::string> kCore = {"node", "thread", "role", "event", "t_ns"};
  std::vector<TraceEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
      TraceEvent e;
      e.seq = out.size();
      e.node = j.at("node").get<NodeId>();
      e.thread = j.at("thread").get<std::uint32_t>();
      e.role = j.at("role").get<std::string>();
      e.event = j.at("event").get<std::string>();
      e.t_ns = j.at("t_ns").get<std::uint64_t>();
      for (const auto& [k, v] : j.items()) {
        if (kCore.count(k) == 0) {
          e.attrs.emplace_back(k, v.get<std::int64_t>());
        }
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("trace line " + std::to_string(out.size() + 1) + ": " + ex.what());
    }
  }
  return out;
}

namespace {

struct NodeView {
  NodeId node = 0;
  std::vector<const TraceEvent*> events; // seq order
};

class NodeChecker {
 public:
  NodeChecker(const NodeView& view, std::vector<std::string>& out) : view_(view), out_(out) {}

  void run() {
    const TraceEvent* start = first(role::kNode, ev::kNodeStart);
    if (start == nullptr) {
      fail("NODE_START absent");
      return;
    }
    n_compute_ = start->attr("n_compute", 1);
    n_send_ = start->attr("n_send", 1);
    n_recv_ = start->attr("n_recv", 1);
    num_nodes_ = start->attr("num_nodes", 1);
    sink_ = start->attr("sink", 0) != 0;

    check_phases();
    check_schedule();
    check_join_exit();
    check_barrier_and_result_ready();
    check_send_path();
    check_receive_path();
    check_sink_exit();
    check_frames();
    check_thread_exits();
  }

 private:
  void fail(const std::string& msg) { out_.push_back("node " + std::to_string(view_.node) + ": " + msg); }

  bool is(const TraceEvent* e, const char* role, const char* event) const {
    return e->role == role && e->event == event;
  }

  const TraceEvent* first(const char* role, const char* event) const {
    for (auto* e : view_.events) {
      if (is(e, role, event)) {
        return e;
      }
    }
    return nullptr;
  }

  const TraceEvent* last(const char* role, const char* event) const {
    const TraceEvent* found = nullptr;
    for (auto* e : view_.events) {
      if (is(e, role, event)) {
        found = e;
      }
    }
    return found;
  }

  std::vector<const TraceEvent*> all(const char* role, const char* event) const {
    std::vector<const TraceEvent*> found;
    for (auto* e : view_.events) {
      if (is(e, role, event)) {
        found.push_back(e);
      }
    }
    return found;
  }

  void expect_count(const char* role, const char* event, std::int64_t n) {
    const auto got = static_cast<std::int64_t>(all(role, event).size());
    if (got != n) {
      fail(std::string(role) + " " + event + " count " + std::to_string(got) + ", expected " +
           std::to_string(n));
    }
  }

  // a strictly before b (both must exist).
  void expect_before(const TraceEvent* a, const TraceEvent* b, const std::string& what) {
    if (a != nullptr && b != nullptr && a->seq >= b->seq) {
      fail(what);
    }
  }

  void check_phases() {
    std::int64_t prev = -1;
    for (auto* e : all(role::kNode, ev::kPhase)) {
      const auto p = e->attr("phase");
      if (p <= prev) {
        fail("phase went from " + std::to_string(prev) + " to " + std::to_string(p));
      }
      prev = p;
    }
  }

  void check_schedule() {
    const TraceEvent* sched = first(role::kScheduler, ev::kSchedule);
    if (sched == nullptr) {
      fail("SCHEDULE absent");
      return;
    }
    for (auto* e : view_.events) {
      if (e->role == role::kListener || e->role == role::kRecv || e->role == role::kCompute ||
          e->role == role::kSend) {
        if (e->seq < sched->seq) {
          fail(e->role + " " + e->event + " precedes the shuffle schedule");
          return;
        }
      }
    }
    expect_count(role::kScheduler, ev::kPushPartitionReady, num_nodes_ - 1);
    if (first(role::kScheduler, ev::kLocalReady) == nullptr) {
      fail("LOCAL_READY absent");
    }
  }

  void check_join_exit() {
    auto pushes = all_any_role(ev::kPushJoinExit);
    auto pops = all(role::kCompute, ev::kPopJoinExit);
    if (static_cast<std::int64_t>(pushes.size()) != n_compute_) {
      fail("JOIN_EXIT pushed " + std::to_string(pushes.size()) + " times, expected " +
           std::to_string(n_compute_));
    }
    if (static_cast<std::int64_t>(pops.size()) != n_compute_) {
      fail("JOIN_EXIT popped " + std::to_string(pops.size()) + " times, expected " +
           std::to_string(n_compute_));
    }
    if (pushes.empty()) {
      return;
    }
    const auto first_push = pushes.front()->seq;
    for (auto* e : all_any_role(ev::kPushJoin)) {
      if (e->seq > first_push) {
        fail("JOIN pushed after JOIN_EXIT (htf " + std::to_string(e->attr("htf")) + " bucket " +
             std::to_string(e->attr("bucket")) + ")");
        break;
      }
    }
    if (!pops.empty()) {
      const auto first_pop = pops.front()->seq;
      for (auto* e : all(role::kCompute, ev::kPopJoin)) {
        if (e->seq > first_pop) {
          fail("JOIN popped after JOIN_EXIT");
          break;
        }
      }
    }
    const auto joins_pushed = all_any_role(ev::kPushJoin).size();
    const auto joins_popped = all(role::kCompute, ev::kPopJoin).size();
    if (joins_pushed != joins_popped) {
      fail("JOIN pushed " + std::to_string(joins_pushed) + " times but popped " +
           std::to_string(joins_popped));
    }
    expect_before(last(role::kScheduler, ev::kLocalReady), pushes.front(),
                  "JOIN_EXIT pushed before local buckets were scheduled");
    if (auto* done = last(role::kRecv, ev::kPartitionDone)) {
      expect_before(done, pushes.front(), "JOIN_EXIT pushed before the last partition arrived");
    }
  }

  std::vector<const TraceEvent*> all_any_role(const char* event) const {
    std::vector<const TraceEvent*> found;
    for (auto* e : view_.events) {
      if (e->event == event) {
        found.push_back(e);
      }
    }
    return found;
  }

  void check_barrier_and_result_ready() {
    auto rr = all(role::kCompute, ev::kPushResultReady);
    if (rr.size() != 1) {
      fail("RESULT_READY pushed " + std::to_string(rr.size()) + " times, expected 1");
      return;
    }
    if (rr.front()->thread != 0) {
      fail("RESULT_READY pushed by compute thread " + std::to_string(rr.front()->thread));
    }
    auto merges = all(role::kCompute, ev::kMerge);
    auto arrivals = all(role::kCompute, ev::kBarrierArrive);
    if (static_cast<std::int64_t>(merges.size()) != n_compute_) {
      fail("MERGE count " + std::to_string(merges.size()) + ", expected " + std::to_string(n_compute_));
    }
    for (auto* m : merges) {
      expect_before(m, rr.front(), "RESULT_READY pushed before compute thread " +
                                       std::to_string(m->thread) + " merged its local buffer");
    }
    if (static_cast<std::int64_t>(arrivals.size()) != n_compute_) {
      fail("local barrier arrivals " + std::to_string(arrivals.size()) + ", expected " +
           std::to_string(n_compute_));
    }
    for (auto* a : arrivals) {
      expect_before(a, rr.front(), "RESULT_READY pushed before the local barrier completed");
    }
    auto pops = all(role::kCompute, ev::kPopJoinExit);
    for (auto* p : pops) {
      expect_before(p, rr.front(), "RESULT_READY pushed before every JOIN_EXIT was consumed");
    }
  }

  void check_send_path() {
    expect_count(role::kSend, ev::kSendPartitionDone, num_nodes_ - 1);
    auto rr = all(role::kSend, ev::kPopResultReady);
    if (rr.size() != 1) {
      fail("send RESULT_READY popped " + std::to_string(rr.size()) + " times, expected 1");
      return;
    }
    expect_before(first(role::kCompute, ev::kPushResultReady), rr.front(),
                  "RESULT_READY popped before it was pushed");
    auto exit_qs = all(role::kSend, ev::kPushExitQs);
    const TraceEvent* first_exit = exit_qs.empty() ? nullptr : exit_qs.front();
    if (first_exit == nullptr) {
      fail("send EXIT never pushed (step 5a)");
    } else {
      expect_before(rr.front(), first_exit, "send EXIT pushed before RESULT_READY was handled");
    }
    auto done = all(role::kSend, ev::kSendResultDone);
    auto exit_qr = all(role::kSend, ev::kPushExitQr);
    if (sink_) {
      if (!done.empty()) {
        fail("sink transferred its own result");
      }
      if (!exit_qr.empty()) {
        fail("sink send thread pushed a receive EXIT");
      }
    } else {
      if (done.size() != 1) {
        fail("result transferred " + std::to_string(done.size()) + " times, expected 1");
      } else {
        expect_before(done.front(), first_exit, "send EXIT pushed before the result was sent");
      }
      if (exit_qr.size() != 1) {
        fail("receive EXIT from send path pushed " + std::to_string(exit_qr.size()) +
             " times, expected 1 (step 5b)");
      } else {
        expect_before(rr.front(), exit_qr.front(), "receive EXIT pushed before RESULT_READY");
      }
    }
    // Pending partition sends are drained before the senders stop.
    if (auto* last_part = last(role::kSend, ev::kSendPartitionDone)) {
      if (auto* last_exit = last(role::kSend, ev::kThreadExit)) {
        expect_before(last_part, last_exit, "send threads stopped with partition sends pending");
      }
    }
  }

  void check_receive_path() {
    expect_count(role::kRecv, ev::kPartitionDone, num_nodes_ - 1);
    auto recv_exit = flag_exits();
    if (sink_) {
      expect_count(role::kRecv, ev::kResultDone, num_nodes_ - 1);
      if (recv_exit.size() != 1) {
        fail("sink receive EXIT pushed " + std::to_string(recv_exit.size()) + " times, expected 1");
        return;
      }
      expect_before(last(role::kRecv, ev::kResultDone), recv_exit.front(),
                    "receive EXIT pushed before every result arrived");
      expect_before(first_any(ev::kPushJoinExit), recv_exit.front(),
                    "receive EXIT pushed before the shuffle completed");
    } else {
      expect_count(role::kRecv, ev::kResultDone, 0);
      if (!recv_exit.empty()) {
        fail("non-sink receive path pushed EXIT");
      }
    }
  }

  // The flag-driven receive EXIT comes from whichever thread completed the
  // last of (shuffle, results): a receiver, or the scheduler when its local
  // arrival finishes the shuffle.
  std::vector<const TraceEvent*> flag_exits() const {
    std::vector<const TraceEvent*> out;
    for (auto* e : view_.events) {
      if (e->event == ev::kPushExitQr && (e->role == role::kRecv || e->role == role::kScheduler)) {
        out.push_back(e);
      }
    }
    return out;
  }

  const TraceEvent* first_any(const char* event) const {
    for (auto* e : view_.events) {
      if (e->event == event) {
        return e;
      }
    }
    return nullptr;
  }

  void check_sink_exit() {
    auto exit_qc = all(role::kRecv, ev::kPushExitQc);
    auto pops = all(role::kCompute, ev::kPopExit);
    if (!sink_) {
      if (!exit_qc.empty() || !pops.empty()) {
        fail("compute EXIT on a non-sink node");
      }
      return;
    }
    if (exit_qc.size() != 1) {
      fail("sink compute EXIT pushed " + std::to_string(exit_qc.size()) + " times, expected 1");
    } else if (exit_qc.front()->thread != 0) {
      fail("sink compute EXIT pushed by receive thread " + std::to_string(exit_qc.front()->thread));
    }
    if (pops.empty()) {
      fail("sink compute EXIT absent");
      return;
    }
    if (pops.size() != 1 || pops.front()->thread != 0) {
      fail("sink compute EXIT consumed by the wrong thread or more than once");
    }
    if (!exit_qc.empty()) {
      expect_before(exit_qc.front(), pops.front(), "sink compute EXIT popped before pushed");
      expect_before(flag_exits().empty() ? nullptr : flag_exits().front(), exit_qc.front(),
                    "sink compute EXIT pushed before receive EXIT");
    }
    expect_before(first(role::kCompute, ev::kPushResultReady), pops.front(),
                  "sink compute EXIT arrived before RESULT_READY");
    auto* fin = first(role::kCompute, ev::kFinalize);
    if (fin == nullptr) {
      fail("sink never finalized its result");
      return;
    }
    expect_before(pops.front(), fin, "sink finalized before compute EXIT");
    // EXIT is the last record Q_c delivers. Peers released by the local
    // barrier may still log their exit path, but no join work or merge.
    for (auto* e : view_.events) {
      if (e->role == role::kCompute && e->seq > fin->seq &&
          (e->event.rfind("POP_", 0) == 0 || e->event == ev::kJoinDone ||
           e->event == ev::kMerge || e->event == ev::kBarrierArrive)) {
        fail("compute event " + e->event + " after sink finalize");
        break;
      }
    }
  }

  void check_frames() {
    std::map<std::int64_t, const TraceEvent*> opened;
    std::map<std::int64_t, std::vector<const TraceEvent*>> freed;
    for (auto* e : all(role::kRecv, ev::kHtfOpen)) {
      opened[e->attr("htf")] = e;
    }
    for (auto* e : all_any_role(ev::kHtfFree)) {
      freed[e->attr("htf")].push_back(e);
    }
    for (const auto& [htf, open] : opened) {
      auto it = freed.find(htf);
      if (it == freed.end()) {
        fail("htf " + std::to_string(htf) + " never freed");
        continue;
      }
      if (it->second.size() != 1) {
        fail("htf " + std::to_string(htf) + " freed " + std::to_string(it->second.size()) + " times");
      }
    }
    for (const auto& [htf, frees] : freed) {
      if (opened.count(htf) == 0) {
        fail("free of unknown htf " + std::to_string(htf));
      }
    }
    for (auto* e : all(role::kCompute, ev::kPopJoin)) {
      const auto htf = e->attr("htf");
      if (htf < 0) {
        continue;
      }
      auto it = freed.find(htf);
      if (it != freed.end() && !it->second.empty() && it->second.front()->seq < e->seq) {
        fail("JOIN on htf " + std::to_string(htf) + " after it was freed");
      }
    }
  }

  void check_thread_exits() {
    expect_count(role::kCompute, ev::kThreadExit, n_compute_);
    expect_count(role::kSend, ev::kThreadExit, n_send_);
    expect_count(role::kRecv, ev::kThreadExit, n_recv_);
    expect_count(role::kSend, ev::kPopExit, n_send_);
    expect_count(role::kRecv, ev::kPopExit, n_recv_);
    for (auto* e : view_.events) {
      if (e->event.find("CLUSTER_BARRIER") != std::string::npos) {
        fail("cross-node barrier in a barrier-free run");
        break;
      }
    }
  }

  const NodeView& view_;
  std::vector<std::string>& out_;
  std::int64_t n_compute_ = 1;
  std::int64_t n_send_ = 1;
  std::int64_t n_recv_ = 1;
  std::int64_t num_nodes_ = 1;
  bool sink_ = false;
};

} // namespace

std::vector<std::string> check_trace(const std::vector<TraceEvent>& events) {
  std::map<NodeId, NodeView> nodes;
  std::vector<const TraceEvent*> ordered;
  ordered.reserve(events.size());
  for (const auto& e : events) {
    ordered.push_back(&e);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const TraceEvent* a, const TraceEvent* b) { return a->seq < b->seq; });
  for (auto* e : ordered) {
    auto& v = nodes[e->node];
    v.node = e->node;
    v.events.push_back(e);
  }
  std::vector<std::string> out;
  if (nodes.empty()) {
    out.push_back("empty trace");
    return out;
  }
  for (const auto& [id, view] : nodes) {
    NodeChecker(view, out).run();
  }
  return out;
}

} // namespace shardjoin
