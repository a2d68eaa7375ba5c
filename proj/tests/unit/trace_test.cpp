#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <sstream>

#include "shardjoin/sim.hpp"
#include "support/oracle.hpp"

using namespace shardjoin;
using Events = std::vector<TraceEvent>;
using Match = std::function<bool(const TraceEvent&)>;

namespace {

// One clean three-node trace shared by every mutation below.
const Events& clean_trace() {
  static const Events trace = [] {
    const auto c = shardjoin::testing::sim_config(3);
    const auto w = shardjoin::testing::make_workload(3, 3, 500, 1000);
    SimOptions o;
    o.watchdog = std::chrono::milliseconds(10000);
    const auto res = run_sim(c, w.r, w.s, o);
    EXPECT_TRUE(res.ok()) << res.error;
    return res.trace;
  }();
  return trace;
}

Events sorted(Events e) {
  std::stable_sort(e.begin(), e.end(), [](auto& a, auto& b) { return a.seq < b.seq; });
  return e;
}

void renumber(Events& e) {
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i].seq = i;
  }
}

Match is(NodeId node, const std::string& event, const std::string& role = "") {
  return [=](const TraceEvent& e) {
    return e.node == node && e.event == event && (role.empty() || e.role == role);
  };
}

// Moves the first event matching `what` to just before the first matching `anchor`.
Events move_before(const Events& in, const Match& what, const Match& anchor) {
  auto e = sorted(in);
  auto it = std::find_if(e.begin(), e.end(), what);
  EXPECT_NE(it, e.end());
  const auto moved = *it;
  e.erase(it);
  auto at = std::find_if(e.begin(), e.end(), anchor);
  EXPECT_NE(at, e.end());
  e.insert(at, moved);
  renumber(e);
  return e;
}

Events drop_first(const Events& in, const Match& what) {
  auto e = sorted(in);
  auto it = std::find_if(e.begin(), e.end(), what);
  EXPECT_NE(it, e.end());
  e.erase(it);
  renumber(e);
  return e;
}

Events duplicate_first(const Events& in, const Match& what) {
  auto e = sorted(in);
  auto it = std::find_if(e.begin(), e.end(), what);
  EXPECT_NE(it, e.end());
  e.insert(it + 1, *it);
  renumber(e);
  return e;
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(),
                     [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

} // namespace

TEST(TraceCheck, CleanRunHasNoViolations) {
  EXPECT_EQ(check_trace(clean_trace()), std::vector<std::string>{});
}

TEST(TraceCheck, EmptyTrace) {
  EXPECT_EQ(check_trace({}), std::vector<std::string>{"empty trace"});
}

TEST(TraceCheck, ResultReadyBeforeMerge) {
  const auto t = move_before(clean_trace(), is(1, ev::kPushResultReady), is(1, ev::kMerge));
  const auto v = check_trace(t);
  EXPECT_TRUE(mentions(v, "node 1: RESULT_READY pushed before compute thread")) << v.size();
}

TEST(TraceCheck, ResultReadyBeforeBarrier) {
  const auto t =
      move_before(clean_trace(), is(2, ev::kPushResultReady), is(2, ev::kBarrierArrive));
  EXPECT_FALSE(check_trace(t).empty());
}

TEST(TraceCheck, JoinExitBeforeLastPartition) {
  const auto t =
      move_before(clean_trace(), is(1, ev::kPushJoinExit), is(1, ev::kPartitionDone));
  EXPECT_TRUE(mentions(check_trace(t), "JOIN_EXIT pushed before the last partition arrived"));
}

TEST(TraceCheck, JoinAfterJoinExit) {
  auto e = sorted(clean_trace());
  auto join = *std::find_if(e.begin(), e.end(), is(0, ev::kPushJoin));
  auto exit_it = std::find_if(e.begin(), e.end(), is(0, ev::kPushJoinExit));
  e.insert(exit_it + 1, join);
  renumber(e);
  EXPECT_TRUE(mentions(check_trace(e), "JOIN pushed after JOIN_EXIT"));
}

TEST(TraceCheck, SinkReceiveExitBeforeResults) {
  const auto t = move_before(clean_trace(),
                             [](const TraceEvent& e) {
                               return e.node == 0 && e.event == ev::kPushExitQr &&
                                      e.role == role::kRecv;
                             },
                             is(0, ev::kResultDone));
  EXPECT_TRUE(mentions(check_trace(t), "receive EXIT pushed before every result arrived"));
}

TEST(TraceCheck, DuplicateSinkComputeExit) {
  const auto t = duplicate_first(clean_trace(), is(0, ev::kPushExitQc));
  EXPECT_TRUE(mentions(check_trace(t), "sink compute EXIT pushed 2 times"));
}

TEST(TraceCheck, MissingFinalize) {
  const auto t = drop_first(clean_trace(), is(0, ev::kFinalize));
  EXPECT_TRUE(mentions(check_trace(t), "sink never finalized"));
}

TEST(TraceCheck, NonSinkComputeExit) {
  auto e = sorted(clean_trace());
  auto qc = *std::find_if(e.begin(), e.end(), is(0, ev::kPushExitQc));
  qc.node = 2;
  e.push_back(qc);
  renumber(e);
  EXPECT_TRUE(mentions(check_trace(e), "compute EXIT on a non-sink node"));
}

TEST(TraceCheck, FrameNeverFreed) {
  const auto t = drop_first(clean_trace(), is(1, ev::kHtfFree));
  EXPECT_TRUE(mentions(check_trace(t), "never freed"));
}

TEST(TraceCheck, JoinOnFreedFrame) {
  auto e = sorted(clean_trace());
  auto freed = std::find_if(e.begin(), e.end(), is(2, ev::kHtfFree));
  ASSERT_NE(freed, e.end());
  const auto htf = freed->attr("htf");
  auto pop = std::find_if(e.begin(), e.end(), [&](const TraceEvent& x) {
    return x.node == 2 && x.event == ev::kPopJoin && x.attr("htf") == htf;
  });
  ASSERT_NE(pop, e.end());
  auto late = *pop;
  e.insert(freed + 1, late);
  renumber(e);
  EXPECT_TRUE(mentions(check_trace(e), "after it was freed"));
}

TEST(TraceCheck, ClusterBarrierIsForeign) {
  auto e = sorted(clean_trace());
  TraceEvent b;
  b.node = 1;
  b.role = "baseline";
  b.event = "CLUSTER_BARRIER_ARRIVE";
  e.push_back(b);
  renumber(e);
  EXPECT_TRUE(mentions(check_trace(e), "cross-node barrier"));
}

TEST(TraceCheck, SendExitBeforeResultSent) {
  const auto t = move_before(clean_trace(), is(1, ev::kPushExitQs), is(1, ev::kSendResultDone));
  EXPECT_FALSE(check_trace(t).empty());
}

TEST(TraceCheck, PhaseRegression) {
  auto e = sorted(clean_trace());
  auto last_phase = std::find_if(e.rbegin(), e.rend(), is(1, ev::kPhase));
  auto bad = *last_phase;
  bad.attrs = {{"phase", 1}};
  e.push_back(bad);
  renumber(e);
  EXPECT_TRUE(mentions(check_trace(e), "phase went from"));
}

TEST(TraceJsonl, RoundTrip) {
  std::stringstream ss;
  write_trace_jsonl(clean_trace(), ss);
  const auto back = read_trace_jsonl(ss);
  ASSERT_EQ(back.size(), clean_trace().size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].seq, clean_trace()[i].seq);
    EXPECT_EQ(back[i].event, clean_trace()[i].event);
    EXPECT_EQ(back[i].attrs, clean_trace()[i].attrs);
  }
  EXPECT_TRUE(check_trace(back).empty());
}
