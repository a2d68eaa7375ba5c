#include "shardjoin/node.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <initializer_list>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_set>

#include "shardjoin/bounded_queue.hpp"
#include "shardjoin/events.hpp"
#include "shardjoin/htf.hpp"
#include "shardjoin/join.hpp"
#include "shardjoin/log.hpp"
#include "shardjoin/memory_pool.hpp"
#include "shardjoin/schedule.hpp"
#include "shardjoin/wire.hpp"

namespace shardjoin {

const char* phase_name(NodePhase p) {
  switch (p) {
    case NodePhase::kLoading: return "LOADING";
    case NodePhase::kShuffling: return "SHUFFLING";
    case NodePhase::kJoining: return "JOINING";
    case NodePhase::kResultTransfer: return "RESULT_TRANSFER";
    case NodePhase::kDone: return "DONE";
  }
  return "?";
}

std::vector<ResultEntry> NodeOutcome::entries() const {
  std::vector<ResultEntry> out;
  auto add = [&](const std::vector<ResultBlock>& blocks) {
    for (const auto& b : blocks) {
      auto e = decode_block(b, layout);
      out.insert(out.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
    }
  };
  if (sink) {
    for (const auto& c : collected) {
      add(c);
    }
  } else {
    add(local_results);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t NodeOutcome::entry_count() const {
  std::uint64_t n = 0;
  auto count = [&](const std::vector<ResultBlock>& blocks) {
    for (const auto& b : blocks) {
      n += b.entry_count();
    }
  };
  if (sink) {
    for (const auto& c : collected) {
      count(c);
    }
  } else {
    count(local_results);
  }
  return n;
}

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point from, Clock::time_point to) {
  return to <= from ? 0
                    : static_cast<std::uint64_t>(
                          std::chrono::duration_cast<std::chrono::nanoseconds>(to - from).count());
}

void sleep_us(std::uint32_t us) {
  if (us > 0) {
    std::this_thread::sleep_for(std::chrono::microseconds(us));
  }
}

// Rendezvous of the node's compute threads. Purely in-process; close()
// releases waiters during an abort.
class LocalBarrier {
 public:
  explicit LocalBarrier(std::uint32_t parties) : parties_(parties) {}

  void arrive_and_wait() {
    std::unique_lock lock(mutex_);
    if (closed_) {
      throw QueueClosed();
    }
    const auto gen = generation_;
    if (++arrived_ == parties_) {
      arrived_ = 0;
      ++generation_;
      cv_.notify_all();
      return;
    }
    cv_.wait(lock, [&] { return closed_ || generation_ != gen; });
    if (generation_ == gen) {
      throw QueueClosed();
    }
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  const std::uint32_t parties_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::uint32_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  bool closed_ = false;
};

using Attrs = std::initializer_list<std::pair<const char*, std::int64_t>>;

std::int64_t htf_attr(HtfIndex h) {
  return h == kLocalFrame ? -1 : static_cast<std::int64_t>(h);
}

} // namespace

struct NodeEngine::Impl {
  Impl(ClusterConfig c, NodeId node, const Partition& r, const Partition& s, NodeOptions o)
      : config(std::move(c)),
        id(node),
        n(config.num_nodes()),
        sink(config.is_sink(node)),
        hash_mode(config.join_mode == JoinMode::kHashDistribution),
        r_part(r),
        s_part(s),
        opts(o),
        tracing(o.trace != nullptr && o.trace->enabled()),
        layout(ResultLayout::for_config(config)),
        local_r(TableId::kR, config.num_buckets, config.tuple_size),
        local_s(TableId::kS, config.num_buckets, config.tuple_size),
        pool(config.effective_pool_capacity(), o.progress),
        qc(config.queue_capacity, o.progress),
        qs(config.queue_capacity, o.progress),
        qr(config.queue_capacity, o.progress),
        results(layout),
        barrier(config.n_compute) {
    config.validate();
    if (id >= n) {
      throw ConfigError("node id " + std::to_string(id) + " is not in the cluster");
    }
    if (opts.transport == nullptr) {
      throw ConfigError("node engine needs a transport");
    }
    if (r.tuple_size() != config.tuple_size || s.tuple_size() != config.tuple_size) {
      throw ConfigError("partition tuple size does not match the configured " +
                        std::to_string(config.tuple_size));
    }
    collected.resize(n);
    // A lone sink has no remote results to wait for.
    res_flag.store(n == 1);
    if (hash_mode) {
      owned_mask.assign(config.num_buckets, false);
      for (auto b : assign_buckets(id, n, config.num_buckets)) {
        owned_mask[b] = true;
      }
      bucket_states = std::make_unique<BucketState[]>(config.num_buckets);
    }
  }

  // ---- tracing ----

  void rec(std::uint32_t thread, const char* role, const char* event, Attrs attrs = {}) {
    if (!tracing) {
      return;
    }
    std::vector<std::pair<std::string, std::int64_t>> a;
    a.reserve(attrs.size());
    for (const auto& [k, v] : attrs) {
      a.emplace_back(k, v);
    }
    opts.trace->record(id, thread, role, event, std::move(a));
  }

  void set_phase(NodePhase p) {
    std::lock_guard lock(phase_mutex);
    if (static_cast<int>(p) <= phase.load()) {
      return;
    }
    phase.store(static_cast<int>(p));
    rec(0, role::kNode, ev::kPhase, {{"phase", static_cast<int>(p)}});
    log_debug("node {} phase {}", id, phase_name(p));
  }

  std::uint64_t since_start() const { return elapsed_ns(shuffle_start, Clock::now()); }

  // ---- failure handling ----

  void fail(ErrorCategory category, const std::string& message) {
    {
      std::lock_guard lock(error_mutex);
      if (!error) {
        error.emplace(category, message);
        log_error("node {}: {} error: {}", id, category_name(category), message);
      }
    }
    shutdown_everything();
  }

  void shutdown_everything() {
    if (aborted.exchange(true)) {
      return;
    }
    qc.close();
    qs.close();
    qr.close();
    pool.close();
    barrier.close();
    {
      std::lock_guard lock(listener_mutex);
      if (listener) {
        listener->close();
      }
    }
    std::lock_guard lock(live_mutex);
    for (auto* c : live) {
      c->shutdown();
    }
  }

  template <typename F>
  void guarded(const char* role, std::uint32_t tid, F&& body) {
    try {
      body();
    } catch (const QueueClosed&) {
      if (!aborted.load()) {
        fail(ErrorCategory::kInternal, std::string(role) + " thread hit a closed queue");
      }
    } catch (const Error& e) {
      fail(e.category(), std::string(role) + " thread " + std::to_string(tid) + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCategory::kInternal,
           std::string(role) + " thread " + std::to_string(tid) + ": " + e.what());
    }
  }

  // Keeps a connection reachable by an abort for as long as it is in use.
  class LiveConnection {
   public:
    LiveConnection(Impl& impl, Connection* c) : impl_(impl), c_(c) {
      std::lock_guard lock(impl_.live_mutex);
      if (impl_.aborted.load()) {
        c_->shutdown();
      }
      impl_.live.insert(c_);
    }
    ~LiveConnection() {
      std::lock_guard lock(impl_.live_mutex);
      impl_.live.erase(c_);
    }
    LiveConnection(const LiveConnection&) = delete;
    LiveConnection& operator=(const LiveConnection&) = delete;

   private:
    Impl& impl_;
    Connection* c_;
  };

  // ---- shuffle progress ----

  // One arrival per completed partition stream plus one for the local
  // tables. The arrival that completes the shuffle issues JOIN_EXIT.
  void arrive(std::uint32_t thread, const char* role) {
    const auto done = partitions_arrived.fetch_add(1, std::memory_order_acq_rel) + 1;
    if (done < n) {
      return;
    }
    set_phase(NodePhase::kJoining);
    for (std::uint32_t i = 0; i < config.n_compute; ++i) {
      qc.push(ComputeRecord::join_exit(),
              [&](const ComputeRecord&) { rec(thread, role, ev::kPushJoinExit); });
    }
    // Published only after the JOIN_EXITs are queued: the sink's Q_c EXIT,
    // which this flag gates, must land behind them.
    shuffle_flag.store(true);
    maybe_push_receive_exit(thread, role);
  }

  void maybe_push_receive_exit(std::uint32_t thread, const char* role) {
    // Sequentially consistent: each flag's writer stores, then reads the
    // other flag, and at least one of them must observe both set.
    if (!sink || !shuffle_flag.load() || !res_flag.load()) {
      return;
    }
    if (recv_exit_pushed.exchange(true)) {
      return;
    }
    qr.push(ReceiveRecord::exit(),
            [&](const ReceiveRecord&) { rec(thread, role, ev::kPushExitQr); });
  }

  // ---- compute ----

  struct Fragment {
    const TupleBlock* data;
    NodeId source;
  };

  struct BucketState {
    std::mutex mutex;
    std::vector<Fragment> r;
    std::vector<Fragment> s;
  };

  const HashTable& local_table(TableId t) const { return t == TableId::kR ? local_r : local_s; }

  std::uint64_t join_broadcast(const ComputeRecord& rc, LocalBuffer& lb) {
    if (rc.htf == kLocalFrame) {
      return join_bucket(local_r.bucket(rc.bucket), rc.bucket, local_s, config.predicate, id, lb);
    }
    auto frame = frames.get(rc.htf);
    if (frame->state(rc.bucket) != SlotState::kResident) {
      throw ProtocolError("JOIN on bucket " + std::to_string(rc.bucket) + " of frame " +
                          std::to_string(rc.htf) + " which is not resident");
    }
    const auto matches = join_bucket(frame->bucket(rc.bucket), rc.bucket, local_s,
                                     config.predicate, frame->source(), lb);
    frame->free_bucket(rc.bucket);
    if (frame->finish_bucket() && frame->free_frame()) {
      rec(compute_tid_hint, role::kCompute, ev::kHtfFree, {{"htf", rc.htf}});
    }
    return matches;
  }

  // Hash distribution: each owned bucket sees fragments of R and S from
  // every node. A fragment is joined against the opposite-table fragments
  // already processed, so every (R, S) fragment pair meets exactly once.
  std::uint64_t join_hashed(const ComputeRecord& rc, LocalBuffer& lb) {
    Fragment frag{};
    if (rc.htf == kLocalFrame) {
      frag = {&local_table(rc.table).bucket(rc.bucket), id};
    } else {
      auto frame = frames.get(rc.htf);
      if (frame->table() != rc.table) {
        throw ProtocolError("JOIN names table " + std::string(table_name(rc.table)) +
                            " but frame " + std::to_string(rc.htf) + " holds " +
                            table_name(frame->table()));
      }
      frag = {&frame->bucket(rc.bucket), frame->source()};
    }
    std::vector<Fragment> opposite;
    {
      auto& st = bucket_states[rc.bucket];
      std::lock_guard lock(st.mutex);
      if (rc.table == TableId::kR) {
        opposite = st.s;
        st.r.push_back(frag);
      } else {
        opposite = st.r;
        st.s.push_back(frag);
      }
    }
    std::uint64_t matches = 0;
    for (const auto& o : opposite) {
      if (rc.table == TableId::kR) {
        matches += join_blocks(*frag.data, *o.data, config.predicate, frag.source, lb);
      } else {
        matches += join_blocks(*o.data, *frag.data, config.predicate, o.source, lb);
      }
    }
    return matches;
  }

  // compute_tid_hint is only used to attribute HTF_FREE in the trace.
  static thread_local std::uint32_t compute_tid_hint;

  void compute_loop(std::uint32_t tid) {
    compute_tid_hint = tid;
    LocalBuffer lb(tid, config.page_size, layout, results);
    std::uint64_t busy = 0;
    std::uint64_t joins_done = 0;
    bool running = true;
    while (running) {
      auto rc = qc.pop([&](const ComputeRecord& r) {
        switch (r.type) {
          case ComputeEvent::kJoin:
            rec(tid, role::kCompute, ev::kPopJoin,
                {{"bucket", r.bucket}, {"htf", htf_attr(r.htf)}, {"table", static_cast<int>(r.table)}});
            break;
          case ComputeEvent::kJoinExit: rec(tid, role::kCompute, ev::kPopJoinExit); break;
          case ComputeEvent::kExit: rec(tid, role::kCompute, ev::kPopExit); break;
        }
      });
      const auto t0 = Clock::now();
      switch (rc.type) {
        case ComputeEvent::kJoin: {
          sleep_us(opts.hooks.compute_delay_us);
          const auto m = hash_mode ? join_hashed(rc, lb) : join_broadcast(rc, lb);
          ++joins_done;
          rec(tid, role::kCompute, ev::kJoinDone,
              {{"bucket", rc.bucket}, {"htf", htf_attr(rc.htf)}, {"matches", static_cast<std::int64_t>(m)}});
          break;
        }
        case ComputeEvent::kJoinExit: {
          if (opts.hooks.skip_local_barrier && tid != 0) {
            sleep_us(opts.hooks.merge_delay_us);
          }
          lb.flush();
          rec(tid, role::kCompute, ev::kMerge, {{"entries", static_cast<std::int64_t>(lb.produced())}});
          rec(tid, role::kCompute, ev::kBarrierArrive);
          if (!opts.hooks.skip_local_barrier) {
            barrier.arrive_and_wait();
          }
          rec(tid, role::kCompute, ev::kBarrierPass);
          if (tid == 0) {
            if (hash_mode) {
              for (const auto& f : frames.all()) {
                if (f->free_frame()) {
                  rec(tid, role::kCompute, ev::kHtfFree, {{"htf", f->index()}});
                }
              }
            }
            join_end_ns.store(since_start());
            set_phase(NodePhase::kResultTransfer);
            const auto& sink_ep = config.endpoint(config.sink_id);
            qs.push(SendRecord{CommEvent::kResultReady, config.sink_id, sink_ep, true},
                    [&](const SendRecord&) { rec(tid, role::kCompute, ev::kPushResultReady); });
            running = sink;
          } else {
            running = false;
          }
          break;
        }
        case ComputeEvent::kExit:
          // Only the sink's thread 0 is still listening by now.
          rec(tid, role::kCompute, ev::kFinalize,
              {{"entries", static_cast<std::int64_t>(results.entry_count())}});
          running = false;
          break;
      }
      busy += elapsed_ns(t0, Clock::now());
    }
    produced.fetch_add(lb.produced());
    compute_ns.fetch_add(busy);
    joins.fetch_add(joins_done);
    rec(tid, role::kCompute, ev::kThreadExit);
  }

  // ---- send ----

  std::unique_ptr<Connection> connect_with_retry(const Endpoint& ep) {
    auto delay = std::chrono::milliseconds(config.retry_initial_ms);
    const auto attempts = std::max<std::uint32_t>(1, config.retry_attempts);
    for (std::uint32_t attempt = 1;; ++attempt) {
      if (aborted.load()) {
        throw QueueClosed();
      }
      try {
        return opts.transport->connect(ep);
      } catch (const ConnectRefused& e) {
        if (attempt >= attempts) {
          throw TransportError("connect to " + ep.str() + " failed after " +
                               std::to_string(attempts) + " attempts: " + e.what());
        }
        log_debug("node {}: connect to {} refused, retrying in {} ms", id, ep.str(), delay.count());
      }
      const auto until = Clock::now() + delay;
      while (Clock::now() < until && !aborted.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
      delay *= 2;
    }
  }

  void send_loop(std::uint32_t tid) {
    std::uint64_t busy = 0;
    std::uint64_t result_busy = 0;
    StreamStats part_stats;
    StreamStats result_stats;
    bool running = true;
    while (running) {
      auto rs = qs.pop([&](const SendRecord& r) {
        switch (r.type) {
          case CommEvent::kPartitionReady:
            rec(tid, role::kSend, ev::kPopPartitionReady, {{"dest", r.dest}});
            break;
          case CommEvent::kResultReady: rec(tid, role::kSend, ev::kPopResultReady); break;
          case CommEvent::kExit: rec(tid, role::kSend, ev::kPopExit); break;
        }
      });
      const auto t0 = Clock::now();
      switch (rs.type) {
        case CommEvent::kPartitionReady: {
          sleep_us(opts.hooks.send_delay_us);
          auto sections = select_content(config.join_mode, rs.dest, local_r, local_s, config);
          auto conn = connect_with_retry(rs.dest_endpoint);
          LiveConnection live(*this, conn.get());
          const auto stats = send_partition_stream(*conn, sections, id);
          conn->close_write();
          part_stats += stats;
          rec(tid, role::kSend, ev::kSendPartitionDone,
              {{"dest", rs.dest}, {"payload", static_cast<std::int64_t>(stats.payload_bytes)}});
          busy += elapsed_ns(t0, Clock::now());
          break;
        }
        case CommEvent::kResultReady: {
          // The sink's own result needs no transfer; the record still
          // drives shutdown.
          if (!sink) {
            auto conn = connect_with_retry(rs.dest_endpoint);
            LiveConnection live(*this, conn.get());
            const auto blocks = results.blocks();
            result_stats += send_result_stream(*conn, id, layout, blocks);
            conn->close_write();
            rec(tid, role::kSend, ev::kSendResultDone);
          }
          qs.push(SendRecord::exit(), [&](const SendRecord&) { rec(tid, role::kSend, ev::kPushExitQs); });
          if (!sink) {
            qr.push(ReceiveRecord::exit(),
                    [&](const ReceiveRecord&) { rec(tid, role::kSend, ev::kPushExitQr); });
          }
          result_busy += elapsed_ns(t0, Clock::now());
          break;
        }
        case CommEvent::kExit:
          qs.push(std::move(rs));
          running = false;
          break;
      }
    }
    send_ns.fetch_add(busy);
    result_send_ns.fetch_add(result_busy);
    bytes_sent.fetch_add(part_stats.total());
    payload_sent.fetch_add(part_stats.payload_bytes);
    result_bytes_sent.fetch_add(result_stats.total());
    rec(tid, role::kSend, ev::kThreadExit);
  }

  // ---- receive ----

  StreamStats receive_partition(std::uint32_t tid, const ReceiveRecord& rr, Connection& conn) {
    const NodeId source = rr.preamble.sender;
    if (source >= n || source == id) {
      throw ProtocolError("partition stream from invalid sender " + std::to_string(source));
    }
    StreamStats total;
    const int sections = hash_mode ? 2 : 1;
    for (int i = 0; i < sections; ++i) {
      const auto p = i == 0 ? rr.preamble : read_preamble(conn);
      const auto expected = static_cast<std::uint32_t>(i == 0 ? TableId::kR : TableId::kS);
      if (p.kind != StreamKind::kPartition || p.sender != source || p.table_id != expected ||
          p.num_buckets != config.num_buckets) {
        throw ProtocolError("unexpected section from node " + std::to_string(source) +
                            " (table " + std::to_string(p.table_id) + ", " +
                            std::to_string(p.num_buckets) + " buckets)");
      }
      auto on_open = [&](HashTableFrame& f) {
        rec(tid, role::kRecv, ev::kHtfOpen,
            {{"htf", f.index()}, {"source", f.source()}, {"table", static_cast<int>(f.table())}});
      };
      auto on_bucket = [&](HashTableFrame& f, BucketIndex b) {
        sleep_us(opts.hooks.materialize_delay_us);
        if (opts.hooks.drop_bucket == static_cast<std::int64_t>(b)) {
          f.free_bucket(b);
          f.finish_bucket();
          return;
        }
        qc.push(ComputeRecord::join(b, f.index(), f.table()), [&](const ComputeRecord&) {
          rec(tid, role::kRecv, ev::kPushJoin,
              {{"bucket", b}, {"htf", f.index()}, {"table", static_cast<int>(f.table())}});
        });
      };
      const auto section = recv_partition_section(conn, p, pool, frames, on_bucket,
                                                  hash_mode ? owned_mask : std::vector<bool>{},
                                                  config.tuple_size, on_open);
      total += section.stats;
      if (!hash_mode) {
        auto frame = frames.find(section.htf);
        if (frame->end_stream() && frame->free_frame()) {
          rec(tid, role::kRecv, ev::kHtfFree, {{"htf", section.htf}});
        }
      }
    }
    write_ack(conn);
    rec(tid, role::kRecv, ev::kPartitionDone, {{"source", source}});
    return total;
  }

  StreamStats receive_result(std::uint32_t tid, const ReceiveRecord& rr, Connection& conn) {
    const NodeId source = rr.preamble.sender;
    if (!sink) {
      throw ProtocolError("result stream from node " + std::to_string(source) +
                          " reached non-sink node " + std::to_string(id));
    }
    if (source >= n || source == id) {
      throw ProtocolError("result stream from invalid sender " + std::to_string(source));
    }
    if (rr.preamble.record_size != layout.entry_size) {
      throw ProtocolError("result entry size " + std::to_string(rr.preamble.record_size) +
                          " does not match " + std::to_string(layout.entry_size));
    }
    StreamStats stats;
    auto blocks = recv_result_stream(conn, rr.preamble, &stats);
    {
      std::lock_guard lock(collected_mutex);
      if (result_seen.count(source) > 0) {
        throw ProtocolError("second result stream from node " + std::to_string(source));
      }
      result_seen.insert(source);
      collected[source] = std::move(blocks);
    }
    rec(tid, role::kRecv, ev::kResultDone, {{"source", source}});
    if (results_received.fetch_add(1) + 1 == n - 1) {
      res_flag.store(true);
    }
    return stats;
  }

  void recv_loop(std::uint32_t tid) {
    std::uint64_t busy = 0;
    std::uint64_t result_busy = 0;
    StreamStats part_stats;
    StreamStats result_stats;
    bool running = true;
    while (running) {
      auto rr = qr.pop([&](const ReceiveRecord& r) {
        if (r.type == CommEvent::kExit) {
          rec(tid, role::kRecv, ev::kPopExit);
        } else {
          rec(tid, role::kRecv, ev::kPopRecvData,
              {{"kind", static_cast<int>(r.preamble.kind)}, {"source", r.preamble.sender}});
        }
      });
      const auto t0 = Clock::now();
      if (rr.type == CommEvent::kExit) {
        if (sink && tid == 0) {
          qc.push(ComputeRecord::exit(),
                  [&](const ComputeRecord&) { rec(tid, role::kRecv, ev::kPushExitQc); });
        }
        qr.push(std::move(rr));
        running = false;
        continue;
      }
      const bool partition = rr.preamble.kind == StreamKind::kPartition;
      {
        LiveConnection live(*this, rr.socket.get());
        if (partition) {
          part_stats += receive_partition(tid, rr, *rr.socket);
        } else {
          result_stats += receive_result(tid, rr, *rr.socket);
        }
      }
      rr.socket.reset();
      if (partition) {
        busy += elapsed_ns(t0, Clock::now());
        arrive(tid, role::kRecv);
      } else {
        result_busy += elapsed_ns(t0, Clock::now());
      }
      maybe_push_receive_exit(tid, role::kRecv);
    }
    recv_ns.fetch_add(busy);
    result_recv_ns.fetch_add(result_busy);
    bytes_received.fetch_add(part_stats.total());
    payload_received.fetch_add(part_stats.payload_bytes);
    result_bytes_received.fetch_add(result_stats.total());
    rec(tid, role::kRecv, ev::kThreadExit);
  }

  // ---- listener ----

  void listen_loop() {
    for (;;) {
      std::unique_ptr<Connection> accepted = listener->accept();
      if (!accepted) {
        return;
      }
      std::shared_ptr<Connection> conn(std::move(accepted));
      StreamPreamble p;
      try {
        LiveConnection live(*this, conn.get());
        p = read_preamble(*conn);
      } catch (const ProtocolError&) {
        throw;
      } catch (const TransportError& e) {
        // A peer that connects and vanishes is not fatal to this node.
        log_warn("node {}: dropped connection before preamble: {}", id, e.what());
        continue;
      }
      const auto at = since_start();
      rec(0, role::kListener, ev::kAccept,
          {{"kind", static_cast<int>(p.kind)}, {"source", p.sender}});
      if (p.kind == StreamKind::kResult) {
        std::uint64_t prev = last_result_ns.load();
        while (prev < at && !last_result_ns.compare_exchange_weak(prev, at)) {
        }
      }
      const auto type =
          p.kind == StreamKind::kPartition ? CommEvent::kPartitionReady : CommEvent::kResultReady;
      qr.push(ReceiveRecord{type, conn, p}, [&](const ReceiveRecord&) {
        rec(0, role::kListener, ev::kPushRecvData,
            {{"kind", static_cast<int>(p.kind)}, {"source", p.sender}});
      });
    }
  }

  // ---- driver ----

  void prepare() {
    if (prepared) {
      return;
    }
    rec(0, role::kNode, ev::kNodeStart,
        {{"n_compute", config.n_compute},
         {"n_send", config.n_send},
         {"n_recv", config.n_recv},
         {"num_nodes", n},
         {"sink", sink ? 1 : 0}});
    set_phase(NodePhase::kLoading);
    local_r = build_hash_table(r_part, config.num_buckets);
    local_s = build_hash_table(s_part, config.num_buckets);
    {
      std::lock_guard lock(listener_mutex);
      listener = opts.transport->listen(config.endpoint(id));
    }
    prepared = true;
  }

  void schedule() {
    for (const auto& sr : shuffle_schedule(id, config)) {
      qs.push(sr, [&](const SendRecord& r) {
        rec(0, role::kScheduler, ev::kPushPartitionReady, {{"dest", r.dest}});
      });
    }
    auto push_local = [&](BucketIndex b, TableId t) {
      if (local_table(t).bucket(b).empty() ||
          opts.hooks.drop_bucket == static_cast<std::int64_t>(b)) {
        return;
      }
      qc.push(ComputeRecord::join(b, kLocalFrame, t), [&](const ComputeRecord&) {
        rec(0, role::kScheduler, ev::kPushJoin,
            {{"bucket", b}, {"htf", -1}, {"table", static_cast<int>(t)}});
      });
    };
    if (hash_mode) {
      for (auto b : assign_buckets(id, n, config.num_buckets)) {
        push_local(b, TableId::kR);
        push_local(b, TableId::kS);
      }
    } else {
      for (BucketIndex b = 0; b < config.num_buckets; ++b) {
        push_local(b, TableId::kR);
      }
    }
    rec(0, role::kScheduler, ev::kLocalReady);
    arrive(0, role::kScheduler);
  }

  NodeOutcome run() {
    std::vector<std::thread> workers;
    std::thread listen_thread;
    try {
      prepare();
      shuffle_start = Clock::now();
      set_phase(NodePhase::kShuffling);
      rec(0, role::kScheduler, ev::kSchedule);
      listen_thread = std::thread([this] { guarded(role::kListener, 0, [&] { listen_loop(); }); });
      for (std::uint32_t t = 0; t < config.n_compute; ++t) {
        workers.emplace_back([this, t] { guarded(role::kCompute, t, [&] { compute_loop(t); }); });
      }
      for (std::uint32_t t = 0; t < config.n_recv; ++t) {
        workers.emplace_back([this, t] { guarded(role::kRecv, t, [&] { recv_loop(t); }); });
      }
      for (std::uint32_t t = 0; t < config.n_send; ++t) {
        workers.emplace_back([this, t] { guarded(role::kSend, t, [&] { send_loop(t); }); });
      }
      guarded(role::kScheduler, 0, [&] { schedule(); });
    } catch (const Error& e) {
      fail(e.category(), e.what());
    }
    for (auto& w : workers) {
      w.join();
    }
    {
      std::lock_guard lock(listener_mutex);
      if (listener) {
        listener->close();
      }
    }
    if (listen_thread.joinable()) {
      listen_thread.join();
    }
    {
      std::lock_guard lock(error_mutex);
      if (error) {
        throw Error(error->first, error->second);
      }
    }
    set_phase(NodePhase::kDone);
    return outcome();
  }

  NodeOutcome outcome() {
    NodeOutcome out;
    out.node_id = id;
    out.sink = sink;
    out.layout = layout;
    out.local_results = results.blocks();
    if (sink) {
      out.collected = std::move(collected);
      out.collected[id] = out.local_results;
    }
    auto& r = out.report;
    r.node_id = id;
    r.compute_time_ns = compute_ns.load();
    r.send_time_ns = send_ns.load();
    r.recv_time_ns = recv_ns.load();
    r.join_span_ns = join_end_ns.load();
    r.bytes_sent = bytes_sent.load();
    r.bytes_received = bytes_received.load();
    r.payload_bytes_sent = payload_sent.load();
    r.payload_bytes_received = payload_received.load();
    r.result_send_ns = result_send_ns.load();
    r.result_recv_ns = result_recv_ns.load();
    r.result_bytes_sent = result_bytes_sent.load();
    r.result_bytes_received = result_bytes_received.load();
    r.pool_block_ns = pool.blocked_ns();
    r.pool_blocked_acquires = pool.blocked_acquires();
    r.pool_peak_bytes = pool.peak();
    r.joins = joins.load();
    r.result_entries = produced.load();
    if (sink) {
      r.cluster_join_span_ns = std::max(join_end_ns.load(), last_result_ns.load());
    }
    return out;
  }

  // configuration
  ClusterConfig config;
  const NodeId id;
  const std::uint32_t n;
  const bool sink;
  const bool hash_mode;
  const Partition& r_part;
  const Partition& s_part;
  NodeOptions opts;
  const bool tracing;
  const ResultLayout layout;

  // data
  HashTable local_r;
  HashTable local_s;
  std::vector<bool> owned_mask;
  std::unique_ptr<BucketState[]> bucket_states;
  MemoryPool pool;
  HtfRegistry frames;

  // coordination
  BoundedQueue<ComputeRecord> qc;
  BoundedQueue<SendRecord> qs;
  BoundedQueue<ReceiveRecord> qr;
  ResultList results;
  LocalBarrier barrier;
  std::atomic<std::uint32_t> partitions_arrived{0};
  std::atomic<std::uint32_t> results_received{0};
  std::atomic<bool> shuffle_flag{false};
  std::atomic<bool> res_flag{false};
  std::atomic<bool> recv_exit_pushed{false};

  // sink collection
  std::mutex collected_mutex;
  std::unordered_set<NodeId> result_seen;
  std::vector<std::vector<ResultBlock>> collected;

  // lifecycle
  bool prepared = false;
  std::mutex phase_mutex;
  std::atomic<int> phase{-1};
  std::mutex listener_mutex;
  std::unique_ptr<Listener> listener;
  std::mutex live_mutex;
  std::unordered_set<Connection*> live;
  std::atomic<bool> aborted{false};
  std::mutex error_mutex;
  std::optional<std::pair<ErrorCategory, std::string>> error;

  // metrics, merged from per-thread accumulators at thread exit
  Clock::time_point shuffle_start;
  std::atomic<std::uint64_t> join_end_ns{0};
  std::atomic<std::uint64_t> last_result_ns{0};
  std::atomic<std::uint64_t> compute_ns{0};
  std::atomic<std::uint64_t> send_ns{0};
  std::atomic<std::uint64_t> recv_ns{0};
  std::atomic<std::uint64_t> result_send_ns{0};
  std::atomic<std::uint64_t> result_recv_ns{0};
  std::atomic<std::uint64_t> bytes_sent{0};
  std::atomic<std::uint64_t> bytes_received{0};
  std::atomic<std::uint64_t> payload_sent{0};
  std::atomic<std::uint64_t> payload_received{0};
  std::atomic<std::uint64_t> result_bytes_sent{0};
  std::atomic<std::uint64_t> result_bytes_received{0};
  std::atomic<std::uint64_t> joins{0};
  std::atomic<std::uint64_t> produced{0};
};

thread_local std::uint32_t NodeEngine::Impl::compute_tid_hint = 0;

NodeEngine::NodeEngine(ClusterConfig config, NodeId id, const Partition& r, const Partition& s,
                       NodeOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), id, r, s, options)) {}

NodeEngine::~NodeEngine() = default;

void NodeEngine::prepare() {
  impl_->prepare();
}

NodeOutcome NodeEngine::run() {
  return impl_->run();
}

void NodeEngine::abort(const std::string& reason) {
  impl_->fail(ErrorCategory::kTimeout, reason);
}

NodePhase NodeEngine::phase() const {
  return static_cast<NodePhase>(std::max(0, impl_->phase.load()));
}

NodeOutcome run_node(const ClusterConfig& config, NodeId id, const Partition& r,
                     const Partition& s, const NodeOptions& options) {
  NodeEngine engine(config, id, r, s, options);
  return engine.run();
}

} // namespace shardjoin
