#include "shardjoin/baseline.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include "shardjoin/join.hpp"
#include "shardjoin/log.hpp"
#include "shardjoin/schedule.hpp"
#include "shardjoin/wire.hpp"

namespace shardjoin {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t ns_since(Clock::time_point t0) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
}

const char* const kRole = "baseline";

// Shuts a connection down if the guarded operation outlives the timeout.
class Deadline {
 public:
  Deadline(Connection& conn, std::chrono::milliseconds timeout)
      : thread_([this, &conn, timeout] {
          std::unique_lock lock(mutex_);
          if (!cv_.wait_for(lock, timeout, [&] { return cancelled_; })) {
            expired_ = true;
            conn.shutdown();
          }
        }) {}
  ~Deadline() {
    {
      std::lock_guard lock(mutex_);
      cancelled_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }
  bool expired() {
    std::lock_guard lock(mutex_);
    return expired_;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  bool cancelled_ = false;
  bool expired_ = false;
  std::thread thread_;
};

struct Incoming {
  std::shared_ptr<Connection> conn;
  StreamPreamble preamble;
};

} // namespace

struct BaselineNode::Impl {
  Impl(ClusterConfig c, NodeId node, const Partition& r, const Partition& s, BaselineOptions o)
      : config(std::move(c)),
        id(node),
        n(config.num_nodes()),
        sink(config.is_sink(node)),
        r_part(r),
        s_part(s),
        opts(o),
        layout(ResultLayout::for_config(config)),
        local_r(TableId::kR, config.num_buckets, config.tuple_size),
        local_s(TableId::kS, config.num_buckets, config.tuple_size),
        pool(config.effective_pool_capacity(), o.progress),
        results(layout) {
    config.validate();
    if (config.join_mode != JoinMode::kBroadcast) {
      throw ConfigError("the barrier baseline supports broadcast mode only");
    }
    if (id >= n || opts.transport == nullptr) {
      throw ConfigError("baseline node needs a valid id and a transport");
    }
  }

  void rec(const char* event, std::initializer_list<std::pair<const char*, std::int64_t>> attrs = {}) {
    if (opts.trace == nullptr || !opts.trace->enabled()) {
      return;
    }
    std::vector<std::pair<std::string, std::int64_t>> a;
    for (const auto& [k, v] : attrs) {
      a.emplace_back(k, v);
    }
    opts.trace->record(id, 0, kRole, event, std::move(a));
  }

  void check_aborted() {
    if (aborted.load()) {
      std::lock_guard lock(error_mutex);
      throw Error(error ? error->first : ErrorCategory::kInternal,
                  error ? error->second : "aborted");
    }
  }

  void fail(ErrorCategory category, const std::string& message) {
    {
      std::lock_guard lock(error_mutex);
      if (!error) {
        error.emplace(category, message);
        log_error("baseline node {}: {} error: {}", id, category_name(category), message);
      }
    }
    if (aborted.exchange(true)) {
      return;
    }
    pool.close();
    {
      std::lock_guard lock(inbox_mutex);
      inbox_cv.notify_all();
    }
    {
      std::lock_guard lock(listener_mutex);
      if (listener) {
        listener->close();
      }
    }
    std::lock_guard lock(live_mutex);
    for (auto& [ptr, c] : live) {
      c->shutdown();
    }
  }

  // Tracked connections stay alive until untracked, so an abort can always
  // shut them down safely.
  void track(const std::shared_ptr<Connection>& c) {
    std::lock_guard lock(live_mutex);
    if (aborted.load()) {
      c->shutdown();
    }
    live.emplace(c.get(), c);
  }
  void untrack(const std::shared_ptr<Connection>& c) {
    std::lock_guard lock(live_mutex);
    live.erase(c.get());
  }

  // ---- listener: routes data streams and barrier arrivals ----

  void listen_loop() {
    for (;;) {
      std::unique_ptr<Connection> accepted = listener->accept();
      if (!accepted) {
        return;
      }
      std::shared_ptr<Connection> conn(std::move(accepted));
      track(conn);
      std::array<std::byte, kPreambleSize> head{};
      try {
        conn->read_exact(std::span(head).first(4));
        if (std::equal(head.begin(), head.begin() + 4, kBarrierMagic.begin())) {
          std::array<std::byte, kBarrierMessageSize - 4> rest{};
          conn->read_exact(rest);
          const auto gen = load_le<std::uint32_t>(rest.data());
          const auto from = load_le<std::uint32_t>(rest.data() + 4);
          if (!sink || from >= n) {
            throw ProtocolError("unexpected barrier arrival from node " + std::to_string(from));
          }
          std::lock_guard lock(inbox_mutex);
          arrivals[gen].push_back(conn);
          inbox_cv.notify_all();
          continue;
        }
        conn->read_exact(std::span(head).subspan(4));
        const auto p = decode_preamble(head);
        std::lock_guard lock(inbox_mutex);
        if (p.kind == StreamKind::kPartition) {
          partitions[p.sender].push_back({conn, p});
        } else {
          result_streams.push_back({conn, p});
        }
        inbox_cv.notify_all();
      } catch (const ProtocolError& e) {
        untrack(conn);
        log_warn("baseline node {}: rejected connection: {}", id, e.what());
      } catch (const TransportError& e) {
        untrack(conn);
        log_warn("baseline node {}: dropped connection: {}", id, e.what());
      }
    }
  }

  template <typename Pred>
  void wait_inbox(std::unique_lock<std::mutex>& lock, Pred ready, const std::string& what) {
    if (!inbox_cv.wait_for(lock, opts.barrier_timeout, [&] { return aborted.load() || ready(); })) {
      throw TimeoutError("timed out waiting for " + what);
    }
    if (aborted.load()) {
      lock.unlock();
      check_aborted();
    }
  }

  // ---- cluster barrier, coordinated by the sink ----

  void barrier_wait(std::uint32_t gen) {
    rec("CLUSTER_BARRIER_ARRIVE", {{"generation", gen}});
    if (n == 1) {
      rec("CLUSTER_BARRIER_PASS", {{"generation", gen}});
      return;
    }
    if (sink) {
      std::vector<std::shared_ptr<Connection>> waiting;
      {
        std::unique_lock lock(inbox_mutex);
        wait_inbox(lock, [&] { return arrivals[gen].size() >= n - 1; },
                   "barrier generation " + std::to_string(gen));
        waiting = std::move(arrivals[gen]);
        arrivals.erase(gen);
      }
      for (auto& c : waiting) {
        c->write_all(std::span(&kAckByte, 1));
        c->close_write();
        untrack(c);
      }
    } else {
      auto conn = connect_with_retry(config.endpoint(config.sink_id));
      track(conn);
      std::array<std::byte, kBarrierMessageSize> msg{};
      std::copy(kBarrierMagic.begin(), kBarrierMagic.end(), msg.begin());
      store_le<std::uint32_t>(msg.data() + 4, gen);
      store_le<std::uint32_t>(msg.data() + 8, id);
      bool expired = false;
      try {
        Deadline deadline(*conn, opts.barrier_timeout);
        try {
          conn->write_all(msg);
          std::byte release{};
          conn->read_exact(std::span(&release, 1));
          if (release != kAckByte) {
            throw ProtocolError("bad barrier release byte");
          }
        } catch (const TransportError&) {
          expired = deadline.expired();
          if (!expired) {
            throw;
          }
        }
      } catch (...) {
        untrack(conn);
        throw;
      }
      untrack(conn);
      if (expired) {
        throw TimeoutError("barrier generation " + std::to_string(gen) + " timed out");
      }
    }
    rec("CLUSTER_BARRIER_PASS", {{"generation", gen}});
  }

  std::shared_ptr<Connection> connect_with_retry(const Endpoint& ep) {
    auto delay = std::chrono::milliseconds(config.retry_initial_ms);
    const auto attempts = std::max<std::uint32_t>(1, config.retry_attempts);
    for (std::uint32_t attempt = 1;; ++attempt) {
      check_aborted();
      try {
        return opts.transport->connect(ep);
      } catch (const ConnectRefused& e) {
        if (attempt >= attempts) {
          throw TransportError("connect to " + ep.str() + " failed after " +
                               std::to_string(attempts) + " attempts: " + e.what());
        }
      }
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }

  // ---- phases ----

  void send_to(NodeId dest) {
    const auto t0 = Clock::now();
    if (opts.hooks.send_delay_us > 0) {
      std::this_thread::sleep_for(std::chrono::microseconds(opts.hooks.send_delay_us));
    }
    auto conn = connect_with_retry(config.endpoint(dest));
    track(conn);
    try {
      auto sections = select_content(JoinMode::kBroadcast, dest, local_r, local_s, config);
      const auto stats = send_partition_stream(*conn, sections, id);
      conn->close_write();
      bytes_sent += stats.total();
      payload_sent += stats.payload_bytes;
    } catch (...) {
      untrack(conn);
      throw;
    }
    untrack(conn);
    send_ns += ns_since(t0);
  }

  void receive_from(NodeId source, LocalBuffer& lb) {
    const auto t0 = Clock::now();
    Incoming in;
    {
      std::unique_lock lock(inbox_mutex);
      wait_inbox(lock, [&] { return !partitions[source].empty(); },
                 "partition from node " + std::to_string(source));
      in = std::move(partitions[source].front());
      partitions[source].pop_front();
    }
    std::uint64_t join_time = 0;
    auto on_bucket = [&](HashTableFrame& f, BucketIndex b) {
      const auto j0 = Clock::now();
      if (opts.hooks.compute_delay_us > 0) {
        std::this_thread::sleep_for(std::chrono::microseconds(opts.hooks.compute_delay_us));
      }
      join_bucket(f.bucket(b), b, local_s, config.predicate, f.source(), lb);
      ++joins;
      f.free_bucket(b);
      f.finish_bucket();
      join_time += ns_since(j0);
    };
    const auto section = recv_partition_section(*in.conn, in.preamble, pool, frames, on_bucket, {},
                                                config.tuple_size);
    frames.find(section.htf)->free_frame();
    write_ack(*in.conn);
    untrack(in.conn);
    bytes_received += section.stats.total();
    payload_received += section.stats.payload_bytes;
    compute_ns += join_time;
    recv_ns += ns_since(t0) - join_time;
  }

  void collect_results() {
    if (n == 1) {
      return;
    }
    const auto t0 = Clock::now();
    if (!sink) {
      auto conn = connect_with_retry(config.endpoint(config.sink_id));
      track(conn);
      try {
        const auto blocks = results.blocks();
        result_bytes_sent += send_result_stream(*conn, id, layout, blocks).total();
        conn->close_write();
      } catch (...) {
        untrack(conn);
        throw;
      }
      untrack(conn);
      result_send_ns += ns_since(t0);
      return;
    }
    for (std::uint32_t got = 0; got + 1 < n; ++got) {
      Incoming in;
      {
        std::unique_lock lock(inbox_mutex);
        wait_inbox(lock, [&] { return !result_streams.empty(); }, "result streams");
        in = std::move(result_streams.front());
        result_streams.pop_front();
      }
      const auto source = in.preamble.sender;
      if (source >= n || source == id || !collected[source].empty()) {
        throw ProtocolError("unexpected result stream from node " + std::to_string(source));
      }
      StreamStats stats;
      collected[source] = recv_result_stream(*in.conn, in.preamble, &stats);
      untrack(in.conn);
      result_bytes_received += stats.total();
    }
    result_recv_ns += ns_since(t0);
  }

  void prepare() {
    if (prepared) {
      return;
    }
    local_r = build_hash_table(r_part, config.num_buckets);
    local_s = build_hash_table(s_part, config.num_buckets);
    std::lock_guard lock(listener_mutex);
    listener = opts.transport->listen(config.endpoint(id));
    prepared = true;
  }

  NodeOutcome run() {
    std::thread listen_thread;
    std::uint64_t span = 0;
    try {
      prepare();
      collected.assign(n, {});
      listen_thread = std::thread([this] {
        try {
          listen_loop();
        } catch (const Error& e) {
          fail(e.category(), e.what());
        } catch (const std::exception& e) {
          fail(ErrorCategory::kInternal, e.what());
        }
      });
      const auto start = Clock::now();
      LocalBuffer lb(0, config.page_size, layout, results);
      {
        const auto c0 = Clock::now();
        for (BucketIndex b = 0; b < config.num_buckets; ++b) {
          join_bucket(local_r.bucket(b), b, local_s, config.predicate, id, lb);
        }
        compute_ns += ns_since(c0);
      }
      for (std::uint32_t k = 1; k < n; ++k) {
        const auto peers = ring_peers(id, k, n);
        rec("PHASE_BEGIN", {{"phase", k}, {"dest", peers.receiver}, {"source", peers.sender}});
        std::optional<Error> send_error;
        std::thread sender([&] {
          try {
            send_to(peers.receiver);
          } catch (const Error& e) {
            send_error.emplace(e.category(), e.what());
            fail(e.category(), e.what());
          } catch (const std::exception& e) {
            send_error.emplace(ErrorCategory::kInternal, e.what());
            fail(ErrorCategory::kInternal, e.what());
          }
        });
        try {
          receive_from(peers.sender, lb);
        } catch (...) {
          sender.join();
          throw;
        }
        sender.join();
        if (send_error) {
          throw *send_error;
        }
        barrier_wait(k);
      }
      lb.flush();
      produced = lb.produced();
      span = ns_since(start);
      collect_results();
    } catch (const Error& e) {
      fail(e.category(), e.what());
    } catch (const std::exception& e) {
      fail(ErrorCategory::kInternal, e.what());
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
    r.compute_time_ns = compute_ns;
    r.send_time_ns = send_ns;
    r.recv_time_ns = recv_ns;
    r.join_span_ns = span;
    r.bytes_sent = bytes_sent;
    r.bytes_received = bytes_received;
    r.payload_bytes_sent = payload_sent;
    r.payload_bytes_received = payload_received;
    r.result_send_ns = result_send_ns;
    r.result_recv_ns = result_recv_ns;
    r.result_bytes_sent = result_bytes_sent;
    r.result_bytes_received = result_bytes_received;
    r.pool_block_ns = pool.blocked_ns();
    r.pool_blocked_acquires = pool.blocked_acquires();
    r.pool_peak_bytes = pool.peak();
    r.joins = joins;
    r.result_entries = produced;
    r.cluster_join_span_ns = sink ? span : 0;
    return out;
  }

  ClusterConfig config;
  const NodeId id;
  const std::uint32_t n;
  const bool sink;
  const Partition& r_part;
  const Partition& s_part;
  BaselineOptions opts;
  const ResultLayout layout;
  HashTable local_r;
  HashTable local_s;
  MemoryPool pool;
  HtfRegistry frames;
  ResultList results;
  bool prepared = false;

  std::mutex inbox_mutex;
  std::condition_variable inbox_cv;
  std::map<NodeId, std::deque<Incoming>> partitions;
  std::deque<Incoming> result_streams;
  std::map<std::uint32_t, std::vector<std::shared_ptr<Connection>>> arrivals;
  std::vector<std::vector<ResultBlock>> collected;

  std::mutex listener_mutex;
  std::unique_ptr<Listener> listener;
  std::mutex live_mutex;
  std::unordered_map<Connection*, std::shared_ptr<Connection>> live;
  std::atomic<bool> aborted{false};
  std::mutex error_mutex;
  std::optional<std::pair<ErrorCategory, std::string>> error;

  // Written by the main thread, except send_* and the byte counters of the
  // sender thread, which is joined before they are read.
  std::uint64_t compute_ns = 0;
  std::uint64_t send_ns = 0;
  std::uint64_t recv_ns = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t payload_sent = 0;
  std::uint64_t payload_received = 0;
  std::uint64_t result_send_ns = 0;
  std::uint64_t result_recv_ns = 0;
  std::uint64_t result_bytes_sent = 0;
  std::uint64_t result_bytes_received = 0;
  std::uint64_t joins = 0;
  std::uint64_t produced = 0;
};

BaselineNode::BaselineNode(ClusterConfig config, NodeId id, const Partition& r,
                           const Partition& s, BaselineOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), id, r, s, options)) {}

BaselineNode::~BaselineNode() = default;

void BaselineNode::prepare() {
  impl_->prepare();
}

NodeOutcome BaselineNode::run() {
  return impl_->run();
}

void BaselineNode::abort(const std::string& reason) {
  impl_->fail(ErrorCategory::kTimeout, reason);
}

NodeOutcome run_baseline_node(const ClusterConfig& config, NodeId id, const Partition& r,
                              const Partition& s, const BaselineOptions& options) {
  BaselineNode node(config, id, r, s, options);
  return node.run();
}

} // namespace shardjoin
