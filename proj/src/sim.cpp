#include "shardjoin/sim.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <thread>

#include "shardjoin/baseline.hpp"
#include "shardjoin/log.hpp"

namespace shardjoin {

std::string to_string(Engine e) {
  return e == Engine::kBarrierFree ? "barrier-free" : "barrier-baseline";
}

Engine parse_engine(const std::string& text) {
  if (text == "barrier-free") {
    return Engine::kBarrierFree;
  }
  if (text == "barrier-baseline" || text == "baseline") {
    return Engine::kBaseline;
  }
  throw ConfigError("unknown engine '" + text + "' (expected barrier-free or barrier-baseline)");
}

std::vector<ResultEntry> SimResult::sink_entries(NodeId sink) const {
  for (const auto& o : outcomes) {
    if (o.node_id == sink) {
      return o.entries();
    }
  }
  return {};
}

std::vector<ResultEntry> SimResult::union_entries() const {
  std::vector<ResultEntry> out;
  for (const auto& o : outcomes) {
    for (const auto& b : o.local_results) {
      auto e = decode_block(b, o.layout);
      out.insert(out.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Common face of the two engines for the driver below.
class SimNode {
 public:
  virtual ~SimNode() = default;
  virtual void prepare() = 0;
  virtual NodeOutcome run() = 0;
  virtual void abort(const std::string& reason) = 0;
};

class BarrierFreeNode final : public SimNode {
 public:
  BarrierFreeNode(const ClusterConfig& c, NodeId id, const Partition& r, const Partition& s,
                  NodeOptions o)
      : engine_(c, id, r, s, o) {}
  void prepare() override { engine_.prepare(); }
  NodeOutcome run() override { return engine_.run(); }
  void abort(const std::string& reason) override { engine_.abort(reason); }

 private:
  NodeEngine engine_;
};

class BaselineSimNode final : public SimNode {
 public:
  BaselineSimNode(const ClusterConfig& c, NodeId id, const Partition& r, const Partition& s,
                  BaselineOptions o)
      : node_(c, id, r, s, o) {}
  void prepare() override { node_.prepare(); }
  NodeOutcome run() override { return node_.run(); }
  void abort(const std::string& reason) override { node_.abort(reason); }

 private:
  BaselineNode node_;
};

} // namespace

SimResult run_sim(const ClusterConfig& config, const std::vector<Partition>& r_parts,
                  const std::vector<Partition>& s_parts, const SimOptions& options) {
  config.validate();
  const auto n = config.num_nodes();
  if (r_parts.size() != n || s_parts.size() != n) {
    throw ConfigError("simulator needs one R and one S partition per node");
  }

  Progress progress;
  std::optional<Jitter> jitter;
  if (options.jitter_probability > 0.0) {
    jitter.emplace(options.seed, options.jitter_probability);
    progress.set_jitter(&*jitter);
  }
  MemTransport transport(options.pipe_capacity, &progress);
  Trace trace(options.trace);

  std::vector<std::unique_ptr<SimNode>> nodes;
  for (NodeId i = 0; i < n; ++i) {
    EngineHooks hooks = options.hooks;
    if (i < options.node_hooks.size() && options.node_hooks[i]) {
      hooks = *options.node_hooks[i];
    }
    if (options.engine == Engine::kBarrierFree) {
      NodeOptions o{&transport, &trace, &progress, hooks};
      nodes.push_back(std::make_unique<BarrierFreeNode>(config, i, r_parts[i], s_parts[i], o));
    } else {
      BaselineOptions o;
      o.transport = &transport;
      o.trace = &trace;
      o.progress = &progress;
      o.hooks = hooks;
      o.barrier_timeout = options.watchdog;
      nodes.push_back(std::make_unique<BaselineSimNode>(config, i, r_parts[i], s_parts[i], o));
    }
  }
  // Every listener is bound before any node starts sending.
  for (auto& node : nodes) {
    node->prepare();
  }

  SimResult result;
  std::vector<std::optional<NodeOutcome>> outcomes(n);
  std::mutex error_mutex;
  std::atomic<std::uint32_t> finished{0};
  std::vector<std::thread> threads;
  for (NodeId i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        outcomes[i] = nodes[i]->run();
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (result.error.empty()) {
          result.error = "node " + std::to_string(i) + ": " + e.what();
        }
      }
      finished.fetch_add(1);
      progress.step();
    });
  }

  // Watchdog: abort everything if no blocking primitive moves for too long.
  auto last_count = progress.count();
  auto last_change = std::chrono::steady_clock::now();
  while (finished.load() < n) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    const auto now = std::chrono::steady_clock::now();
    const auto count = progress.count();
    if (count != last_count) {
      last_count = count;
      last_change = now;
      continue;
    }
    if (now - last_change > options.watchdog) {
      result.deadlock = true;
      log_error("simulator: no progress for {} ms, aborting {} nodes",
                options.watchdog.count(), n);
      for (auto& node : nodes) {
        node->abort("watchdog: no progress");
      }
      break;
    }
  }
  for (auto& t : threads) {
    t.join();
  }

  result.trace = trace.events();
  if (result.deadlock && result.error.empty()) {
    result.error = "deadlock: no progress within the watchdog period";
  }
  if (result.error.empty()) {
    for (NodeId i = 0; i < n; ++i) {
      result.metrics.nodes.push_back(outcomes[i]->report);
      result.outcomes.push_back(std::move(*outcomes[i]));
    }
    result.metrics.cluster_join_span_ns = result.outcomes[config.sink_id].report.cluster_join_span_ns;
    if (options.trace && options.engine == Engine::kBarrierFree) {
      result.violations = check_trace(result.trace);
    }
  }
  if (!result.ok() && !options.dump_path.empty()) {
    std::ofstream out(options.dump_path);
    write_trace_jsonl(result.trace, out);
    log_error("simulator: trace written to {}", options.dump_path);
  }
  return result;
}

} // namespace shardjoin
