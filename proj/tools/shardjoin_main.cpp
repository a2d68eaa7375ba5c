// shardjoin: gen | node | orchestrate | simulate
#include <CLI11.hpp>

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <thread>

#include "shardjoin/baseline.hpp"
#include "shardjoin/harness.hpp"
#include "shardjoin/log.hpp"
#include "shardjoin/node.hpp"
#include "shardjoin/sim.hpp"
#include "shardjoin/workload.hpp"

namespace fs = std::filesystem;
using namespace shardjoin;

namespace {

struct NodeArgs {
  std::string config;
  std::uint32_t id = 0;
  std::string data_dir;
  std::string engine;
  std::string report;
  std::string trace;
  std::string summary;
  std::string results;
  std::uint32_t timeout_s = 600;
};

Partition load_or_generate(const KeyValueFile& kv, const ClusterConfig& config,
                           const std::string& data_dir, TableId table, NodeId id) {
  if (!data_dir.empty()) {
    auto p = read_partition((fs::path(data_dir) / partition_file_name(table, id)).string());
    if (p.tuple_size() != config.tuple_size) {
      throw ConfigError("partition file has tuple size " + std::to_string(p.tuple_size()) +
                        ", config says " + std::to_string(config.tuple_size));
    }
    return p;
  }
  auto spec = gen_spec_from_kv(kv);
  spec.domain = config.domain;
  spec.tuple_size = config.tuple_size;
  spec.tuples = table == TableId::kR ? config.partition_size_r : config.partition_size_s;
  return generate_partition(spec, table, id);
}

void write_text(const std::string& path, const std::string& what,
                const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  body(out);
  out.flush();
  if (!out) {
    throw IoError("cannot write " + what + " to " + path);
  }
}

int cmd_node(const NodeArgs& a) {
  const auto kv = KeyValueFile::load(a.config);
  const auto config = config_from_kv(kv);
  config.validate();
  if (a.id >= config.num_nodes()) {
    throw ConfigError("node id " + std::to_string(a.id) + " is not listed in " + a.config);
  }
  const auto engine = parse_engine(a.engine.empty() ? kv.get_or("engine", "barrier-free") : a.engine);
  const auto data_dir = a.data_dir.empty() ? kv.get_or("data_dir", "") : a.data_dir;
  const auto r = load_or_generate(kv, config, data_dir, TableId::kR, a.id);
  const auto s = load_or_generate(kv, config, data_dir, TableId::kS, a.id);

  auto transport = make_tcp_transport();
  Trace trace(!a.trace.empty());
  std::unique_ptr<NodeEngine> bf;
  std::unique_ptr<BaselineNode> bl;
  if (engine == Engine::kBarrierFree) {
    bf = std::make_unique<NodeEngine>(config, a.id, r, s,
                                      NodeOptions{transport.get(), &trace, nullptr, {}});
    bf->prepare();
  } else {
    BaselineOptions o;
    o.transport = transport.get();
    o.trace = &trace;
    o.barrier_timeout = std::chrono::seconds(a.timeout_s);
    bl = std::make_unique<BaselineNode>(config, a.id, r, s, o);
    bl->prepare();
  }
  log_info("node {}: {} engine, {} nodes, |R_i|={} |S_i|={}", a.id, to_string(engine),
           config.num_nodes(), r.size(), s.size());

  std::mutex m;
  std::condition_variable cv;
  bool done = false;
  std::thread watchdog([&] {
    std::unique_lock lock(m);
    if (!cv.wait_for(lock, std::chrono::seconds(a.timeout_s), [&] { return done; })) {
      const auto reason = "no completion within " + std::to_string(a.timeout_s) + " s";
      if (bf) {
        bf->abort(reason);
      } else {
        bl->abort(reason);
      }
    }
  });
  auto finish = [&] {
    {
      std::lock_guard lock(m);
      done = true;
    }
    cv.notify_all();
    watchdog.join();
  };
  NodeOutcome outcome;
  try {
    outcome = bf ? bf->run() : bl->run();
  } catch (...) {
    finish();
    if (!a.trace.empty()) {
      std::ofstream out(a.trace);
      trace.write_jsonl(out);
    }
    throw;
  }
  finish();

  if (!a.report.empty()) {
    write_text(a.report, "load report", [&](std::ostream& out) {
      write_load_report_csv(out, std::vector<LoadReport>{outcome.report});
    });
  }
  if (!a.trace.empty()) {
    write_text(a.trace, "trace", [&](std::ostream& out) { trace.write_jsonl(out); });
  }
  if (outcome.sink) {
    const auto entries = outcome.entries();
    if (!a.summary.empty()) {
      write_text(a.summary, "result summary", [&](std::ostream& out) {
        out << "entries " << entries.size() << "\nchecksum " << std::hex << std::setw(16)
            << std::setfill('0') << result_checksum(entries) << '\n';
      });
    }
    if (!a.results.empty()) {
      write_text(a.results, "results", [&](std::ostream& out) {
        out << "r_key,s_key,source\n";
        for (const auto& e : entries) {
          out << e.r_key << ',' << e.s_key << ',' << e.source << '\n';
        }
      });
    }
    std::cout << "sink collected " << entries.size() << " result entries\n";
  }
  std::cout << "node " << a.id << " done: span " << outcome.report.join_span_ns / 1e6
            << " ms, gain " << (outcome.report.join_span_ns ? intra_node_gain(outcome.report) : 0.0)
            << '\n';
  return 0;
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir) {
  auto m = load_manifest(spec_path);
  m.sweep = SweepAxis::kNone;
  m.sweep_values.clear();
  const auto point = expand_sweep(m).front();
  const auto data = generate_cluster_data(point.config, point.gen_r, point.gen_s);
  write_cluster_data(data, out_dir);
  std::cout << "wrote " << 2 * data.r.size() << " partition files to " << out_dir << '\n';
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Barrier-free distributed hash join"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("gen", "Write one partition file per (table, node)");
  gen->add_option("--spec", spec_path, "Manifest or config file")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  NodeArgs node_args;
  auto* node = app.add_subcommand("node", "Run one node daemon");
  node->add_option("--config", node_args.config, "Cluster config file")->required();
  node->add_option("--id", node_args.id, "This node's id")->required();
  node->add_option("--data-dir", node_args.data_dir, "Directory of partition files");
  node->add_option("--engine", node_args.engine, "barrier-free | barrier-baseline");
  node->add_option("--report", node_args.report, "LoadReport CSV path");
  node->add_option("--trace", node_args.trace, "Trace JSON-lines path");
  node->add_option("--summary", node_args.summary, "Sink: entry count and checksum");
  node->add_option("--results", node_args.results, "Sink: result entries as CSV");
  node->add_option("--timeout-s", node_args.timeout_s, "Abort if not done by then");

  std::string manifest_path;
  auto* orch = app.add_subcommand("orchestrate", "Run every sweep point as local processes");
  orch->add_option("--manifest", manifest_path, "Run manifest")->required();

  SimulateOptions sim;
  std::uint32_t watchdog_ms = 60000;
  auto* simc = app.add_subcommand("simulate", "Run the in-process simulator across seeds");
  simc->add_option("--manifest", manifest_path, "Run manifest")->required();
  simc->add_option("--seeds", sim.seeds, "Number of seeds")->required();
  simc->add_option("--inject", sim.inject, "Mutation: no-barrier | drop-bucket");
  simc->add_option("--jitter", sim.jitter, "Per-step yield/sleep probability");
  simc->add_option("--watchdog-ms", watchdog_ms, "Deadlock watchdog");
  simc->add_option("--dump", sim.dump_dir, "Directory for traces of failing seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : exit_code_for(ErrorCategory::kConfig);
  }

  try {
    if (*gen) {
      return cmd_gen(spec_path, out_dir);
    }
    if (*node) {
      return cmd_node(node_args);
    }
    if (*orch) {
      const auto m = load_manifest(manifest_path);
      return orchestrate(m, fs::read_symlink("/proc/self/exe").string(), std::cout);
    }
    if (*simc) {
      const auto m = load_manifest(manifest_path);
      sim.watchdog = std::chrono::milliseconds(watchdog_ms);
      const auto report = simulate(m, sim, std::cout);
      return report.failures == 0 ? 0 : kExitVerifyFailed;
    }
  } catch (const Error& e) {
    std::cerr << "shardjoin: " << category_name(e.category()) << " error: " << e.what() << '\n';
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "shardjoin: internal error: " << e.what() << '\n';
    return exit_code_for(ErrorCategory::kInternal);
  }
  return 0;
}
