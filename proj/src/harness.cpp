#include "shardjoin/harness.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "shardjoin/join.hpp"
#include "shardjoin/log.hpp"

extern char** environ;

namespace shardjoin {

namespace fs = std::filesystem;

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kTransport: return 3;
    case ErrorCategory::kProtocol: return 4;
    case ErrorCategory::kFormat: return 5;
    case ErrorCategory::kIo: return 6;
    case ErrorCategory::kTimeout: return 7;
    case ErrorCategory::kInternal: return 8;
  }
  return 8;
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kNone: return "none";
    case SweepAxis::kNodes: return "nodes";
    case SweepAxis::kTableSize: return "table_size";
    case SweepAxis::kComputeThreads: return "compute_threads";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) {
    return "";
  }
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_count(const std::string& what, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) {
      throw std::invalid_argument(text);
    }
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError(what + ": '" + text + "' is not a non-negative integer");
  }
}

void parse_sweep(const std::string& text, RunManifest& m) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ConfigError("sweep '" + text + "': expected '<axis>: v1,v2,...'");
  }
  const auto axis = trim(text.substr(0, colon));
  if (axis == "nodes") {
    m.sweep = SweepAxis::kNodes;
  } else if (axis == "table_size") {
    m.sweep = SweepAxis::kTableSize;
  } else if (axis == "compute_threads") {
    m.sweep = SweepAxis::kComputeThreads;
  } else {
    throw ConfigError("unknown sweep axis '" + axis +
                      "' (expected nodes, table_size or compute_threads)");
  }
  std::stringstream ss(text.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      continue;
    }
    const auto v = parse_count("sweep value", item);
    if (v == 0) {
      throw ConfigError("sweep values must be positive");
    }
    m.sweep_values.push_back(v);
  }
  if (m.sweep_values.empty()) {
    throw ConfigError("sweep '" + text + "' lists no values");
  }
}

std::vector<NodeAddress> generated_nodes(const std::string& host, std::uint16_t base_port,
                                         std::uint32_t n) {
  if (static_cast<std::uint32_t>(base_port) + n > 65536) {
    throw ConfigError("base_port " + std::to_string(base_port) + " leaves no room for " +
                      std::to_string(n) + " nodes");
  }
  std::vector<NodeAddress> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    out.push_back({i, Endpoint{host, static_cast<std::uint16_t>(base_port + i)}});
  }
  return out;
}

} // namespace

RunManifest manifest_from_kv(const KeyValueFile& kv) {
  RunManifest m;
  m.config = config_from_kv(kv);
  m.host = kv.get_or("host", m.host);
  const auto port = kv.get_u64("base_port", m.base_port);
  if (port == 0 || port > 65535) {
    throw ConfigError("base_port out of range");
  }
  m.base_port = static_cast<std::uint16_t>(port);
  if (m.config.nodes.empty()) {
    const auto n = kv.get_u64("num_nodes", 1);
    if (n == 0) {
      throw ConfigError("num_nodes must be at least 1");
    }
    m.config.nodes = generated_nodes(m.host, m.base_port, static_cast<std::uint32_t>(n));
  }
  if (auto e = kv.get("engine")) {
    m.engine = parse_engine(*e);
  }
  m.gen.seed = kv.get_u64("seed", m.gen.seed);
  m.gen.domain = m.config.domain;
  m.gen.tuple_size = m.config.tuple_size;
  if (auto d = kv.get("distribution")) {
    parse_distribution(*d, m.gen);
  }
  m.total_tuples_r = kv.get_u64("total_tuples_r", 0);
  m.total_tuples_s = kv.get_u64("total_tuples_s", 0);
  if (auto s = kv.get("sweep")) {
    parse_sweep(*s, m);
  }
  m.output_dir = kv.get_or("output_dir", m.output_dir);
  m.run_timeout = std::chrono::seconds(kv.get_u64("run_timeout_s", m.run_timeout.count()));
  const auto verify = kv.get_or("verify", "off");
  if (verify != "on" && verify != "off") {
    throw ConfigError("verify must be on or off");
  }
  m.verify = verify == "on";
  m.gen.validate();
  return m;
}

RunManifest load_manifest(const std::string& path) {
  return manifest_from_kv(KeyValueFile::load(path));
}

std::vector<RunPoint> expand_sweep(const RunManifest& m) {
  std::vector<std::uint64_t> values = m.sweep_values;
  if (m.sweep == SweepAxis::kNone) {
    values = {0};
  }
  std::vector<RunPoint> out;
  for (const auto v : values) {
    RunPoint p;
    p.sweep_value = v;
    p.config = m.config;
    if (m.sweep == SweepAxis::kNodes) {
      p.config.nodes = generated_nodes(m.host, m.base_port, static_cast<std::uint32_t>(v));
      if (p.config.sink_id >= v) {
        p.config.sink_id = 0;
      }
    } else if (m.sweep == SweepAxis::kTableSize) {
      p.config.partition_size_r = v;
      p.config.partition_size_s = v;
    } else if (m.sweep == SweepAxis::kComputeThreads) {
      p.config.n_compute = static_cast<std::uint32_t>(v);
    }
    const auto n = p.config.num_nodes();
    if (m.sweep != SweepAxis::kTableSize) {
      if (m.total_tuples_r > 0) {
        p.config.partition_size_r = m.total_tuples_r / n;
      }
      if (m.total_tuples_s > 0) {
        p.config.partition_size_s = m.total_tuples_s / n;
      }
    }
    p.config.validate();
    p.gen_r = m.gen;
    p.gen_r.tuples = p.config.partition_size_r;
    p.gen_s = m.gen;
    p.gen_s.tuples = p.config.partition_size_s;
    out.push_back(std::move(p));
  }
  return out;
}

GeneratedData generate_cluster_data(const ClusterConfig& config, const GenSpec& gen_r,
                                    const GenSpec& gen_s) {
  GeneratedData d;
  for (NodeId i = 0; i < config.num_nodes(); ++i) {
    d.r.push_back(generate_partition(gen_r, TableId::kR, i));
    d.s.push_back(generate_partition(gen_s, TableId::kS, i));
  }
  return d;
}

void write_cluster_data(const GeneratedData& data, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir + ": " + ec.message());
  }
  for (const auto& p : data.r) {
    write_partition((fs::path(dir) / partition_file_name(TableId::kR, p.node_id)).string(), p);
  }
  for (const auto& p : data.s) {
    write_partition((fs::path(dir) / partition_file_name(TableId::kS, p.node_id)).string(), p);
  }
}

std::uint64_t result_checksum(std::span<const ResultEntry> entries) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t sum = 0;
  for (const auto& e : entries) {
    sum += mix(mix(mix(e.r_key) ^ e.s_key) ^ e.source);
  }
  return sum;
}

void write_run_metrics_csv(std::ostream& out, const ClusterMetrics& metrics,
                           std::optional<double> speedup) {
  const auto& cols = load_report_columns();
  for (const auto& c : cols) {
    out << c << ',';
  }
  out << "speedup\n";
  for (const auto& r : metrics.nodes) {
    for (const auto& cell : load_report_row(r)) {
      out << cell << ',';
    }
    out << '\n';
  }
  // Summary row: node_id "summary", the cluster span in join_span_ns.
  out << "summary";
  for (std::size_t i = 1; i < cols.size(); ++i) {
    out << ',';
    if (cols[i] == "join_span_ns" || cols[i] == "cluster_join_span_ns") {
      out << metrics.cluster_join_span_ns;
    }
  }
  out << ',';
  if (speedup) {
    out << *speedup;
  }
  out << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "sweep_value,node,compute_ns,send_ns,recv_ns,span_ns,gain,speedup,status\n";
  for (const auto& r : rows) {
    out << r.sweep_value << ',';
    if (r.node) {
      out << *r.node;
    } else {
      out << "cluster";
    }
    out << ',' << r.compute_ns << ',' << r.send_ns << ',' << r.recv_ns << ',' << r.span_ns << ',';
    if (r.gain) {
      out << std::setprecision(6) << *r.gain;
    }
    out << ',';
    if (r.speedup) {
      out << std::setprecision(6) << *r.speedup;
    }
    out << ',' << (r.failed ? "failed" : "ok") << '\n';
  }
}

std::vector<SummaryRow> summarize_point(std::uint64_t sweep_value, const ClusterMetrics& m,
                                        std::optional<std::uint64_t> baseline_span) {
  std::optional<double> su;
  if (baseline_span && *baseline_span > 0 && m.cluster_join_span_ns > 0) {
    su = speedup(static_cast<double>(*baseline_span), static_cast<double>(m.cluster_join_span_ns));
  }
  std::vector<SummaryRow> rows;
  SummaryRow cluster;
  cluster.sweep_value = sweep_value;
  cluster.span_ns = m.cluster_join_span_ns;
  cluster.speedup = su;
  for (const auto& r : m.nodes) {
    SummaryRow row;
    row.sweep_value = sweep_value;
    row.node = r.node_id;
    row.compute_ns = r.compute_time_ns;
    row.send_ns = r.send_time_ns;
    row.recv_ns = r.recv_time_ns;
    row.span_ns = r.join_span_ns;
    if (r.join_span_ns > 0) {
      row.gain = intra_node_gain(r);
    }
    row.speedup = su;
    cluster.compute_ns += r.compute_time_ns;
    cluster.send_ns += r.send_time_ns;
    cluster.recv_ns += r.recv_time_ns;
    rows.push_back(row);
  }
  rows.push_back(cluster);
  return rows;
}

namespace {

struct Child {
  pid_t pid = -1;
  int status = -1;
  bool done = false;
};

pid_t spawn(const std::vector<std::string>& argv, const std::string& log_path) {
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log_path.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  std::vector<char*> args;
  for (const auto& a : argv) {
    args.push_back(const_cast<char*>(a.c_str()));
  }
  args.push_back(nullptr);
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, argv[0].c_str(), &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) {
    throw IoError("cannot launch " + argv[0] + ": " + std::strerror(rc));
  }
  return pid;
}

// Waits for every child; kills the lot once the timeout passes.
bool wait_children(std::vector<Child>& children, std::chrono::seconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  bool timed_out = false;
  for (;;) {
    bool all_done = true;
    for (auto& c : children) {
      if (c.done) {
        continue;
      }
      int status = 0;
      const pid_t r = waitpid(c.pid, &status, WNOHANG);
      if (r == c.pid) {
        c.done = true;
        c.status = status;
      } else {
        all_done = false;
      }
    }
    if (all_done) {
      return !timed_out;
    }
    if (!timed_out && std::chrono::steady_clock::now() > deadline) {
      timed_out = true;
      for (auto& c : children) {
        if (!c.done) {
          kill(c.pid, SIGKILL);
        }
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

std::optional<std::uint64_t> read_checksum(const std::string& path) {
  std::ifstream in(path);
  std::string key;
  std::string value;
  while (in >> key >> value) {
    if (key == "checksum") {
      return std::stoull(value, nullptr, 16);
    }
  }
  return std::nullopt;
}

} // namespace

int orchestrate(const RunManifest& m, const std::string& self_exe, std::ostream& log) {
  const auto points = expand_sweep(m);
  std::error_code ec;
  fs::create_directories(m.output_dir, ec);
  if (ec) {
    throw IoError("cannot create " + m.output_dir + ": " + ec.message());
  }
  std::vector<SummaryRow> rows;
  std::optional<std::uint64_t> first_span;
  int rc = 0;
  for (std::size_t idx = 0; idx < points.size(); ++idx) {
    const auto& pt = points[idx];
    const auto n = pt.config.num_nodes();
    const fs::path run_dir =
        fs::path(m.output_dir) /
        ("run_" + std::to_string(idx) +
         (m.sweep == SweepAxis::kNone ? "" : "_" + to_string(m.sweep) + "_" + std::to_string(pt.sweep_value)));
    fs::create_directories(run_dir);
    log << "run " << idx << ": " << n << " nodes, |R_i|=" << pt.config.partition_size_r
        << ", |S_i|=" << pt.config.partition_size_s << ", n_c=" << pt.config.n_compute << '\n';

    const auto data = generate_cluster_data(pt.config, pt.gen_r, pt.gen_s);
    write_cluster_data(data, (run_dir / "data").string());
    KeyValueFile kv;
    config_to_kv(pt.config, kv);
    kv.set("data_dir", (run_dir / "data").string());
    kv.set("engine", to_string(m.engine));
    const auto cfg_path = (run_dir / "cluster.cfg").string();
    {
      std::ofstream out(cfg_path);
      out << kv.render();
      if (!out) {
        throw IoError("cannot write " + cfg_path);
      }
    }

    std::vector<Child> children(n);
    for (NodeId i = 0; i < n; ++i) {
      std::vector<std::string> argv = {self_exe, "node", "--config", cfg_path, "--id",
                                       std::to_string(i), "--report",
                                       (run_dir / ("report_" + std::to_string(i) + ".csv")).string()};
      if (pt.config.is_sink(i)) {
        argv.push_back("--summary");
        argv.push_back((run_dir / "result_summary.txt").string());
      }
      children[i].pid = spawn(argv, (run_dir / ("node_" + std::to_string(i) + ".log")).string());
    }
    const bool in_time = wait_children(children, m.run_timeout);
    bool ok = in_time;
    for (NodeId i = 0; i < n; ++i) {
      const auto st = children[i].status;
      if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) {
        ok = false;
        log << "  node " << i << " failed (status " << (WIFEXITED(st) ? WEXITSTATUS(st) : -1)
            << "), see " << (run_dir / ("node_" + std::to_string(i) + ".log")).string() << '\n';
      }
    }
    if (!in_time) {
      log << "  run timed out after " << m.run_timeout.count() << " s\n";
    }

    ClusterMetrics metrics;
    if (ok) {
      for (NodeId i = 0; i < n; ++i) {
        std::ifstream in(run_dir / ("report_" + std::to_string(i) + ".csv"));
        auto reports = read_load_report_csv(in);
        if (reports.size() != 1) {
          ok = false;
          log << "  node " << i << " wrote no report\n";
          break;
        }
        metrics.nodes.push_back(reports.front());
      }
    }
    if (ok) {
      metrics.cluster_join_span_ns = metrics.nodes[pt.config.sink_id].cluster_join_span_ns;
      if (m.verify) {
        const auto expected = reference_join(data.r, data.s, pt.config.predicate,
                                             ResultLayout::keys_only());
        const auto got = read_checksum((run_dir / "result_summary.txt").string());
        if (!got || *got != result_checksum(expected)) {
          ok = false;
          log << "  result does not match the reference join\n";
        } else {
          log << "  verified " << expected.size() << " result entries\n";
        }
      }
    }
    if (!ok) {
      rc = kExitVerifyFailed;
      SummaryRow failed;
      failed.sweep_value = pt.sweep_value;
      failed.failed = true;
      rows.push_back(failed);
      continue;
    }
    if (!first_span) {
      first_span = metrics.cluster_join_span_ns;
    }
    auto point_rows = summarize_point(pt.sweep_value, metrics, first_span);
    {
      std::ofstream out(run_dir / "metrics.csv");
      write_run_metrics_csv(out, metrics, point_rows.back().speedup);
    }
    log << "  cluster span " << metrics.cluster_join_span_ns / 1e6 << " ms\n";
    rows.insert(rows.end(), point_rows.begin(), point_rows.end());
  }
  const auto summary = (fs::path(m.output_dir) / "summary.csv").string();
  std::ofstream out(summary);
  write_summary_csv(out, rows);
  log << "summary written to " << summary << '\n';
  return rc;
}

SimulateReport simulate(const RunManifest& m, const SimulateOptions& options, std::ostream& log) {
  if (options.inject != "" && options.inject != "no-barrier" && options.inject != "drop-bucket") {
    throw ConfigError("unknown injection '" + options.inject +
                      "' (expected no-barrier or drop-bucket)");
  }
  if (options.inject == "no-barrier" && m.config.join_mode == JoinMode::kHashDistribution) {
    throw ConfigError("the no-barrier mutation is only defined for broadcast mode");
  }
  const auto layout = ResultLayout::for_config(m.config);
  SimulateReport report;
  for (std::uint32_t s = 0; s < options.seeds; ++s) {
    GenSpec gen_r = m.gen;
    gen_r.seed = m.gen.seed + s;
    gen_r.tuples = m.config.partition_size_r;
    GenSpec gen_s = gen_r;
    gen_s.tuples = m.config.partition_size_s;
    const auto data = generate_cluster_data(m.config, gen_r, gen_s);
    const auto expected = reference_join(data.r, data.s, m.config.predicate, layout);

    SimOptions so;
    so.engine = m.engine;
    so.seed = s;
    so.jitter_probability = options.jitter;
    so.watchdog = options.watchdog;
    if (!options.dump_dir.empty()) {
      fs::create_directories(options.dump_dir);
      so.dump_path = (fs::path(options.dump_dir) / ("seed_" + std::to_string(s) + ".jsonl")).string();
    }
    if (options.inject == "no-barrier") {
      so.hooks.skip_local_barrier = true;
      so.hooks.merge_delay_us = 2000;
    } else if (options.inject == "drop-bucket" && !expected.empty()) {
      so.hooks.drop_bucket = hash_key(expected.front().r_key, m.config.num_buckets);
    }

    const auto res = run_sim(m.config, data.r, data.s, so);
    ++report.runs;
    bool failed = false;
    std::ostringstream why;
    if (res.deadlock) {
      ++report.deadlocks;
      failed = true;
      why << " deadlock;";
    } else if (!res.error.empty()) {
      failed = true;
      why << " error: " << res.error << ";";
    }
    if (!res.violations.empty()) {
      ++report.violations;
      failed = true;
      why << ' ' << res.violations.size() << " trace violations (first: " << res.violations.front()
          << ");";
    }
    if (res.error.empty()) {
      const auto got = res.sink_entries(m.config.sink_id);
      if (got != expected) {
        ++report.mismatches;
        failed = true;
        why << " result mismatch: " << got.size() << " entries, expected " << expected.size() << ';';
      }
    }
    if (failed) {
      ++report.failures;
      log << "seed " << s << ":" << why.str() << '\n';
    }
  }
  log << report.runs << " runs, " << report.failures << " failed (" << report.deadlocks
      << " deadlocks, " << report.violations << " with trace violations, " << report.mismatches
      << " result mismatches)\n";
  return report;
}

} // namespace shardjoin
