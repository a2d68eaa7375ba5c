// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 100).
#include <unistd.h>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "shardjoin/harness.hpp"
#include "shardjoin/join.hpp"
#include "shardjoin/log.hpp"
#include "shardjoin/node.hpp"
#include "shardjoin/sim.hpp"
#include "shardjoin/wire.hpp"
#include "shardjoin/workload.hpp"

using namespace shardjoin;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

// Nested-loop oracle over plain key vectors; shares no code with the engine
// or the library's reference join.
std::vector<ResultEntry> oracle(const std::vector<Partition>& r, const std::vector<Partition>& s,
                                const Predicate& p) {
  std::vector<Key> sk;
  for (const auto& part : s) {
    for (std::size_t j = 0; j < part.size(); ++j) {
      sk.push_back(part.tuples.key(j));
    }
  }
  std::vector<ResultEntry> out;
  for (const auto& part : r) {
    for (std::size_t i = 0; i < part.size(); ++i) {
      const Key rk = part.tuples.key(i);
      for (const Key k : sk) {
        bool hit = false;
        if (p.kind == PredicateKind::kEquality) {
          hit = rk == k;
        } else if (p.kind == PredicateKind::kBand) {
          hit = (rk > k ? rk - k : k - rk) <= p.epsilon;
        } else {
          hit = rk < k;
        }
        if (hit) {
          ResultEntry e;
          e.r_key = rk;
          e.s_key = k;
          e.source = part.node_id;
          out.push_back(e);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

ClusterConfig small_cluster(std::uint32_t n, std::uint32_t nc, std::uint32_t ncom,
                            std::uint32_t tuple_size = 32) {
  auto c = ClusterConfig::localhost(n, 7000);
  c.n_compute = nc;
  c.n_send = ncom;
  c.n_recv = ncom;
  c.num_buckets = 64;
  c.tuple_size = tuple_size;
  c.page_size = 1024;
  c.retry_initial_ms = 5;
  return c;
}

struct Data {
  std::vector<Partition> r;
  std::vector<Partition> s;
};

Data make_data(std::uint64_t seed, std::uint32_t n, std::uint64_t tuples, Key domain,
               std::uint32_t tuple_size) {
  GenSpec g;
  g.seed = seed;
  g.tuples = tuples;
  g.domain = domain;
  g.tuple_size = tuple_size;
  Data d;
  for (NodeId i = 0; i < n; ++i) {
    d.r.push_back(generate_partition(g, TableId::kR, i));
    d.s.push_back(generate_partition(g, TableId::kS, i));
  }
  return d;
}

std::string describe(const SimResult& r) {
  if (!r.error.empty()) {
    return r.error;
  }
  if (r.deadlock) {
    return "deadlock";
  }
  return r.violations.empty() ? "ok" : "trace violation: " + r.violations.front();
}

std::string g_dump_dir;

SimOptions sim_options(std::uint64_t seed, Engine engine = Engine::kBarrierFree) {
  SimOptions o;
  if (!g_dump_dir.empty()) {
    o.dump_path = g_dump_dir + "/" + to_string(engine) + "_" + std::to_string(seed) + ".jsonl";
  }
  o.engine = engine;
  o.seed = seed;
  o.jitter_probability = 0.05;
  o.watchdog = std::chrono::milliseconds(60000);
  return o;
}

// 1. Sink-collected results equal the nested-loop oracle.
Verdict correctness(std::uint32_t seeds) {
  const auto start = Clock::now();
  const std::uint32_t ns[] = {1, 2, 3, 5};
  std::size_t runs = 0;
  std::size_t entries = 0;
  std::mt19937_64 rng(0xC0FFEE);
  for (std::uint32_t seed = 0; seed < seeds; ++seed) {
    const auto n = ns[seed % 4];
    const std::uint64_t tuples = 1000 + rng() % 4001;
    const auto d = make_data(seed, n, tuples, 4 * tuples, 32);
    for (const auto& pred : {Predicate::equality(), Predicate::band(1 + seed % 3)}) {
      auto c = small_cluster(n, 2, 2);
      c.predicate = pred;
      const auto res = run_sim(c, d.r, d.s, sim_options(seed));
      ++runs;
      if (!res.ok()) {
        return {false, "seed " + std::to_string(seed) + " n=" + std::to_string(n) + ": " +
                           describe(res)};
      }
      const auto want = oracle(d.r, d.s, pred);
      if (res.sink_entries(c.sink_id) != want) {
        return {false, "seed " + std::to_string(seed) + " n=" + std::to_string(n) + " " +
                           to_string(pred) + ": result differs from oracle"};
      }
      entries += want.size();
    }
  }
  const double t = seconds_since(start);
  std::ostringstream d;
  d << runs << " runs, " << entries << " entries matched exactly, " << t << " s (limit 120 s)";
  return {t < 120.0, d.str()};
}

// 2. Barrier-free and baseline engines agree.
Verdict equivalence(std::uint32_t seeds) {
  std::size_t entries = 0;
  for (std::uint32_t seed = 0; seed < seeds; ++seed) {
    const auto n = 2 + seed % 4;
    const auto d = make_data(1000 + seed, n, 500 + seed * 13 % 1500, 3000, 32);
    const auto c = small_cluster(n, 2, 2);
    const auto bf = run_sim(c, d.r, d.s, sim_options(seed));
    const auto bl = run_sim(c, d.r, d.s, sim_options(seed, Engine::kBaseline));
    if (!bf.ok() || !bl.ok()) {
      return {false, "seed " + std::to_string(seed) + ": barrier-free " + describe(bf) +
                         ", baseline " + describe(bl)};
    }
    const auto a = bf.sink_entries(c.sink_id);
    if (a != bl.sink_entries(c.sink_id)) {
      return {false, "seed " + std::to_string(seed) + ": engines disagree"};
    }
    entries += a.size();
  }
  return {true, std::to_string(seeds) + " seeds, " + std::to_string(entries) +
                    " entries identical across engines"};
}

// 3. Every trace satisfies the ordering checks, no deadlocks.
Verdict partial_order(std::uint32_t seeds) {
  std::size_t runs = 0;
  for (std::uint32_t seed = 0; seed < seeds; ++seed) {
    for (std::uint32_t n = 2; n <= 5; ++n) {
      const auto d = make_data(2000 + seed * 8 + n, n, 200 + (seed * 7 + n) % 200, 600, 32);
      for (std::uint32_t nc : {1u, 2u}) {
        for (std::uint32_t ncom : {1u, 2u}) {
          const auto c = small_cluster(n, nc, ncom);
          const auto res = run_sim(c, d.r, d.s, sim_options(seed * 100 + n * 10 + nc + ncom));
          ++runs;
          if (res.deadlock) {
            return {false, "deadlock at seed " + std::to_string(seed) + " n=" + std::to_string(n)};
          }
          if (!res.error.empty()) {
            return {false, res.error};
          }
          if (!res.violations.empty()) {
            return {false, "seed " + std::to_string(seed) + " n=" + std::to_string(n) + ": " +
                               res.violations.front()};
          }
        }
      }
    }
  }
  return {true, std::to_string(runs) + " traces, 0 violations, 0 deadlocks"};
}

// 4. Payload bytes shipped per node follow |R|(1 - 1/n) * S_tup.
Verdict shuffle_volume() {
  constexpr std::uint64_t kTotal = 50000;
  constexpr std::uint32_t kTuple = 128;
  std::ostringstream d;
  for (std::uint32_t n = 2; n <= 5; ++n) {
    auto c = small_cluster(n, 2, 2, kTuple);
    c.num_buckets = 1200;
    c.page_size = 8192;
    Data data;
    for (NodeId i = 0; i < n; ++i) {
      GenSpec g;
      g.seed = 77;
      g.domain = 100000;
      g.tuple_size = kTuple;
      g.tuples = kTotal / n + (i < kTotal % n ? 1 : 0);
      data.r.push_back(generate_partition(g, TableId::kR, i));
      g.tuples = 100;
      data.s.push_back(generate_partition(g, TableId::kS, i));
    }
    const auto res = run_sim(c, data.r, data.s, sim_options(n));
    if (!res.ok()) {
      return {false, res.error};
    }
    std::uint64_t total_payload = 0;
    for (NodeId i = 0; i < n; ++i) {
      const auto& rep = res.metrics.nodes[i];
      const std::uint64_t want = data.r[i].size() * (n - 1) * kTuple;
      if (rep.payload_bytes_sent != want) {
        return {false, "n=" + std::to_string(n) + " node " + std::to_string(i) + ": payload " +
                           std::to_string(rep.payload_bytes_sent) + " != " + std::to_string(want)};
      }
      // Framing per destination: preamble, one header per non-empty bucket, terminator.
      std::vector<bool> nonempty(c.num_buckets);
      for (std::size_t t = 0; t < data.r[i].size(); ++t) {
        nonempty[hash_key(data.r[i].tuples.key(t), c.num_buckets)] = true;
      }
      const auto frames = std::count(nonempty.begin(), nonempty.end(), true);
      const std::uint64_t framing = (n - 1) * (kPreambleSize + kFrameHeaderSize * (frames + 1));
      if (rep.bytes_sent - rep.payload_bytes_sent != framing) {
        return {false, "n=" + std::to_string(n) + ": framing " +
                           std::to_string(rep.bytes_sent - rep.payload_bytes_sent) + " != " +
                           std::to_string(framing)};
      }
      total_payload += rep.payload_bytes_sent;
    }
    // Mean over nodes equals the formula exactly: n * |R|(1 - 1/n) = |R|(n - 1).
    if (total_payload != kTotal * (n - 1) * kTuple) {
      return {false, "n=" + std::to_string(n) + ": total payload mismatch"};
    }
    d << "n=" << n << ": " << static_cast<double>(total_payload) / n << " B/node ("
      << expected_send_volume(kTotal, n) * kTuple << " expected); ";
  }
  return {true, d.str() + "framing exact"};
}

struct TcpRun {
  std::vector<LoadReport> reports;
  std::string error;
};

TcpRun tcp_cluster(const ClusterConfig& c, const Data& d) {
  const auto n = c.num_nodes();
  std::vector<std::unique_ptr<Transport>> transports;
  std::vector<std::unique_ptr<NodeEngine>> engines;
  for (NodeId i = 0; i < n; ++i) {
    transports.push_back(make_tcp_transport());
    engines.push_back(std::make_unique<NodeEngine>(
        c, i, d.r[i], d.s[i], NodeOptions{transports[i].get(), nullptr, nullptr, {}}));
  }
  TcpRun run;
  run.reports.resize(n);
  std::vector<std::string> errors(n);
  std::vector<std::thread> threads;
  for (NodeId i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        run.reports[i] = engines[i]->run().report;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  for (const auto& e : errors) {
    if (!e.empty() && run.error.empty()) {
      run.error = e;
    }
  }
  return run;
}

std::uint16_t port_base(int slot) {
  return static_cast<std::uint16_t>(30000 + (getpid() % 500) * 50 + slot * 10);
}

// 5. Overlap of computation and communication inside a node.
Verdict intra_node_gain_check() {
  const unsigned hw = std::thread::hardware_concurrency();
  auto measure = [&](std::uint32_t nc, std::uint32_t ncom, int slot, double& gain,
                     std::string& err) {
    auto c = ClusterConfig::localhost(2, port_base(slot));
    c.n_compute = nc;
    c.set_comm_threads(ncom);
    c.partition_size_r = c.partition_size_s = 100000;
    const auto d = make_data(5, 2, 100000, 200000, 128);
    const auto run = tcp_cluster(c, d);
    if (!run.error.empty()) {
      err = run.error;
      return;
    }
    gain = 1e9;
    for (const auto& r : run.reports) {
      gain = std::min(gain, intra_node_gain(r));
    }
  };
  double g22 = 0;
  double g11 = 0;
  std::string err;
  measure(2, 2, 0, g22, err);
  measure(1, 1, 1, g11, err);
  if (!err.empty()) {
    return {false, err};
  }
  std::ostringstream d;
  d << "gain(2,2)=" << g22 << " gain(1,1)=" << g11 << " ratio=" << g22 / g11
    << " (need >= 2.0 and ratio >= 1.5); hardware threads " << hw;
  if (hw < 4) {
    return {false, "precondition unmet (fewer than 4 hardware threads): " + d.str()};
  }
  return {g22 >= 2.0 && g22 >= 1.5 * g11, d.str()};
}

// 6. Fixed 160K total tuples over 1, 2, 4 processes.
Verdict speedup_trend(const std::string& cli) {
  std::ostringstream mf;
  const auto dir = fs::temp_directory_path() / ("sj_accept_" + std::to_string(getpid()));
  mf << "base_port = " << port_base(2) << "\ntotal_tuples_r = 160000\ntotal_tuples_s = 160000\n"
     << "domain = 320000\ntuple_size = 128\nnum_buckets = 1200\ncompute_threads = 2\n"
     << "comm_threads = 2\nsweep = nodes: 1, 2, 4\nrun_timeout_s = 300\noutput_dir = "
     << (dir / "speedup").string() << '\n';
  const auto m = manifest_from_kv(KeyValueFile::parse(mf.str()));
  std::ostringstream log;
  if (orchestrate(m, cli, log) != 0) {
    return {false, "orchestration failed: " + log.str()};
  }
  std::ifstream in(dir / "speedup" / "summary.csv");
  std::string line;
  std::vector<std::pair<std::uint64_t, double>> spans; // nodes, span_ns
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cells.push_back(cell);
    }
    if (cells.size() >= 6 && cells[1] == "cluster") {
      spans.emplace_back(std::stoull(cells[0]), std::stod(cells[5]));
    }
  }
  fs::remove_all(dir);
  if (spans.size() != 3) {
    return {false, "summary has " + std::to_string(spans.size()) + " cluster rows"};
  }
  const bool decreasing = spans[0].second > spans[1].second && spans[1].second > spans[2].second;
  const double s4 = spans[0].second / spans[2].second;
  std::ostringstream d;
  d << "span(1)=" << spans[0].second / 1e6 << " ms span(2)=" << spans[1].second / 1e6
    << " ms span(4)=" << spans[2].second / 1e6 << " ms speedup(4)=" << s4
    << " (need strictly decreasing and >= 2.0); hardware threads "
    << std::thread::hardware_concurrency();
  return {decreasing && s4 >= 2.0, d.str()};
}

// 7. Left side of the compute-thread curve.
Verdict compute_threads() {
  const auto d = make_data(9, 2, 10000, 400000, 64);
  auto span_for = [&](std::uint32_t nc, int slot) {
    std::vector<double> spans;
    for (int rep = 0; rep < 3; ++rep) {
      auto c = ClusterConfig::localhost(2, static_cast<std::uint16_t>(port_base(slot) + rep * 2));
      c.n_compute = nc;
      c.set_comm_threads(2);
      c.tuple_size = 64;
      c.predicate = Predicate::band(20); // every R bucket scans all of S
      const auto run = tcp_cluster(c, d);
      if (!run.error.empty()) {
        return -1.0;
      }
      double s = 0;
      for (const auto& r : run.reports) {
        s = std::max(s, static_cast<double>(r.join_span_ns));
      }
      spans.push_back(s);
    }
    std::sort(spans.begin(), spans.end());
    return spans[1];
  };
  const double s1 = span_for(1, 3);
  const double s2 = span_for(2, 4);
  const double s4 = span_for(4, 0);
  const double s8 = span_for(8, 1);
  if (s1 < 0 || s2 < 0 || s4 < 0 || s8 < 0) {
    return {false, "a run failed"};
  }
  std::ostringstream o;
  o << "median span n_c=1: " << s1 / 1e6 << " ms, n_c=2: " << s2 / 1e6
    << " ms (need n_c=2 < n_c=1); reported n_c=4: " << s4 / 1e6 << " ms, n_c=8: " << s8 / 1e6
    << " ms; hardware threads " << std::thread::hardware_concurrency();
  return {s2 < s1, o.str()};
}

std::vector<std::byte> to_bytes(std::initializer_list<int> v) {
  std::vector<std::byte> out;
  for (int b : v) {
    out.push_back(static_cast<std::byte>(b));
  }
  return out;
}

// 8. Golden encodings and round-trip properties.
Verdict codecs() {
  // Pinned fixture: bucket 2 of 4 holding keys 5, 0x0102030405060708, 5
  // with 8-byte payloads of 0xAA, 0xBB, 0xCC, sent by node 7.
  HashTable t(TableId::kR, 4, 16);
  t.mutable_bucket(2).append(5, std::vector<std::byte>(8, std::byte{0xAA}));
  t.mutable_bucket(2).append(0x0102030405060708ULL, std::vector<std::byte>(8, std::byte{0xBB}));
  t.mutable_bucket(2).append(5, std::vector<std::byte>(8, std::byte{0xCC}));
  BufferConnection conn;
  write_partition_section(conn, PartitionSection{&t, {}, true}, 7);
  auto want = to_bytes({'S', 'J', 'W', '1', 1, 7, 0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0, 16, 0, 0, 0,
                        2, 0, 0, 0, 3, 0, 0, 0, 5, 0, 0, 0, 0, 0, 0, 0});
  for (int i = 0; i < 8; ++i) want.push_back(std::byte{0xAA});
  for (int b : {8, 7, 6, 5, 4, 3, 2, 1}) want.push_back(static_cast<std::byte>(b));
  for (int i = 0; i < 8; ++i) want.push_back(std::byte{0xBB});
  for (int b : {5, 0, 0, 0, 0, 0, 0, 0}) want.push_back(static_cast<std::byte>(b));
  for (int i = 0; i < 8; ++i) want.push_back(std::byte{0xCC});
  for (int b : {0xFF, 0xFF, 0xFF, 0xFF, 0, 0, 0, 0}) want.push_back(static_cast<std::byte>(b));
  if (conn.output() != want) {
    return {false, "partition frame golden bytes differ"};
  }

  const auto layout = ResultLayout::keys_only();
  ResultBlock block(64, layout.entry_size);
  layout.encode(block.append_slot(), ResultEntry{9, 10, 2, {}, {}});
  BufferConnection rconn({kAckByte});
  send_result_stream(rconn, 4, layout, std::vector<ResultBlock>{block});
  const auto rwant = to_bytes({'S', 'J', 'W', '1', 2, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 20, 0, 0,
                               0, 1, 0, 0, 0, 1, 0, 0, 0, 9, 0, 0, 0, 0, 0, 0, 0, 10, 0, 0, 0, 0,
                               0, 0, 0, 2, 0, 0, 0});
  if (rconn.output() != rwant) {
    return {false, "result stream golden bytes differ"};
  }

  const auto dir = fs::temp_directory_path() / ("sj_accept_codec_" + std::to_string(getpid()));
  fs::create_directories(dir);
  {
    Partition p;
    p.table_id = TableId::kS;
    p.node_id = 2;
    p.domain = 100;
    p.tuples = TupleBlock(16);
    p.tuples.append(7, std::vector<std::byte>(8, std::byte{0x11}));
    write_partition((dir / "golden.sjpt").string(), p);
    std::ifstream in(dir / "golden.sjpt", std::ios::binary);
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::vector<char> fwant = {'S', 'J', 'P', 'T', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0,
                                     1,   0,   0,   0,   0, 0, 0, 0, 16, 0, 0, 0, 100, 0, 0, 0,
                                     0,   0,   0,   0,   7, 0, 0, 0, 0, 0, 0, 0, 0x11, 0x11, 0x11,
                                     0x11, 0x11, 0x11, 0x11, 0x11};
    if (raw != fwant) {
      return {false, "partition file golden bytes differ"};
    }
  }

  std::mt19937_64 rng(8);
  int cases = 0;
  for (int i = 0; i < 1000; ++i, ++cases) {
    const std::uint32_t nb = 1 + rng() % 16;
    const std::uint32_t ts = 8 + static_cast<std::uint32_t>(rng() % 4) * 8;
    HashTable h(rng() % 2 ? TableId::kR : TableId::kS, nb, ts);
    for (int k = static_cast<int>(rng() % 30); k > 0; --k) {
      std::vector<std::byte> pl(ts - 8);
      for (auto& b : pl) b = static_cast<std::byte>(rng());
      const Key key = rng();
      h.mutable_bucket(hash_key(key, nb)).append(key, pl);
    }
    BufferConnection out;
    write_partition_section(out, PartitionSection{&h, {}, true}, static_cast<NodeId>(rng() % 9));
    BufferConnection in(out.output());
    const auto pre = read_preamble(in);
    MemoryPool pool(1 << 20);
    HtfRegistry reg;
    bool same = true;
    std::size_t got = 0;
    recv_partition_section(in, pre, pool, reg, [&](HashTableFrame& f, BucketIndex b) {
      same = same && f.bucket(b) == h.bucket(b);
      ++got;
    });
    std::size_t resident = 0;
    for (BucketIndex b = 0; b < nb; ++b) {
      resident += !h.bucket(b).empty();
    }
    if (!same || in.remaining() != 0 || got != resident) {
      return {false, "partition section round trip failed at case " + std::to_string(i)};
    }
  }
  for (int i = 0; i < 1000; ++i, ++cases) {
    const auto lay = rng() % 2 ? ResultLayout::full(24) : ResultLayout::keys_only();
    std::vector<ResultBlock> blocks;
    std::vector<ResultEntry> entries;
    for (int b = static_cast<int>(rng() % 4); b > 0; --b) {
      ResultBlock blk(lay.entry_size * 6, lay.entry_size);
      for (int k = 1 + static_cast<int>(rng() % 6); k > 0; --k) {
        ResultEntry e{rng(), rng(), static_cast<NodeId>(rng() % 50), {}, {}};
        if (lay.payload_size) {
          e.r_payload.assign(lay.payload_size, static_cast<std::byte>(rng()));
          e.s_payload.assign(lay.payload_size, static_cast<std::byte>(rng()));
        }
        lay.encode(blk.append_slot(), e);
        entries.push_back(e);
      }
      blocks.push_back(blk);
    }
    BufferConnection out({kAckByte});
    send_result_stream(out, 1, lay, blocks);
    BufferConnection in(out.output());
    const auto pre = read_preamble(in);
    std::vector<ResultEntry> back;
    for (const auto& b : recv_result_stream(in, pre)) {
      const auto e = decode_block(b, lay);
      back.insert(back.end(), e.begin(), e.end());
    }
    if (back != entries) {
      return {false, "result stream round trip failed at case " + std::to_string(i)};
    }
  }
  for (int i = 0; i < 1000; ++i, ++cases) {
    GenSpec g;
    g.seed = rng();
    g.tuples = rng() % 40;
    g.domain = 1 + rng() % 500;
    g.tuple_size = 8 + static_cast<std::uint32_t>(rng() % 4) * 8;
    const auto p = generate_partition(g, rng() % 2 ? TableId::kR : TableId::kS,
                                      static_cast<NodeId>(rng() % 6));
    const auto path = (dir / "p.sjpt").string();
    write_partition(path, p);
    if (!(read_partition(path) == p)) {
      return {false, "partition file round trip failed at case " + std::to_string(i)};
    }
  }
  fs::remove_all(dir);
  return {true, "3 golden fixtures byte-exact; " + std::to_string(cases) +
                    " round-trip cases (1000 each: partition stream, result stream, partition file)"};
}

// 9. Tiny pool plus a slow compute thread: completes, and blocking is visible.
Verdict backpressure() {
  const auto d = make_data(90, 3, 3000, 6000, 64);
  auto c = small_cluster(3, 1, 2, 64);
  c.num_buckets = 16;
  std::uint64_t biggest = 0;
  for (const auto& p : d.r) {
    const auto h = build_hash_table(p, c.num_buckets);
    for (BucketIndex b = 0; b < c.num_buckets; ++b) {
      biggest = std::max<std::uint64_t>(biggest, h.bucket(b).byte_size());
    }
  }
  c.pool_capacity = 2 * biggest;
  auto o = sim_options(9);
  o.hooks.compute_delay_us = 500;
  const auto res = run_sim(c, d.r, d.s, o);
  if (!res.ok()) {
    return {false, describe(res)};
  }
  if (res.sink_entries(0) != oracle(d.r, d.s, c.predicate)) {
    return {false, "result differs from oracle under backpressure"};
  }
  std::uint64_t blocked = 0;
  std::uint64_t acquires = 0;
  for (const auto& r : res.metrics.nodes) {
    blocked += r.pool_block_ns;
    acquires += r.pool_blocked_acquires;
  }
  std::ostringstream s;
  s << "pool " << c.pool_capacity << " B (2 buckets), completed; receive-block time "
    << blocked / 1e6 << " ms over " << acquires << " blocked acquires";
  return {blocked > 0, s.str()};
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::uint32_t seeds = 100;
  std::string cli = SHARDJOIN_CLI_PATH;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--seeds", seeds, "Seeds for criteria 1-3");
  app.add_option("--dump", g_dump_dir, "Directory for traces of failing simulator runs");
  app.add_option("--cli", cli, "shardjoin executable for process-level runs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"correctness vs oracle", [&] { return correctness(seeds); }},
      {"engine equivalence", [&] { return equivalence(seeds); }},
      {"protocol partial order", [&] { return partial_order(seeds); }},
      {"shuffle-volume formula", [] { return shuffle_volume(); }},
      {"intra-node gain", [] { return intra_node_gain_check(); }},
      {"speedup trend", [&] { return speedup_trend(cli); }},
      {"compute-thread sweep", [] { return compute_threads(); }},
      {"codec and file-format golden tests", [] { return codecs(); }},
      {"backpressure liveness", [] { return backpressure(); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) {
      continue;
    }
    const auto start = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
              << "): " << v.detail << " [" << seconds_since(start) << " s]" << std::endl;
  }
  return std::min(failed, 100);
}
