#include "shardjoin/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace shardjoin {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return "";
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + text + "'");
  }
  return value;
}

std::uint32_t parse_u32(const std::string& key, const std::string& text) {
  const auto v = parse_u64(key, text);
  if (v > 0xFFFFFFFFULL) {
    throw ConfigError("key '" + key + "': value " + text + " out of range");
  }
  return static_cast<std::uint32_t>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "on" || text == "true" || text == "1" || text == "yes") {
    return true;
  }
  if (text == "off" || text == "false" || text == "0" || text == "no") {
    return false;
  }
  throw ConfigError("key '" + key + "': expected on/off, got '" + text + "'");
}

} // namespace

std::string to_string(const Predicate& p) {
  switch (p.kind) {
    case PredicateKind::kEquality: return "equality";
    case PredicateKind::kBand: return "band:" + std::to_string(p.epsilon);
    case PredicateKind::kLessThan: return "less_than";
  }
  return "equality";
}

Predicate parse_predicate(const std::string& text) {
  if (text == "equality") {
    return Predicate::equality();
  }
  if (text == "less_than") {
    return Predicate::less_than();
  }
  if (text.rfind("band:", 0) == 0) {
    return Predicate::band(parse_u64("predicate", text.substr(5)));
  }
  throw ConfigError("unknown predicate '" + text + "' (equality | band:<eps> | less_than)");
}

std::string to_string(JoinMode m) {
  return m == JoinMode::kBroadcast ? "broadcast" : "hash";
}

JoinMode parse_join_mode(const std::string& text) {
  if (text == "broadcast") {
    return JoinMode::kBroadcast;
  }
  if (text == "hash" || text == "hash-distribution") {
    return JoinMode::kHashDistribution;
  }
  throw ConfigError("unknown join mode '" + text + "' (broadcast | hash)");
}

std::uint64_t ClusterConfig::effective_pool_capacity() const {
  if (pool_capacity != 0) {
    return pool_capacity;
  }
  return 4 * partition_size_r * tuple_size;
}

void ClusterConfig::validate() const {
  if (nodes.empty()) {
    throw ConfigError("cluster has no nodes");
  }
  std::set<Endpoint> endpoints;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != i) {
      throw ConfigError("node ids must be 0..N-1 in order; position " + std::to_string(i) +
                        " holds id " + std::to_string(nodes[i].id));
    }
    if (!endpoints.insert(nodes[i].endpoint).second) {
      throw ConfigError("duplicate endpoint " + nodes[i].endpoint.str());
    }
  }
  if (sink_id >= nodes.size()) {
    throw ConfigError("sink " + std::to_string(sink_id) + " is not a node id");
  }
  if (n_compute < 1 || n_send < 1 || n_recv < 1) {
    throw ConfigError("need at least one compute, send and receive thread");
  }
  if (num_buckets < 1) {
    throw ConfigError("num_buckets must be positive");
  }
  if (tuple_size < 8) {
    throw ConfigError("tuple_size must be at least 8 (the key)");
  }
  if (domain < 1) {
    throw ConfigError("domain must be positive");
  }
  if (queue_capacity < 1) {
    throw ConfigError("queue_capacity must be positive");
  }
  const std::uint32_t entry =
      20 + (result_payload == ResultPayload::kFull ? 2 * (tuple_size - 8) : 0);
  if (page_size < entry) {
    throw ConfigError("page_size " + std::to_string(page_size) +
                      " cannot hold one result entry of " + std::to_string(entry) + " bytes");
  }
  if (join_mode == JoinMode::kHashDistribution) {
    if (predicate.kind != PredicateKind::kEquality) {
      throw ConfigError("hash distribution requires the equality predicate");
    }
    if (num_buckets < nodes.size()) {
      throw ConfigError("hash distribution needs num_buckets >= number of nodes");
    }
  }
}

void ClusterConfig::set_comm_threads(std::uint32_t n_com) {
  n_send = std::max<std::uint32_t>(1, n_com / 2);
  n_recv = std::max<std::uint32_t>(1, n_com - n_com / 2);
}

ClusterConfig ClusterConfig::localhost(std::uint32_t n, std::uint16_t base_port) {
  ClusterConfig c;
  for (std::uint32_t i = 0; i < n; ++i) {
    c.nodes.push_back({i, Endpoint{"127.0.0.1", static_cast<std::uint16_t>(base_port + i)}});
  }
  return c;
}

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    kv.values_[key].push_back(value);
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) {
    return std::nullopt;
  }
  if (it->second.size() > 1) {
    throw ConfigError(origin_ + ": key '" + key + "' given more than once");
  }
  return it->second.front();
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

std::uint64_t KeyValueFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_u64(key, *v) : fallback;
}

const std::vector<std::string>& KeyValueFile::all(const std::string& key) const {
  static const std::vector<std::string> kEmpty;
  auto it = values_.find(key);
  return it == values_.end() ? kEmpty : it->second;
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    out.push_back(k);
  }
  return out;
}

std::string KeyValueFile::render() const {
  std::ostringstream out;
  for (const auto& [k, vs] : values_) {
    for (const auto& v : vs) {
      out << k << " = " << v << "\n";
    }
  }
  return out.str();
}

ClusterConfig config_from_kv(const KeyValueFile& kv) {
  ClusterConfig c;
  for (const auto& line : kv.all("node")) {
    std::istringstream in(line);
    std::string id, ip, port;
    if (!(in >> id >> ip >> port)) {
      throw ConfigError("node entry '" + line + "': expected '<id> <ip> <port>'");
    }
    const auto p = parse_u64("node", port);
    if (p == 0 || p > 65535) {
      throw ConfigError("node entry '" + line + "': port out of range");
    }
    c.nodes.push_back({parse_u32("node", id), Endpoint{ip, static_cast<std::uint16_t>(p)}});
  }
  std::sort(c.nodes.begin(), c.nodes.end(),
            [](const NodeAddress& a, const NodeAddress& b) { return a.id < b.id; });

  auto u32 = [&](const char* key, std::uint32_t& field) {
    if (auto v = kv.get(key)) {
      field = parse_u32(key, *v);
    }
  };
  auto u64 = [&](const char* key, std::uint64_t& field) {
    if (auto v = kv.get(key)) {
      field = parse_u64(key, *v);
    }
  };
  u32("sink", c.sink_id);
  u32("compute_threads", c.n_compute);
  if (auto v = kv.get("comm_threads")) {
    c.set_comm_threads(parse_u32("comm_threads", *v));
  }
  u32("send_threads", c.n_send);
  u32("recv_threads", c.n_recv);
  u32("num_buckets", c.num_buckets);
  u64("partition_size_r", c.partition_size_r);
  u64("partition_size_s", c.partition_size_s);
  u64("domain", c.domain);
  u32("tuple_size", c.tuple_size);
  u32("page_size", c.page_size);
  u64("pool_capacity", c.pool_capacity);
  u32("queue_capacity", c.queue_capacity);
  u32("retry_initial_ms", c.retry_initial_ms);
  u32("retry_attempts", c.retry_attempts);
  if (auto v = kv.get("join_mode")) {
    c.join_mode = parse_join_mode(*v);
  }
  if (auto v = kv.get("predicate")) {
    c.predicate = parse_predicate(*v);
  }
  if (auto v = kv.get("result_payload")) {
    if (*v == "keys") {
      c.result_payload = ResultPayload::kKeys;
    } else if (*v == "full") {
      c.result_payload = ResultPayload::kFull;
    } else {
      throw ConfigError("result_payload must be 'keys' or 'full'");
    }
  }
  if (auto v = kv.get("trace")) {
    c.trace = parse_bool("trace", *v);
  }
  return c;
}

void config_to_kv(const ClusterConfig& c, KeyValueFile& kv) {
  for (const auto& n : c.nodes) {
    kv.add("node", std::to_string(n.id) + " " + n.endpoint.ip + " " + std::to_string(n.endpoint.port));
  }
  kv.set("sink", std::to_string(c.sink_id));
  kv.set("compute_threads", std::to_string(c.n_compute));
  kv.set("send_threads", std::to_string(c.n_send));
  kv.set("recv_threads", std::to_string(c.n_recv));
  kv.set("num_buckets", std::to_string(c.num_buckets));
  kv.set("partition_size_r", std::to_string(c.partition_size_r));
  kv.set("partition_size_s", std::to_string(c.partition_size_s));
  kv.set("domain", std::to_string(c.domain));
  kv.set("tuple_size", std::to_string(c.tuple_size));
  kv.set("page_size", std::to_string(c.page_size));
  kv.set("pool_capacity", std::to_string(c.pool_capacity));
  kv.set("queue_capacity", std::to_string(c.queue_capacity));
  kv.set("retry_initial_ms", std::to_string(c.retry_initial_ms));
  kv.set("retry_attempts", std::to_string(c.retry_attempts));
  kv.set("join_mode", to_string(c.join_mode));
  kv.set("predicate", to_string(c.predicate));
  kv.set("result_payload", c.result_payload == ResultPayload::kKeys ? "keys" : "full");
  kv.set("trace", c.trace ? "on" : "off");
}

ClusterConfig load_config(const std::string& path) {
  auto c = config_from_kv(KeyValueFile::load(path));
  c.validate();
  return c;
}

} // namespace shardjoin
