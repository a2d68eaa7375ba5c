#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shardjoin/common.hpp"

namespace shardjoin {

enum class JoinMode { kBroadcast, kHashDistribution };

enum class PredicateKind { kEquality, kBand, kLessThan };

// Join predicate over (R.key, S.key).
struct Predicate {
  PredicateKind kind = PredicateKind::kEquality;
  Key epsilon = 0; // band only: |r - s| <= epsilon

  static Predicate equality() { return {}; }
  static Predicate band(Key eps) { return {PredicateKind::kBand, eps}; }
  static Predicate less_than() { return {PredicateKind::kLessThan, 0}; }

  bool matches(Key r, Key s) const {
    switch (kind) {
      case PredicateKind::kEquality: return r == s;
      case PredicateKind::kBand: return (r > s ? r - s : s - r) <= epsilon;
      case PredicateKind::kLessThan: return r < s;
    }
    return false;
  }

  bool operator==(const Predicate&) const = default;
};

std::string to_string(const Predicate& p);
Predicate parse_predicate(const std::string& text);
std::string to_string(JoinMode m);
JoinMode parse_join_mode(const std::string& text);

struct Endpoint {
  std::string ip = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return ip + ":" + std::to_string(port); }
  bool operator==(const Endpoint&) const = default;
  auto operator<=>(const Endpoint&) const = default;
};

struct NodeAddress {
  NodeId id = 0;
  Endpoint endpoint;
};

enum class ResultPayload { kKeys, kFull };

struct ClusterConfig {
  std::vector<NodeAddress> nodes;
  NodeId sink_id = 0;
  std::uint32_t n_compute = 2;
  std::uint32_t n_send = 1;
  std::uint32_t n_recv = 1;
  std::uint32_t num_buckets = 1200;
  std::uint64_t partition_size_r = 400000;
  std::uint64_t partition_size_s = 400000;
  Key domain = 800000;
  std::uint32_t tuple_size = 128;
  std::uint32_t page_size = 8192;
  // 0 selects the default of 4x the R partition's byte size.
  std::uint64_t pool_capacity = 0;
  std::uint32_t queue_capacity = 1024;
  JoinMode join_mode = JoinMode::kBroadcast;
  Predicate predicate;
  ResultPayload result_payload = ResultPayload::kKeys;
  std::uint32_t retry_initial_ms = 50;
  std::uint32_t retry_attempts = 10;
  bool trace = true;

  std::uint32_t num_nodes() const { return static_cast<std::uint32_t>(nodes.size()); }
  const Endpoint& endpoint(NodeId id) const { return nodes.at(id).endpoint; }
  bool is_sink(NodeId id) const { return id == sink_id; }
  std::uint64_t effective_pool_capacity() const;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;

  // Splits n_com communication threads evenly, minimum one each way.
  void set_comm_threads(std::uint32_t n_com);

  // Localhost cluster of n nodes on consecutive ports.
  static ClusterConfig localhost(std::uint32_t n, std::uint16_t base_port);
};

// Key-value text file: `key = value` per line, `#` comments, repeated keys
// allowed (values kept in order). Used for node configs and run manifests.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  const std::vector<std::string>& all(const std::string& key) const;
  std::vector<std::string> keys() const;
  const std::string& origin() const { return origin_; }

  void set(const std::string& key, const std::string& value) { values_[key] = {value}; }
  void add(const std::string& key, const std::string& value) { values_[key].push_back(value); }
  std::string render() const;

 private:
  std::string origin_;
  std::map<std::string, std::vector<std::string>> values_;
};

// Reads ClusterConfig keys from a parsed file. Unknown keys are left for
// the caller (manifests carry extra keys).
ClusterConfig config_from_kv(const KeyValueFile& kv);
void config_to_kv(const ClusterConfig& config, KeyValueFile& kv);
ClusterConfig load_config(const std::string& path);

} // namespace shardjoin
