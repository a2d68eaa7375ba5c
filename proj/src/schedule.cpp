#include "shardjoin/schedule.hpp"

namespace shardjoin {

RingPeers ring_peers(NodeId node_id, std::uint32_t k, std::uint32_t n) {
  if (n == 0 || node_id >= n) {
    throw ConfigError("ring_peers: node " + std::to_string(node_id) + " outside ring of " +
                      std::to_string(n));
  }
  return {(node_id + k) % n, (node_id + n - k % n) % n};
}

std::vector<SendRecord> shuffle_schedule(NodeId node_id, const ClusterConfig& config) {
  const auto n = config.num_nodes();
  std::vector<SendRecord> out;
  for (std::uint32_t k = 1; k < n; ++k) {
    const NodeId d = ring_peers(node_id, k, n).receiver;
    out.push_back({CommEvent::kPartitionReady, d, config.endpoint(d), config.is_sink(d)});
  }
  return out;
}

std::vector<PartitionSection> select_content(JoinMode mode, NodeId receiver, const HashTable& r,
                                             const HashTable& s, const ClusterConfig& config) {
  if (mode == JoinMode::kBroadcast) {
    return {PartitionSection{&r, {}, true}};
  }
  auto pinned = assign_buckets(receiver, config.num_nodes(), r.num_buckets());
  return {PartitionSection{&r, pinned, false}, PartitionSection{&s, std::move(pinned), false}};
}

} // namespace shardjoin
