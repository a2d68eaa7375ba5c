#pragma once

#include <utility>
#include <vector>

#include "shardjoin/config.hpp"
#include "shardjoin/events.hpp"
#include "shardjoin/relation.hpp"
#include "shardjoin/wire.hpp"

namespace shardjoin {

struct RingPeers {
  NodeId receiver = 0;
  NodeId sender = 0;

  bool operator==(const RingPeers&) const = default;
};

// Phase k of the ring: send to (i + k) % n, receive from (i - k + n) % n.
RingPeers ring_peers(NodeId node_id, std::uint32_t k, std::uint32_t n);

// PARTITION_READY records in clockwise order: (i+1)%N first, (i-1+N)%N last.
std::vector<SendRecord> shuffle_schedule(NodeId node_id, const ClusterConfig& config);

// What node `receiver` gets from this node. Broadcast ships every bucket of
// R; hash distribution ships the receiver's pinned buckets of R and then S.
std::vector<PartitionSection> select_content(JoinMode mode, NodeId receiver, const HashTable& r,
                                             const HashTable& s, const ClusterConfig& config);

} // namespace shardjoin
