#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <vector>

#include "shardjoin/memory_pool.hpp"
#include "shardjoin/relation.hpp"

namespace shardjoin {

enum class SlotState : std::uint8_t { kAbsent, kResident, kFreed };

// Skeleton of one sender's remote hash table. Buckets are materialized
// from the node's pool as they arrive and released once joined, so the
// frame never holds the whole remote table at once. One frame per
// (sender, table) keeps result lineage without tagging tuples.
class HashTableFrame {
 public:
  HashTableFrame(HtfIndex index, NodeId source, TableId table, std::uint32_t num_buckets,
                 std::uint32_t tuple_size);

  HtfIndex index() const { return index_; }
  NodeId source() const { return source_; }
  TableId table() const { return table_; }
  std::uint32_t num_buckets() const { return static_cast<std::uint32_t>(slots_.size()); }
  std::uint32_t tuple_size() const { return tuple_size_; }

  // absent -> resident. A second arrival for the same bucket is a protocol error.
  void make_resident(BucketIndex b, TupleBlock data, PoolLease lease);
  // Requires a resident bucket; a freed or absent one is a protocol error.
  const TupleBlock& bucket(BucketIndex b) const;
  // resident -> freed, returning its bytes to the pool.
  void free_bucket(BucketIndex b);
  SlotState state(BucketIndex b) const;

  // Completion accounting: one token for the open stream plus one per
  // outstanding bucket. Whoever drops the count to zero frees the frame.
  void add_pending() { pending_.fetch_add(1, std::memory_order_acq_rel); }
  bool finish_bucket() { return pending_.fetch_sub(1, std::memory_order_acq_rel) == 1; }
  bool end_stream() { return pending_.fetch_sub(1, std::memory_order_acq_rel) == 1; }

  // Releases every still-resident bucket. Returns false if already freed.
  bool free_frame();
  bool freed() const { return frame_freed_.load(std::memory_order_acquire); }
  std::uint32_t buckets_received() const { return received_.load(); }
  std::uint32_t buckets_freed() const { return freed_count_.load(); }

 private:
  struct Slot {
    std::atomic<SlotState> state{SlotState::kAbsent};
    TupleBlock data;
    PoolLease lease;
  };

  HtfIndex index_;
  NodeId source_;
  TableId table_;
  std::uint32_t tuple_size_;
  std::vector<Slot> slots_;
  std::atomic<std::int64_t> pending_{1};
  std::atomic<std::uint32_t> received_{0};
  std::atomic<std::uint32_t> freed_count_{0};
  std::atomic<bool> frame_freed_{false};
};

// Index -> frame map for one node. Frames stay addressable after being
// freed so a late JOIN can be diagnosed rather than crash.
class HtfRegistry {
 public:
  HtfIndex create(NodeId source, TableId table, std::uint32_t num_buckets, std::uint32_t tuple_size);
  // Throws ProtocolError for an unknown index or a frame already freed.
  std::shared_ptr<HashTableFrame> get(HtfIndex index) const;
  std::shared_ptr<HashTableFrame> find(HtfIndex index) const;
  std::size_t size() const;
  std::vector<std::shared_ptr<HashTableFrame>> all() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<HashTableFrame>> frames_;
};

} // namespace shardjoin
