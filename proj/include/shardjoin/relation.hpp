#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shardjoin/common.hpp"

namespace shardjoin {

constexpr std::uint32_t kKeyBytes = 8;
constexpr std::uint32_t kDefaultTupleSize = 128;

// Tuple as a standalone value. Inside the engine tuples live packed in
// TupleBlocks; this type is for construction and inspection.
struct Tuple {
  Key key = 0;
  std::vector<std::byte> payload; // tuple_size - 8 bytes

  bool operator==(const Tuple&) const = default;
};

// Packed run of fixed-size tuples: key (u64 little-endian) then payload.
// This is also the exact byte layout of a bucket on the wire and on disk.
class TupleBlock {
 public:
  explicit TupleBlock(std::uint32_t tuple_size = kDefaultTupleSize);

  std::uint32_t tuple_size() const { return tuple_size_; }
  std::size_t size() const { return bytes_.size() / tuple_size_; }
  bool empty() const { return bytes_.empty(); }
  std::size_t byte_size() const { return bytes_.size(); }

  Key key(std::size_t i) const { return load_le<Key>(bytes_.data() + i * tuple_size_); }
  std::span<const std::byte> tuple_bytes(std::size_t i) const {
    return {bytes_.data() + i * tuple_size_, tuple_size_};
  }
  std::span<const std::byte> payload(std::size_t i) const {
    return {bytes_.data() + i * tuple_size_ + kKeyBytes, tuple_size_ - kKeyBytes};
  }
  Tuple tuple(std::size_t i) const;

  void reserve(std::size_t tuples) { bytes_.reserve(tuples * tuple_size_); }
  // Payload shorter than tuple_size - 8 is zero-padded; longer is an error.
  void append(Key key, std::span<const std::byte> payload = {});
  void append(const Tuple& t) { append(t.key, t.payload); }
  // Appends already-packed tuples; size must be a multiple of tuple_size.
  void append_packed(std::span<const std::byte> packed);

  std::span<const std::byte> bytes() const { return bytes_; }
  std::vector<std::byte>& mutable_bytes() { return bytes_; }
  void clear() { bytes_.clear(); }

  bool operator==(const TupleBlock&) const = default;

 private:
  std::uint32_t tuple_size_;
  std::vector<std::byte> bytes_;
};

// One node's share of a global relation.
struct Partition {
  TableId table_id = TableId::kR;
  NodeId node_id = 0;
  Key domain = 0;
  TupleBlock tuples;

  std::size_t size() const { return tuples.size(); }
  std::uint32_t tuple_size() const { return tuples.tuple_size(); }

  bool operator==(const Partition&) const = default;
};

// Seedless 64-bit finalizer (murmur3 fmix64) reduced modulo num_buckets, so
// every node agrees on bucket placement without coordination.
BucketIndex hash_key(Key key, std::uint32_t num_buckets);

class HashTable {
 public:
  HashTable(TableId table_id, std::uint32_t num_buckets, std::uint32_t tuple_size);

  TableId table_id() const { return table_id_; }
  std::uint32_t num_buckets() const { return static_cast<std::uint32_t>(buckets_.size()); }
  std::uint32_t tuple_size() const { return tuple_size_; }
  const TupleBlock& bucket(BucketIndex b) const { return buckets_.at(b); }
  TupleBlock& mutable_bucket(BucketIndex b) { return buckets_.at(b); }
  std::size_t total_tuples() const;
  std::size_t total_bytes() const;

 private:
  TableId table_id_;
  std::uint32_t tuple_size_;
  std::vector<TupleBlock> buckets_;
};

HashTable build_hash_table(const Partition& partition, std::uint32_t num_buckets);

// Buckets pinned to node_id under hash distribution. Striped: bucket b
// belongs to node b % total_nodes.
std::vector<BucketIndex> assign_buckets(NodeId node_id, std::uint32_t total_nodes,
                                        std::uint32_t num_buckets);

inline NodeId bucket_owner(BucketIndex b, std::uint32_t total_nodes) {
  return b % total_nodes;
}

} // namespace shardjoin
