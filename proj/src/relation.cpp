#include "shardjoin/relation.hpp"

#include <algorithm>
#include <string>

namespace shardjoin {

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kTransport: return "transport";
    case ErrorCategory::kProtocol: return "protocol";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kTimeout: return "timeout";
    case ErrorCategory::kInternal: return "internal";
  }
  return "internal";
}

TupleBlock::TupleBlock(std::uint32_t tuple_size) : tuple_size_(tuple_size) {
  if (tuple_size < kKeyBytes) {
    throw ConfigError("tuple size " + std::to_string(tuple_size) + " is smaller than the 8-byte key");
  }
}

Tuple TupleBlock::tuple(std::size_t i) const {
  auto p = payload(i);
  return Tuple{key(i), std::vector<std::byte>(p.begin(), p.end())};
}

void TupleBlock::append(Key key, std::span<const std::byte> payload) {
  const std::size_t payload_size = tuple_size_ - kKeyBytes;
  if (payload.size() > payload_size) {
    throw ConfigError("payload of " + std::to_string(payload.size()) + " bytes exceeds tuple capacity");
  }
  const std::size_t offset = bytes_.size();
  bytes_.resize(offset + tuple_size_);
  store_le<Key>(bytes_.data() + offset, key);
  if (!payload.empty()) {
    std::memcpy(bytes_.data() + offset + kKeyBytes, payload.data(), payload.size());
  }
}

void TupleBlock::append_packed(std::span<const std::byte> packed) {
  if (packed.size() % tuple_size_ != 0) {
    throw FormatError("packed tuple run of " + std::to_string(packed.size()) +
                      " bytes is not a multiple of tuple size " + std::to_string(tuple_size_));
  }
  bytes_.insert(bytes_.end(), packed.begin(), packed.end());
}

BucketIndex hash_key(Key key, std::uint32_t num_buckets) {
  key ^= key >> 33;
  key *= 0xff51afd7ed558ccdULL;
  key ^= key >> 33;
  key *= 0xc4ceb9fe1a85ec53ULL;
  key ^= key >> 33;
  return static_cast<BucketIndex>(key % num_buckets);
}

HashTable::HashTable(TableId table_id, std::uint32_t num_buckets, std::uint32_t tuple_size)
    : table_id_(table_id), tuple_size_(tuple_size) {
  if (num_buckets == 0) {
    throw ConfigError("hash table needs at least one bucket");
  }
  buckets_.assign(num_buckets, TupleBlock(tuple_size));
}

std::size_t HashTable::total_tuples() const {
  std::size_t n = 0;
  for (const auto& b : buckets_) {
    n += b.size();
  }
  return n;
}

std::size_t HashTable::total_bytes() const {
  std::size_t n = 0;
  for (const auto& b : buckets_) {
    n += b.byte_size();
  }
  return n;
}

HashTable build_hash_table(const Partition& partition, std::uint32_t num_buckets) {
  HashTable table(partition.table_id, num_buckets, partition.tuple_size());
  const TupleBlock& src = partition.tuples;
  const std::size_t n = src.size();

  // Two passes: size every bucket exactly, then copy.
  std::vector<BucketIndex> placement(n);
  std::vector<std::size_t> counts(num_buckets, 0);
  for (std::size_t i = 0; i < n; ++i) {
    placement[i] = hash_key(src.key(i), num_buckets);
    ++counts[placement[i]];
  }
  for (BucketIndex b = 0; b < num_buckets; ++b) {
    table.mutable_bucket(b).reserve(counts[b]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    table.mutable_bucket(placement[i]).append_packed(src.tuple_bytes(i));
  }
  return table;
}

std::vector<BucketIndex> assign_buckets(NodeId node_id, std::uint32_t total_nodes,
                                        std::uint32_t num_buckets) {
  if (total_nodes == 0 || node_id >= total_nodes) {
    throw ConfigError("node " + std::to_string(node_id) + " outside cluster of " +
                      std::to_string(total_nodes));
  }
  if (num_buckets < total_nodes) {
    throw ConfigError("hash distribution needs at least one bucket per node");
  }
  std::vector<BucketIndex> out;
  out.reserve(num_buckets / total_nodes + 1);
  for (BucketIndex b = node_id; b < num_buckets; b += total_nodes) {
    out.push_back(b);
  }
  return out;
}

} // namespace shardjoin
