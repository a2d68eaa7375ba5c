#pragma once

#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "shardjoin/common.hpp"
#include "shardjoin/config.hpp"

namespace shardjoin {

// One joined pair. `source` is the node whose R tuple produced the match,
// recovered from the frame the tuple was joined from.
struct ResultEntry {
  Key r_key = 0;
  Key s_key = 0;
  NodeId source = 0;
  std::vector<std::byte> r_payload; // full-payload layout only
  std::vector<std::byte> s_payload;

  auto operator<=>(const ResultEntry&) const = default;
  bool operator==(const ResultEntry&) const = default;
};

// Fixed-size packed encoding of a ResultEntry:
// r_key u64 | s_key u64 | source u32 | [r payload | s payload].
struct ResultLayout {
  static constexpr std::uint32_t kKeysOnlySize = 20;

  std::uint32_t entry_size = kKeysOnlySize;
  std::uint32_t payload_size = 0; // per side, full layout only

  static ResultLayout keys_only() { return {}; }
  static ResultLayout full(std::uint32_t tuple_size) {
    return {kKeysOnlySize + 2 * (tuple_size - 8), tuple_size - 8};
  }
  static ResultLayout for_config(const ClusterConfig& c) {
    return c.result_payload == ResultPayload::kFull ? full(c.tuple_size) : keys_only();
  }
  bool operator==(const ResultLayout&) const = default;

  void encode(std::byte* dst, std::span<const std::byte> r_tuple,
              std::span<const std::byte> s_tuple, NodeId source) const;
  void encode(std::byte* dst, const ResultEntry& e) const;
  ResultEntry decode(const std::byte* src) const;
};

// One page of packed entries.
class ResultBlock {
 public:
  ResultBlock(std::uint32_t capacity, std::uint32_t entry_size);

  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t entry_size() const { return entry_size_; }
  std::size_t fill() const { return bytes_.size(); }
  std::size_t entry_count() const { return bytes_.size() / entry_size_; }
  bool empty() const { return bytes_.empty(); }
  bool full() const { return bytes_.size() + entry_size_ > capacity_; }

  // Returns space for one more entry; caller must check full() first.
  std::byte* append_slot();
  void append_packed(std::span<const std::byte> entries);
  std::span<const std::byte> bytes() const { return bytes_; }

  bool operator==(const ResultBlock&) const = default;

 private:
  std::uint32_t capacity_;
  std::uint32_t entry_size_;
  std::vector<std::byte> bytes_;
};

// Node-wide result buffer. Appends are whole blocks under one lock.
class ResultList {
 public:
  explicit ResultList(ResultLayout layout = {}) : layout_(layout) {}
  ResultList(const ResultList&) = delete;
  ResultList& operator=(const ResultList&) = delete;
  ResultList(ResultList&& other) noexcept;
  ResultList& operator=(ResultList&& other) noexcept;

  void merge_block(ResultBlock block);

  const ResultLayout& layout() const { return layout_; }
  std::size_t block_count() const;
  std::size_t entry_count() const;
  // Snapshot; call after writers are done.
  std::vector<ResultBlock> blocks() const;
  std::vector<ResultEntry> entries() const;

 private:
  ResultLayout layout_;
  mutable std::mutex mutex_;
  std::vector<ResultBlock> blocks_;
  std::size_t entries_ = 0;
};

// Per-compute-thread staging buffer. Not thread-safe: one owner.
class LocalBuffer {
 public:
  LocalBuffer(std::uint32_t owner_thread, std::uint32_t page_size, ResultLayout layout,
              ResultList& sink);

  std::uint32_t owner_thread() const { return owner_; }
  void add(std::span<const std::byte> r_tuple, std::span<const std::byte> s_tuple,
           NodeId source);
  // Moves the partially filled block, if any, into the result list.
  void flush();
  std::size_t produced() const { return produced_; }
  std::size_t pending_entries() const { return block_.entry_count(); }

 private:
  std::uint32_t owner_;
  std::uint32_t page_size_;
  ResultLayout layout_;
  ResultList& list_;
  ResultBlock block_;
  std::size_t produced_ = 0;
};

std::vector<ResultEntry> decode_block(const ResultBlock& block, const ResultLayout& layout);

} // namespace shardjoin
