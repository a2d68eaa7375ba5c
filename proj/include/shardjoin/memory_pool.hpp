#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>

#include "shardjoin/progress.hpp"

namespace shardjoin {

class MemoryPool;

// Bytes reserved from a MemoryPool; returned on destruction.
class PoolLease {
 public:
  PoolLease() = default;
  PoolLease(MemoryPool* pool, std::uint64_t bytes) : pool_(pool), bytes_(bytes) {}
  PoolLease(PoolLease&& other) noexcept { *this = std::move(other); }
  PoolLease& operator=(PoolLease&& other) noexcept;
  PoolLease(const PoolLease&) = delete;
  PoolLease& operator=(const PoolLease&) = delete;
  ~PoolLease() { release(); }

  std::uint64_t bytes() const { return bytes_; }
  void release();

 private:
  MemoryPool* pool_ = nullptr;
  std::uint64_t bytes_ = 0;
};

// Byte budget shared by all hash-table frames of a node. acquire() blocks
// while the budget is exhausted; compute threads refill it as they free
// joined buckets.
class MemoryPool {
 public:
  explicit MemoryPool(std::uint64_t capacity, Progress* progress = nullptr);

  // Throws ProtocolError if a single request can never fit, QueueClosed
  // after close().
  PoolLease acquire(std::uint64_t bytes);
  void close();

  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t in_use() const;
  std::uint64_t peak() const;
  // Total time callers spent blocked in acquire().
  std::uint64_t blocked_ns() const;
  std::uint64_t blocked_acquires() const;

 private:
  friend class PoolLease;
  void give_back(std::uint64_t bytes);

  const std::uint64_t capacity_;
  Progress* progress_;
  mutable std::mutex mutex_;
  std::condition_variable freed_;
  std::uint64_t in_use_ = 0;
  std::uint64_t peak_ = 0;
  std::uint64_t blocked_ns_ = 0;
  std::uint64_t blocked_acquires_ = 0;
  bool closed_ = false;
};

} // namespace shardjoin
