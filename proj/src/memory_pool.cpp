#include "shardjoin/memory_pool.hpp"

#include <chrono>
#include <string>

#include "shardjoin/bounded_queue.hpp"
#include "shardjoin/common.hpp"

namespace shardjoin {

PoolLease& PoolLease::operator=(PoolLease&& other) noexcept {
  if (this != &other) {
    release();
    pool_ = std::exchange(other.pool_, nullptr);
    bytes_ = std::exchange(other.bytes_, 0);
  }
  return *this;
}

void PoolLease::release() {
  if (pool_ != nullptr && bytes_ > 0) {
    pool_->give_back(bytes_);
  }
  pool_ = nullptr;
  bytes_ = 0;
}

MemoryPool::MemoryPool(std::uint64_t capacity, Progress* progress)
    : capacity_(capacity), progress_(progress) {}

PoolLease MemoryPool::acquire(std::uint64_t bytes) {
  if (bytes > capacity_) {
    throw ProtocolError("bucket of " + std::to_string(bytes) + " bytes exceeds pool capacity " +
                        std::to_string(capacity_));
  }
  step(progress_);
  std::unique_lock lock(mutex_);
  if (!closed_ && in_use_ + bytes > capacity_) {
    const auto start = std::chrono::steady_clock::now();
    ++blocked_acquires_;
    freed_.wait(lock, [&] { return closed_ || in_use_ + bytes <= capacity_; });
    blocked_ns_ += static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start)
            .count());
  }
  if (closed_) {
    throw QueueClosed();
  }
  in_use_ += bytes;
  if (in_use_ > peak_) {
    peak_ = in_use_;
  }
  return PoolLease(this, bytes);
}

void MemoryPool::give_back(std::uint64_t bytes) {
  {
    std::lock_guard lock(mutex_);
    in_use_ -= bytes;
  }
  freed_.notify_all();
  step(progress_);
}

void MemoryPool::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  freed_.notify_all();
}

std::uint64_t MemoryPool::in_use() const {
  std::lock_guard lock(mutex_);
  return in_use_;
}

std::uint64_t MemoryPool::peak() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

std::uint64_t MemoryPool::blocked_ns() const {
  std::lock_guard lock(mutex_);
  return blocked_ns_;
}

std::uint64_t MemoryPool::blocked_acquires() const {
  std::lock_guard lock(mutex_);
  return blocked_acquires_;
}

} // namespace shardjoin
