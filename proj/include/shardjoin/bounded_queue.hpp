#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>

#include "shardjoin/progress.hpp"

namespace shardjoin {

// Thrown by push/pop once the queue has been closed by an engine abort.
class QueueClosed : public std::runtime_error {
 public:
  QueueClosed() : std::runtime_error("queue closed") {}
};

// Bounded blocking MPMC FIFO (mutex + two condition variables).
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity, Progress* progress = nullptr)
      : capacity_(capacity == 0 ? 1 : capacity), progress_(progress) {}

  BoundedQueue(const BoundedQueue&) = delete;
  BoundedQueue& operator=(const BoundedQueue&) = delete;

  void push(T record) {
    push(std::move(record), [](const T&) {});
  }

  // `on_enqueue` runs under the queue lock, so observers see pushes in
  // exactly the order the queue linearizes them.
  template <typename F>
  void push(T record, F&& on_enqueue) {
    step(progress_);
    {
      std::unique_lock lock(mutex_);
      not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
      if (closed_) {
        throw QueueClosed();
      }
      on_enqueue(record);
      items_.push_back(std::move(record));
      ++pushes_;
    }
    not_empty_.notify_one();
  }

  T pop() {
    return pop([](const T&) {});
  }

  // `on_dequeue` runs under the queue lock (see push).
  template <typename F>
  T pop(F&& on_dequeue) {
    step(progress_);
    std::optional<T> out;
    {
      std::unique_lock lock(mutex_);
      not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
      if (closed_) {
        throw QueueClosed();
      }
      out.emplace(std::move(items_.front()));
      items_.pop_front();
      ++pops_;
      on_dequeue(*out);
    }
    not_full_.notify_one();
    step(progress_);
    return std::move(*out);
  }

  std::optional<T> try_pop() {
    std::optional<T> out;
    {
      std::lock_guard lock(mutex_);
      if (closed_ || items_.empty()) {
        return std::nullopt;
      }
      out.emplace(std::move(items_.front()));
      items_.pop_front();
      ++pops_;
    }
    not_full_.notify_one();
    return out;
  }

  // Wakes every waiter; subsequent push/pop throw QueueClosed.
  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }
  std::size_t capacity() const { return capacity_; }
  std::size_t total_pushes() const {
    std::lock_guard lock(mutex_);
    return pushes_;
  }
  std::size_t total_pops() const {
    std::lock_guard lock(mutex_);
    return pops_;
  }

 private:
  const std::size_t capacity_;
  Progress* progress_;
  mutable std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
  std::size_t pushes_ = 0;
  std::size_t pops_ = 0;
};

} // namespace shardjoin
