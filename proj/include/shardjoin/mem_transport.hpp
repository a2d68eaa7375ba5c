#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "shardjoin/progress.hpp"
#include "shardjoin/transport.hpp"

namespace shardjoin {

// One direction of an in-memory duplex connection: a bounded byte ring.
// A full pipe blocks the writer, which is how backpressure reaches senders.
class Pipe {
 public:
  Pipe(std::size_t capacity, Progress* progress);

  void write(std::span<const std::byte> data);
  void read(std::span<std::byte> data);
  void close_write();
  void shutdown();

 private:
  const std::size_t capacity_;
  Progress* progress_;
  std::mutex mutex_;
  std::condition_variable readable_;
  std::condition_variable writable_;
  std::vector<std::byte> ring_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  bool write_closed_ = false;
  bool broken_ = false;
};

class MemListener;

// In-process transport keyed by endpoint; no sockets are involved.
class MemTransport final : public Transport {
 public:
  static constexpr std::size_t kDefaultPipeCapacity = 64 * 1024;

  explicit MemTransport(std::size_t pipe_capacity = kDefaultPipeCapacity,
                        Progress* progress = nullptr);
  ~MemTransport() override;

  std::unique_ptr<Listener> listen(const Endpoint& endpoint) override;
  std::unique_ptr<Connection> connect(const Endpoint& endpoint) override;

  std::size_t pipe_capacity() const { return pipe_capacity_; }

 private:
  friend class MemListener;
  void unregister(const Endpoint& endpoint, MemListener* listener);

  std::size_t pipe_capacity_;
  Progress* progress_;
  std::mutex mutex_;
  std::map<Endpoint, MemListener*> listeners_;
};

} // namespace shardjoin
