#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>

#include "shardjoin/config.hpp"

namespace shardjoin {

// Reliable, ordered byte stream owned by one thread at a time.
class Connection {
 public:
  virtual ~Connection() = default;

  // Both throw TransportError on a broken or closed stream.
  virtual void write_all(std::span<const std::byte> data) = 0;
  virtual void read_exact(std::span<std::byte> data) = 0;
  // Half-close: the peer reads EOF after draining what was written.
  virtual void close_write() = 0;
  // Tears the stream down in both directions; safe from any thread and
  // unblocks a reader or writer stuck in this connection.
  virtual void shutdown() = 0;

  std::uint64_t bytes_written() const { return written_.load(std::memory_order_relaxed); }
  std::uint64_t bytes_read() const { return read_.load(std::memory_order_relaxed); }

 protected:
  void count_written(std::size_t n) { written_.fetch_add(n, std::memory_order_relaxed); }
  void count_read(std::size_t n) { read_.fetch_add(n, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> written_{0};
  std::atomic<std::uint64_t> read_{0};
};

class Listener {
 public:
  virtual ~Listener() = default;

  // Blocks for the next connection; returns nullptr once closed.
  virtual std::unique_ptr<Connection> accept() = 0;
  virtual void close() = 0;
};

// Factory boundary between the node runtime and the byte transport: TCP in
// deployment, in-memory pipes in the simulator.
class Transport {
 public:
  virtual ~Transport() = default;

  // Throws TransportError if the endpoint cannot be bound.
  virtual std::unique_ptr<Listener> listen(const Endpoint& endpoint) = 0;
  // Throws ConnectRefused when nothing listens at the endpoint.
  virtual std::unique_ptr<Connection> connect(const Endpoint& endpoint) = 0;
};

std::unique_ptr<Transport> make_tcp_transport();

} // namespace shardjoin
