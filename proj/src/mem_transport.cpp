#include "shardjoin/mem_transport.hpp"

#include <algorithm>
#include <string>

namespace shardjoin {

Pipe::Pipe(std::size_t capacity, Progress* progress)
    : capacity_(capacity == 0 ? 1 : capacity), progress_(progress), ring_(capacity_) {}

void Pipe::write(std::span<const std::byte> data) {
  std::size_t done = 0;
  while (done < data.size()) {
    std::size_t chunk = 0;
    {
      std::unique_lock lock(mutex_);
      writable_.wait(lock, [&] { return broken_ || size_ < capacity_; });
      if (broken_) {
        throw TransportError("pipe broken while writing");
      }
      if (write_closed_) {
        throw TransportError("write after close");
      }
      chunk = std::min(data.size() - done, capacity_ - size_);
      std::size_t tail = (head_ + size_) % capacity_;
      for (std::size_t i = 0; i < chunk;) {
        const std::size_t run = std::min(chunk - i, capacity_ - tail);
        std::memcpy(ring_.data() + tail, data.data() + done + i, run);
        i += run;
        tail = (tail + run) % capacity_;
      }
      size_ += chunk;
    }
    readable_.notify_all();
    done += chunk;
    step(progress_);
  }
}

void Pipe::read(std::span<std::byte> data) {
  std::size_t done = 0;
  while (done < data.size()) {
    std::size_t chunk = 0;
    {
      std::unique_lock lock(mutex_);
      readable_.wait(lock, [&] { return broken_ || write_closed_ || size_ > 0; });
      if (size_ == 0) {
        throw TransportError(broken_ ? "pipe broken while reading"
                                     : "connection closed by peer after " + std::to_string(done) +
                                           " of " + std::to_string(data.size()) + " bytes");
      }
      chunk = std::min(data.size() - done, size_);
      for (std::size_t i = 0; i < chunk;) {
        const std::size_t run = std::min(chunk - i, capacity_ - head_);
        std::memcpy(data.data() + done + i, ring_.data() + head_, run);
        i += run;
        head_ = (head_ + run) % capacity_;
      }
      size_ -= chunk;
    }
    writable_.notify_all();
    done += chunk;
    step(progress_);
  }
}

void Pipe::close_write() {
  {
    std::lock_guard lock(mutex_);
    write_closed_ = true;
  }
  readable_.notify_all();
}

void Pipe::shutdown() {
  {
    std::lock_guard lock(mutex_);
    broken_ = true;
  }
  readable_.notify_all();
  writable_.notify_all();
}

namespace {

class MemConnection final : public Connection {
 public:
  MemConnection(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~MemConnection() override {
    out_->close_write();
    in_->shutdown();
  }

  void write_all(std::span<const std::byte> data) override {
    out_->write(data);
    count_written(data.size());
  }
  void read_exact(std::span<std::byte> data) override {
    in_->read(data);
    count_read(data.size());
  }
  void close_write() override { out_->close_write(); }
  void shutdown() override {
    in_->shutdown();
    out_->shutdown();
  }

 private:
  std::shared_ptr<Pipe> in_;
  std::shared_ptr<Pipe> out_;
};

} // namespace

class MemListener final : public Listener {
 public:
  MemListener(MemTransport& owner, Endpoint endpoint)
      : owner_(owner), endpoint_(std::move(endpoint)) {}
  ~MemListener() override {
    close();
    owner_.unregister(endpoint_, this);
  }

  std::unique_ptr<Connection> accept() override {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [&] { return closed_ || !pending_.empty(); });
    if (pending_.empty()) {
      return nullptr;
    }
    auto conn = std::move(pending_.front());
    pending_.pop_front();
    return conn;
  }

  void close() override {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    ready_.notify_all();
  }

  // False when the listener is already closed (treated as refused).
  bool offer(std::unique_ptr<Connection> conn) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) {
        return false;
      }
      pending_.push_back(std::move(conn));
    }
    ready_.notify_one();
    return true;
  }

 private:
  MemTransport& owner_;
  Endpoint endpoint_;
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<std::unique_ptr<Connection>> pending_;
  bool closed_ = false;
};

MemTransport::MemTransport(std::size_t pipe_capacity, Progress* progress)
    : pipe_capacity_(pipe_capacity), progress_(progress) {}

MemTransport::~MemTransport() = default;

std::unique_ptr<Listener> MemTransport::listen(const Endpoint& endpoint) {
  std::lock_guard lock(mutex_);
  if (listeners_.count(endpoint) > 0) {
    throw TransportError("bind " + endpoint.str() + ": address in use");
  }
  auto listener = std::make_unique<MemListener>(*this, endpoint);
  listeners_[endpoint] = listener.get();
  return listener;
}

std::unique_ptr<Connection> MemTransport::connect(const Endpoint& endpoint) {
  auto a_to_b = std::make_shared<Pipe>(pipe_capacity_, progress_);
  auto b_to_a = std::make_shared<Pipe>(pipe_capacity_, progress_);
  auto client = std::make_unique<MemConnection>(b_to_a, a_to_b);
  auto server = std::make_unique<MemConnection>(a_to_b, b_to_a);
  std::lock_guard lock(mutex_);
  auto it = listeners_.find(endpoint);
  if (it == listeners_.end() || !it->second->offer(std::move(server))) {
    throw ConnectRefused("connect " + endpoint.str() + ": no listener");
  }
  return client;
}

void MemTransport::unregister(const Endpoint& endpoint, MemListener* listener) {
  std::lock_guard lock(mutex_);
  auto it = listeners_.find(endpoint);
  if (it != listeners_.end() && it->second == listener) {
    listeners_.erase(it);
  }
}

} // namespace shardjoin
