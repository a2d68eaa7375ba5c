#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>

#include "shardjoin/transport.hpp"

namespace shardjoin {
namespace {

std::string errno_text(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

class TcpConnection final : public Connection {
 public:
  explicit TcpConnection(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpConnection() override { ::close(fd_); }

  void write_all(std::span<const std::byte> data) override {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + done, data.size() - done, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw TransportError(errno_text("send"));
      }
      done += static_cast<std::size_t>(n);
    }
    count_written(done);
  }

  void read_exact(std::span<std::byte> data) override {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::recv(fd_, data.data() + done, data.size() - done, 0);
      if (n < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw TransportError(errno_text("recv"));
      }
      if (n == 0) {
        throw TransportError("connection closed by peer after " + std::to_string(done) + " of " +
                             std::to_string(data.size()) + " bytes");
      }
      done += static_cast<std::size_t>(n);
    }
    count_read(done);
  }

  void close_write() override { ::shutdown(fd_, SHUT_WR); }
  void shutdown() override { ::shutdown(fd_, SHUT_RDWR); }

 private:
  int fd_;
};

class TcpListener final : public Listener {
 public:
  explicit TcpListener(int fd) : fd_(fd) {}
  ~TcpListener() override { ::close(fd_); }

  std::unique_ptr<Connection> accept() override {
    while (!closed_.load()) {
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 50);
      if (ready <= 0) {
        continue;
      }
      const int conn = ::accept(fd_, nullptr, nullptr);
      if (conn < 0) {
        if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) {
          continue;
        }
        if (closed_.load()) {
          break;
        }
        throw TransportError(errno_text("accept"));
      }
      return std::make_unique<TcpConnection>(conn);
    }
    return nullptr;
  }

  void close() override { closed_.store(true); }

 private:
  int fd_;
  std::atomic<bool> closed_{false};
};

class TcpTransport final : public Transport {
 public:
  std::unique_ptr<Listener> listen(const Endpoint& endpoint) override {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) {
      throw TransportError(errno_text("socket"));
    }
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(endpoint.port);
    if (::inet_pton(AF_INET, endpoint.ip.c_str(), &addr.sin_addr) != 1) {
      addr.sin_addr.s_addr = htonl(INADDR_ANY);
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
      const auto msg = errno_text("bind " + endpoint.str());
      ::close(fd);
      throw TransportError(msg);
    }
    if (::listen(fd, 128) < 0) {
      const auto msg = errno_text("listen " + endpoint.str());
      ::close(fd);
      throw TransportError(msg);
    }
    return std::make_unique<TcpListener>(fd);
  }

  std::unique_ptr<Connection> connect(const Endpoint& endpoint) override {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto port = std::to_string(endpoint.port);
    if (const int rc = ::getaddrinfo(endpoint.ip.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw TransportError("resolve " + endpoint.str() + ": " + ::gai_strerror(rc));
    }
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
      ::freeaddrinfo(res);
      throw TransportError(errno_text("socket"));
    }
    int rc;
    do {
      rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    } while (rc < 0 && errno == EINTR);
    ::freeaddrinfo(res);
    if (rc < 0) {
      const int err = errno;
      ::close(fd);
      errno = err;
      if (err == ECONNREFUSED || err == ETIMEDOUT || err == EHOSTUNREACH || err == ENETUNREACH) {
        throw ConnectRefused(errno_text("connect " + endpoint.str()));
      }
      throw TransportError(errno_text("connect " + endpoint.str()));
    }
    return std::make_unique<TcpConnection>(fd);
  }
};

} // namespace

std::unique_ptr<Transport> make_tcp_transport() {
  return std::make_unique<TcpTransport>();
}

} // namespace shardjoin
