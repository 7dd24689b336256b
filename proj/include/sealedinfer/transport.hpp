#pragma once

// Reliable ordered byte streams. SocketTransport wraps any stream socket
// (TCP or a local socketpair).

#include <cstdint>
#include <span>
#include <string>
#include <utility>

namespace sealedinfer {

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write_all(std::span<const std::uint8_t> data) = 0;
  // Blocks until the buffer is full; throws TransportError on EOF.
  virtual void read_exact(std::span<std::uint8_t> data) = 0;
  virtual void shutdown() {}
};

// Pass-through that tallies raw bytes in each direction.
class CountingTransport final : public Transport {
 public:
  explicit CountingTransport(Transport& inner) : inner_(inner) {}
  void write_all(std::span<const std::uint8_t> data) override {
    inner_.write_all(data);
    written_ += data.size();
  }
  void read_exact(std::span<std::uint8_t> data) override {
    inner_.read_exact(data);
    read_ += data.size();
  }
  void shutdown() override { inner_.shutdown(); }
  std::uint64_t bytes_written() const noexcept { return written_; }
  std::uint64_t bytes_read() const noexcept { return read_; }

 private:
  Transport& inner_;
  std::uint64_t written_ = 0;
  std::uint64_t read_ = 0;
};

class SocketTransport final : public Transport {
 public:
  explicit SocketTransport(int fd) noexcept : fd_(fd) {}
  SocketTransport(SocketTransport&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  SocketTransport& operator=(SocketTransport&& other) noexcept;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;
  ~SocketTransport() override;

  void write_all(std::span<const std::uint8_t> data) override;
  void read_exact(std::span<std::uint8_t> data) override;
  void shutdown() override;

  int fd() const noexcept { return fd_; }

  static std::pair<SocketTransport, SocketTransport> local_pair();
  // Retries until the peer listens or `timeout_ms` elapses.
  static SocketTransport connect(const std::string& host, std::uint16_t port,
                                 int timeout_ms = 10000);

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  // Port 0 picks an ephemeral port; see port().
  TcpListener(const std::string& host, std::uint16_t port);
  TcpListener(TcpListener&& other) noexcept : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();

  std::uint16_t port() const noexcept { return port_; }
  SocketTransport accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

// Parses "host:port"; throws ConfigError.
Endpoint parse_endpoint(const std::string& text);

}  // namespace sealedinfer
