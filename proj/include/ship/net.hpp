#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace ship {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Blocking TCP connection. Move-only; closes on destruction.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  ~TcpStream();
  TcpStream(TcpStream&& other) noexcept;
  TcpStream& operator=(TcpStream&& other) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  /// Throws NetError("connection failed ...") after the retry window expires.
  static TcpStream connect(const std::string& host, std::uint16_t port,
                           std::chrono::milliseconds retry_for = std::chrono::milliseconds(0));

  void write_all(std::span<const std::uint8_t> data);
  void write_all(const std::string& text);
  /// Returns 0 on orderly shutdown by the peer.
  std::size_t read_some(std::span<std::uint8_t> buf);
  void shutdown_write();
  void shutdown_both();
  void close();

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  /// Port 0 binds an ephemeral port; see port().
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }

  /// Waits up to `timeout` (negative waits forever). Throws NetError on timeout.
  TcpStream accept(std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Line reader over a TcpStream (newline-delimited, '\r' stripped).
class LineReader {
 public:
  explicit LineReader(TcpStream& stream) : stream_(stream) {}
  /// False on EOF with no pending data.
  bool next(std::string& line);

 private:
  TcpStream& stream_;
  std::string buf_;
  std::size_t head_ = 0;
};

}  // namespace ship
