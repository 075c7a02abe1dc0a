#include "pbge/server/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <system_error>

#include "pbge/server/session.hpp"

namespace pbge::server {

namespace {

using Clock = std::chrono::steady_clock;

enum class ReadStatus { ok, eof, timeout, stopped };

std::system_error sys_error(const std::string& what) { return {errno, std::generic_category(), what}; }

// Reads exactly n bytes unless the peer closes, the deadline passes or
// `stop` is raised. Polls in short slices so a stop request is noticed.
ReadStatus read_exact(int fd, std::uint8_t* out, std::size_t n, Clock::time_point deadline,
                      const std::atomic<bool>* stop) {
  std::size_t got = 0;
  while (got < n) {
    if (stop && *stop) return ReadStatus::stopped;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return ReadStatus::timeout;
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 100)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw sys_error("poll");
    }
    if (ready == 0) continue;
    const ssize_t k = ::recv(fd, out + got, n - got, 0);
    if (k == 0) return ReadStatus::eof;
    if (k < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return ReadStatus::eof;
    }
    got += static_cast<std::size_t>(k);
  }
  return ReadStatus::ok;
}

bool write_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t k = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(k);
  }
  return true;
}

Clock::time_point after(int ms) { return Clock::now() + std::chrono::milliseconds(ms); }

}  // namespace

EnvServer::EnvServer(env::EnvConfig base, ServerOptions options) : base_(std::move(base)), options_(std::move(options)) {}

EnvServer::~EnvServer() {
  stopping_ = true;
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void EnvServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw sys_error("socket");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    throw std::invalid_argument("bad bind address " + options_.bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    throw sys_error("bind port " + std::to_string(options_.port));
  }
  if (::listen(listen_fd_, 16) < 0) throw sys_error("listen");
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

void EnvServer::serve() {
  if (listen_fd_ < 0) start();
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(threads_mutex_);
    threads_.emplace_back([this, fd] { run_connection(fd); });
  }
}

void EnvServer::run_connection(int fd) {
  Session session(base_);
  auto send = [&](const Message& m) { return write_all(fd, encode(m)); };
  auto abort_with = [&](std::uint16_t code, const std::string& text) {
    send(Error{code, text});
    send(Close{});
  };
  try {
    while (!stopping_ && session.state() != SessionState::closed) {
      std::uint8_t header[kHeaderSize];
      // Waiting for the first byte is idle time; the rest of the frame is bounded.
      ReadStatus st = read_exact(fd, header, 1, after(options_.idle_timeout_ms), &stopping_);
      if (st == ReadStatus::timeout) {
        abort_with(error_code::timeout, "idle timeout");
        break;
      }
      if (st != ReadStatus::ok) break;
      const auto frame_deadline = after(options_.frame_timeout_ms);
      st = read_exact(fd, header + 1, kHeaderSize - 1, frame_deadline, &stopping_);
      if (st == ReadStatus::timeout) {
        abort_with(error_code::timeout, "timed out inside a frame header");
        break;
      }
      if (st != ReadStatus::ok) break;
      std::uint32_t length = 0;
      try {
        length = payload_length(header);
      } catch (const FramingError& e) {
        abort_with(error_code::frame_too_large, e.what());
        break;
      }
      std::vector<std::uint8_t> payload(length);
      st = read_exact(fd, payload.data(), length, frame_deadline, &stopping_);
      if (st == ReadStatus::timeout) {
        abort_with(error_code::timeout, "timed out inside a frame payload");
        break;
      }
      if (st != ReadStatus::ok) break;
      std::vector<Message> replies;
      try {
        replies = session.handle(decode_payload(header[4], payload));
      } catch (const FramingError& e) {
        replies = session.malformed(e.what());
      }
      bool ok = true;
      for (const auto& r : replies) ok = ok && send(r);
      if (!ok) break;
    }
  } catch (const std::exception& e) {
    abort_with(error_code::env_failure, e.what());
  }
  ::close(fd);
}

EnvClient::EnvClient(const std::string& host, std::uint16_t port, int timeout_ms) : timeout_ms_(timeout_ms) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw std::runtime_error("cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) < 0) {
    const auto err = sys_error("connect to " + host + ":" + std::to_string(port));
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw err;
  }
  ::freeaddrinfo(res);
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

EnvClient::~EnvClient() {
  if (fd_ >= 0) ::close(fd_);
}

void EnvClient::send_bytes(const std::vector<std::uint8_t>& bytes) {
  if (!write_all(fd_, bytes)) throw sys_error("send");
}

void EnvClient::send(const Message& m) { send_bytes(encode(m)); }

Message EnvClient::receive() {
  const auto deadline = after(timeout_ms_);
  std::uint8_t header[kHeaderSize];
  const ReadStatus st = read_exact(fd_, header, kHeaderSize, deadline, nullptr);
  if (st == ReadStatus::eof) throw FramingError("connection closed by server");
  if (st != ReadStatus::ok) throw FramingError("timed out waiting for the server");
  std::vector<std::uint8_t> payload(payload_length(header));
  if (read_exact(fd_, payload.data(), payload.size(), deadline, nullptr) != ReadStatus::ok) {
    throw FramingError("short frame from server");
  }
  return decode_payload(header[4], payload);
}

template <class T>
T EnvClient::expect() {
  Message m = receive();
  if (auto* e = std::get_if<Error>(&m)) throw RemoteError(e->code, e->text);
  if (auto* t = std::get_if<T>(&m)) return std::move(*t);
  throw FramingError("unexpected reply tag " + std::to_string(tag_of(m)));
}

std::uint32_t EnvClient::hello(std::uint32_t version) {
  send(Hello{version});
  return expect<Hello>().version;
}

void EnvClient::configure(const std::string& key_values) {
  send(Config{key_values});
  expect<Config>();
}

Obs EnvClient::reset() {
  send(Reset{});
  return expect<Obs>();
}

std::pair<Result, Obs> EnvClient::step(int action) {
  send(Step{static_cast<std::uint8_t>(action)});
  Result r = expect<Result>();
  return {r, expect<Obs>()};
}

void EnvClient::close() {
  send(Close{});
  expect<Close>();
  ::close(fd_);
  fd_ = -1;
}

}  // namespace pbge::server
