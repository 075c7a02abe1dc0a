#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pbge/env/config.hpp"
#include "pbge/server/protocol.hpp"

namespace pbge::server {

struct ServerOptions {
  std::uint16_t port = kDefaultPort;  // 0 picks a free port
  std::string bind_address = "127.0.0.1";
  int frame_timeout_ms = 10'000;  // to finish a frame once it has started
  int idle_timeout_ms = 600'000;  // between frames
};

/// Serves one Session per TCP connection, each on its own thread.
class EnvServer {
 public:
  EnvServer(env::EnvConfig base, ServerOptions options = {});
  ~EnvServer();
  EnvServer(const EnvServer&) = delete;
  EnvServer& operator=(const EnvServer&) = delete;

  /// Binds and listens; throws std::system_error when the port is taken.
  void start();
  std::uint16_t port() const { return port_; }
  /// Accepts connections until stop().
  void serve();
  void stop() { stopping_ = true; }

 private:
  void run_connection(int fd);

  env::EnvConfig base_;
  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex threads_mutex_;
  std::vector<std::thread> threads_;
};

/// The server replied ERROR.
class RemoteError : public std::runtime_error {
 public:
  RemoteError(std::uint16_t code, const std::string& text)
      : std::runtime_error("server error " + std::to_string(code) + ": " + text), code_(code) {}
  std::uint16_t code() const { return code_; }

 private:
  std::uint16_t code_;
};

/// Blocking client for the environment protocol.
class EnvClient {
 public:
  EnvClient(const std::string& host, std::uint16_t port, int timeout_ms = 30'000);
  ~EnvClient();
  EnvClient(const EnvClient&) = delete;
  EnvClient& operator=(const EnvClient&) = delete;

  void send(const Message& m);
  /// Raw frame bytes, for protocol tests.
  void send_bytes(const std::vector<std::uint8_t>& bytes);
  Message receive();

  std::uint32_t hello(std::uint32_t version = kProtocolVersion);
  void configure(const std::string& key_values);
  Obs reset();
  std::pair<Result, Obs> step(int action);
  void close();

 private:
  template <class T>
  T expect();

  int fd_ = -1;
  int timeout_ms_;
};

}  // namespace pbge::server
