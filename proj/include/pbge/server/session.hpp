#pragma once

#include <memory>
#include <vector>

#include "pbge/env/config.hpp"
#include "pbge/obs/pipeline.hpp"
#include "pbge/server/protocol.hpp"

namespace pbge::server {

enum class SessionState { awaiting_hello, configured, episode_active, closed };

const char* state_name(SessionState s);

/// Protocol state machine for one connection, independent of transport.
///
///   HELLO   awaiting_hello -> configured; replies HELLO(version)
///   CONFIG  configured | episode_active -> configured; replies CONFIG echo
///   RESET   configured | episode_active -> episode_active; replies OBS
///   STEP    episode_active; replies RESULT then OBS, -> configured when the
///           episode ends
///   CLOSE   any -> closed; replies CLOSE
///
/// Violations reply ERROR and fall back to configured (or stay in
/// awaiting_hello before the handshake).
class Session {
 public:
  explicit Session(env::EnvConfig base);

  std::vector<Message> handle(const Message& m);
  /// A payload that failed to decode under a known tag.
  std::vector<Message> malformed(const std::string& what);

  SessionState state() const { return state_; }
  const env::EnvConfig& config() const { return config_; }

  /// Wire form of an observation tensor.
  static Obs to_wire(const Tensor& observation);

 private:
  std::vector<Message> fail(std::uint16_t code, const std::string& text);

  env::EnvConfig base_;
  env::EnvConfig config_;
  std::unique_ptr<obs::ObservationEnv> env_;
  SessionState state_ = SessionState::awaiting_hello;
};

}  // namespace pbge::server
