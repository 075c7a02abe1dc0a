#include "pbge/server/session.hpp"

#include <sstream>

namespace pbge::server {

const char* state_name(SessionState s) {
  switch (s) {
    case SessionState::awaiting_hello: return "awaiting_hello";
    case SessionState::configured: return "configured";
    case SessionState::episode_active: return "episode_active";
    case SessionState::closed: return "closed";
  }
  return "?";
}

Session::Session(env::EnvConfig base) : base_(std::move(base)), config_(base_) {}

Obs Session::to_wire(const Tensor& observation) {
  Obs o;
  for (auto e : observation.shape()) o.extents.push_back(static_cast<std::uint32_t>(e));
  o.data.reserve(observation.size());
  for (double v : observation.data()) o.data.push_back(static_cast<float>(v));
  return o;
}

std::vector<Message> Session::fail(std::uint16_t code, const std::string& text) {
  if (state_ != SessionState::awaiting_hello && state_ != SessionState::closed) state_ = SessionState::configured;
  return {Error{code, text}};
}

std::vector<Message> Session::malformed(const std::string& what) {
  return fail(error_code::malformed, "malformed payload: " + what);
}

std::vector<Message> Session::handle(const Message& m) {
  if (state_ == SessionState::closed) return {Error{error_code::unexpected_message, "session closed"}};
  if (std::holds_alternative<Close>(m)) {
    state_ = SessionState::closed;
    env_.reset();
    return {Close{}};
  }
  if (const auto* u = std::get_if<Unknown>(&m)) {
    return fail(error_code::unknown_tag, "unknown tag " + std::to_string(u->tag));
  }
  if (state_ == SessionState::awaiting_hello) {
    const auto* h = std::get_if<Hello>(&m);
    if (!h) return fail(error_code::hello_required, "HELLO required first");
    if (h->version != kProtocolVersion) {
      return fail(error_code::version_mismatch, "protocol version " + std::to_string(h->version) +
                                                    " unsupported; server speaks " + std::to_string(kProtocolVersion));
    }
    state_ = SessionState::configured;
    return {Hello{kProtocolVersion}};
  }
  if (std::holds_alternative<Hello>(m)) return fail(error_code::unexpected_message, "HELLO already received");

  if (const auto* c = std::get_if<Config>(&m)) {
    try {
      std::istringstream is(c->text);
      KeyValueConfig kv;
      base_.to(kv);
      kv.merge(KeyValueConfig::parse(is, "CONFIG"));
      config_ = env::EnvConfig::from(kv);
    } catch (const std::exception& e) {
      return fail(error_code::bad_config, e.what());
    }
    env_.reset();
    state_ = SessionState::configured;
    return {*c};
  }
  if (std::holds_alternative<Reset>(m)) {
    try {
      if (!env_) env_ = std::make_unique<obs::ObservationEnv>(config_);
      const obs::ObsStep s = env_->reset();
      state_ = SessionState::episode_active;
      return {to_wire(s.observation)};
    } catch (const std::exception& e) {
      env_.reset();
      return fail(error_code::env_failure, std::string("reset failed: ") + e.what());
    }
  }
  if (const auto* s = std::get_if<Step>(&m)) {
    if (state_ != SessionState::episode_active) return fail(error_code::no_active_episode, "no active episode");
    if (s->action >= env::kNumActions) {
      return fail(error_code::malformed, "action " + std::to_string(s->action) + " outside [0, 4)");
    }
    const obs::ObsStep r = env_->step(s->action);
    if (r.terminated || r.truncated) state_ = SessionState::configured;
    return {Result{static_cast<float>(r.reward), r.terminated, r.truncated, r.info.success}, to_wire(r.observation)};
  }
  return fail(error_code::unexpected_message, "message not accepted by a server");
}

}  // namespace pbge::server
