#include "pbge/agents/config.hpp"

#include <cmath>
#include <set>
#include <variant>

#include "pbge/env/config.hpp"

namespace pbge::agents {
namespace {

using Field = std::variant<double*, std::int64_t*, bool*, std::optional<double>*>;

template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
  auto& d = c.dqn;
  f("dqn.learning_rate", Field(&d.learning_rate));
  f("dqn.buffer_size", Field(&d.buffer_size));
  f("dqn.learning_starts", Field(&d.learning_starts));
  f("dqn.batch_size", Field(&d.batch_size));
  f("dqn.gamma", Field(&d.gamma));
  f("dqn.train_freq", Field(&d.train_freq));
  f("dqn.gradient_steps", Field(&d.gradient_steps));
  f("dqn.target_update_interval", Field(&d.target_update_interval));
  f("dqn.exploration_fraction", Field(&d.exploration_fraction));
  f("dqn.exploration_initial_eps", Field(&d.exploration_initial_eps));
  f("dqn.exploration_final_eps", Field(&d.exploration_final_eps));
  f("dqn.max_grad_norm", Field(&d.max_grad_norm));
  f("dqn.double_dqn", Field(&d.double_dqn));
  auto& p = c.ppo;
  f("ppo.learning_rate", Field(&p.learning_rate));
  f("ppo.n_steps", Field(&p.n_steps));
  f("ppo.batch_size", Field(&p.batch_size));
  f("ppo.n_epochs", Field(&p.n_epochs));
  f("ppo.gamma", Field(&p.gamma));
  f("ppo.gae_lambda", Field(&p.gae_lambda));
  f("ppo.clip_range", Field(&p.clip_range));
  f("ppo.clip_range_vf", Field(&p.clip_range_vf));
  f("ppo.normalize_advantage", Field(&p.normalize_advantage));
  f("ppo.ent_coef", Field(&p.ent_coef));
  f("ppo.vf_coef", Field(&p.vf_coef));
  f("ppo.max_grad_norm", Field(&p.max_grad_norm));
  auto& a = c.a2c;
  f("a2c.learning_rate", Field(&a.learning_rate));
  f("a2c.n_steps", Field(&a.n_steps));
  f("a2c.gamma", Field(&a.gamma));
  f("a2c.gae_lambda", Field(&a.gae_lambda));
  f("a2c.ent_coef", Field(&a.ent_coef));
  f("a2c.vf_coef", Field(&a.vf_coef));
  f("a2c.max_grad_norm", Field(&a.max_grad_norm));
  f("a2c.rms_prop_eps", Field(&a.rms_prop_eps));
  f("a2c.normalize_advantage", Field(&a.normalize_advantage));
  auto& r = c.reinforce;
  f("reinforce.learning_rate", Field(&r.learning_rate));
  f("reinforce.value_learning_rate", Field(&r.value_learning_rate));
  f("reinforce.gamma", Field(&r.gamma));
  f("reinforce.baseline", Field(&r.baseline));
}

bool is_none(const std::string& s) { return s == "None" || s == "none" || s.empty(); }

}  // namespace

AgentConfig AgentConfig::from(const KeyValueConfig& kv) {
  AgentConfig c;
  std::set<std::string> known{"gamma", "network"};
  visit_fields(c, [&](const std::string& key, Field field) {
    known.insert(key);
    if (!kv.has(key)) return;
    std::visit(
        [&](auto* ptr) {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, double>) {
            *ptr = kv.get_double(key);
          } else if constexpr (std::is_same_v<T, std::int64_t>) {
            *ptr = kv.get_int(key);
          } else if constexpr (std::is_same_v<T, bool>) {
            *ptr = kv.get_bool(key);
          } else {
            const std::string s = kv.get_string(key);
            if (is_none(s)) {
              ptr->reset();
            } else {
              *ptr = kv.get_double(key);
            }
          }
        },
        field);
  });
  if (kv.has("gamma")) {
    // Shared discount, overridden per algorithm when given explicitly.
    const double g = kv.get_double("gamma");
    for (auto* target : {&c.dqn.gamma, &c.ppo.gamma, &c.a2c.gamma, &c.reinforce.gamma}) *target = g;
    if (kv.has("dqn.gamma")) c.dqn.gamma = kv.get_double("dqn.gamma");
    if (kv.has("ppo.gamma")) c.ppo.gamma = kv.get_double("ppo.gamma");
    if (kv.has("a2c.gamma")) c.a2c.gamma = kv.get_double("a2c.gamma");
    if (kv.has("reinforce.gamma")) c.reinforce.gamma = kv.get_double("reinforce.gamma");
  }
  c.network = kv.get_string("network", c.network);
  for (const auto& key : kv.keys()) {
    for (const char* prefix : {"dqn.", "ppo.", "a2c.", "reinforce."}) {
      if (key.rfind(prefix, 0) == 0 && !known.count(key)) throw ConfigError("unknown agent parameter '" + key + "'");
    }
  }
  c.validate();
  return c;
}

void AgentConfig::to(KeyValueConfig& kv) const {
  AgentConfig copy = *this;
  visit_fields(copy, [&](const std::string& key, Field field) {
    std::visit(
        [&](auto* ptr) {
          using T = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<T, double>) {
            kv.set(key, format_double(*ptr));
          } else if constexpr (std::is_same_v<T, std::int64_t>) {
            kv.set(key, std::to_string(*ptr));
          } else if constexpr (std::is_same_v<T, bool>) {
            kv.set(key, *ptr ? "true" : "false");
          } else {
            kv.set(key, ptr->has_value() ? format_double(**ptr) : "None");
          }
        },
        field);
  });
  kv.set("network", network);
}

void AgentConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid agent config: " + what);
  };
  for (double g : {dqn.gamma, ppo.gamma, a2c.gamma, reinforce.gamma}) need(g >= 0.0 && g <= 1.0, "gamma outside [0, 1]");
  for (double lr : {dqn.learning_rate, ppo.learning_rate, a2c.learning_rate, reinforce.learning_rate,
                    reinforce.value_learning_rate}) {
    need(lr > 0.0 && std::isfinite(lr), "learning rates must be positive");
  }
  need(dqn.buffer_size > 0 && dqn.batch_size > 0 && dqn.train_freq > 0 && dqn.target_update_interval > 0,
       "dqn sizes must be positive");
  need(dqn.gradient_steps == 1, "dqn.gradient_steps must be 1");
  need(dqn.exploration_fraction >= 0.0 && dqn.exploration_fraction <= 1.0, "dqn.exploration_fraction outside [0, 1]");
  need(ppo.n_steps > 0 && ppo.batch_size > 0 && ppo.n_epochs > 0, "ppo sizes must be positive");
  need(ppo.batch_size <= ppo.n_steps, "ppo.batch_size exceeds ppo.n_steps");
  need(ppo.clip_range > 0.0, "ppo.clip_range must be positive");
  need(ppo.gae_lambda >= 0.0 && ppo.gae_lambda <= 1.0 && a2c.gae_lambda >= 0.0 && a2c.gae_lambda <= 1.0,
       "gae_lambda outside [0, 1]");
  need(a2c.n_steps > 0, "a2c.n_steps must be positive");
  need(network == "standard" || network == "smoke", "network must be standard or smoke");
}

std::string AgentConfig::defaults_path() { return env::data_dir() + "/config/agent_defaults.cfg"; }

}  // namespace pbge::agents
