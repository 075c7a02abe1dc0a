#include "pbge/harness/recipe.hpp"

#include <filesystem>
#include <set>
#include <sstream>

#include "pbge/obs/pipeline.hpp"

namespace pbge::harness {

namespace {

const std::set<std::string> kTopLevel{"name",          "algorithms",     "total_timesteps", "eval_every",
                                      "eval_episodes", "final_episodes", "ci_runnable"};
const std::set<std::string> kAlgorithms{"dqn", "double_dqn", "a2c", "ppo", "reinforce"};

std::set<std::string> env_keys() {
  KeyValueConfig kv;
  env::EnvConfig{}.to(kv);
  const auto keys = kv.keys();
  return {keys.begin(), keys.end()};
}

void check_keys(const KeyValueConfig& kv, const std::string& where) {
  static const std::set<std::string> envk = env_keys();
  for (const auto& key : kv.keys()) {
    const auto dot = key.find('.');
    const std::string head = dot == std::string::npos ? key : key.substr(0, dot);
    const std::string rest = dot == std::string::npos ? "" : key.substr(dot + 1);
    bool ok = false;
    if (dot == std::string::npos) ok = kTopLevel.count(key) != 0;
    else if (head == "env" || head == "eval") ok = envk.count(rest) != 0;
    else if (head == "agent") ok = true;  // checked by AgentConfig
    if (!ok) throw ConfigError(where + ": unknown recipe key '" + key + "'");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::uint64_t positive(const KeyValueConfig& kv, const std::string& key, std::uint64_t fallback, bool allow_zero) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  if (v < 0 || (!allow_zero && v == 0)) throw ConfigError("recipe: " + key + " out of range");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

Recipe Recipe::from(const KeyValueConfig& source, const std::string& profile) {
  if (profile != "full" && profile != "smoke") throw ConfigError("unknown profile '" + profile + "'");
  KeyValueConfig kv;
  KeyValueConfig smoke = source.section("smoke");
  for (const auto& [k, v] : source.entries()) {
    if (k.rfind("smoke.", 0) != 0) kv.set(k, v);
  }
  check_keys(kv, "recipe");
  check_keys(smoke, "recipe smoke profile");
  if (profile == "smoke") {
    // Desk-scale schedule unless the profile says otherwise.
    kv.set("total_timesteps", "50000");
    kv.set("eval_every", "2000");
    kv.set("eval_episodes", "5");
    kv.set("ci_runnable", "true");
    kv.merge(smoke);
  }

  Recipe r;
  r.name = kv.get_string("name", "custom");
  r.algorithms = split_list(kv.get_string("algorithms", "ppo,a2c,dqn"));
  for (const auto& a : r.algorithms) {
    if (!kAlgorithms.count(a)) throw ConfigError("recipe: unknown algorithm '" + a + "'");
  }
  r.total_timesteps = positive(kv, "total_timesteps", r.total_timesteps, true);
  r.eval_every = positive(kv, "eval_every", r.eval_every, false);
  r.eval_episodes = positive(kv, "eval_episodes", r.eval_episodes, false);
  r.final_episodes = positive(kv, "final_episodes", r.final_episodes, false);
  r.ci_runnable = kv.get_bool("ci_runnable", profile == "smoke");

  const KeyValueConfig env_kv = kv.section("env");
  KeyValueConfig eval_kv = env_kv;
  eval_kv.merge(kv.section("eval"));
  r.env = env::EnvConfig::from(env_kv);
  r.eval_env = env::EnvConfig::from(eval_kv);
  r.agent = agents::AgentConfig::from(kv.section("agent"));
  (void)r.arch();
  return r;
}

Recipe Recipe::load(const std::string& name_or_path, const std::string& profile) {
  std::string path = name_or_path;
  if (!std::filesystem::exists(path)) path = recipes_dir() + "/" + name_or_path + ".recipe";
  if (!std::filesystem::exists(path)) throw ConfigError("no recipe named '" + name_or_path + "'");
  return from(KeyValueConfig::load(path), profile);
}

KeyValueConfig Recipe::resolved() const {
  KeyValueConfig kv;
  kv.set("name", name);
  std::string algos;
  for (const auto& a : algorithms) algos += (algos.empty() ? "" : ",") + a;
  kv.set("algorithms", algos);
  kv.set("total_timesteps", std::to_string(total_timesteps));
  kv.set("eval_every", std::to_string(eval_every));
  kv.set("eval_episodes", std::to_string(eval_episodes));
  kv.set("final_episodes", std::to_string(final_episodes));
  kv.set("ci_runnable", ci_runnable ? "true" : "false");
  auto prefixed = [&](const std::string& prefix, const KeyValueConfig& part) {
    for (const auto& [k, v] : part.entries()) kv.set(prefix + k, v);
  };
  KeyValueConfig e, ev, ag;
  env.to(e);
  eval_env.to(ev);
  agent.to(ag);
  prefixed("env.", e);
  prefixed("eval.", ev);
  prefixed("agent.", ag);
  return kv;
}

agents::NetArch Recipe::arch() const {
  if (!env.transpose) throw ConfigError("recipe: the networks need channels-first observations (env.transpose)");
  const obs::ObsConfig oc = obs::ObsConfig::from(env);
  const obs::ObsConfig eoc = obs::ObsConfig::from(eval_env);
  if (oc.shape() != eoc.shape()) throw ConfigError("recipe: evaluation observations differ in shape from training");
  if (agent.network == "standard") {
    if (oc.size != 84) throw ConfigError("recipe: the standard network needs 84 x 84 observations");
    return agents::NetArch::standard(oc.channels());
  }
  return agents::NetArch::smoke(oc.channels(), oc.size);
}

std::string recipes_dir() { return env::data_dir() + "/recipes"; }

std::vector<std::string> shipped_recipes() { return {"I", "II", "III", "IV", "V", "VI", "eased"}; }

}  // namespace pbge::harness
