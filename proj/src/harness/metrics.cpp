#include "pbge/harness/metrics.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "pbge/config.hpp"
#include "pbge/tensor/serialize.hpp"

namespace pbge::harness {

namespace {

double population_std(std::span<const double> xs, double mean) {
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

template <class T>
T parse_field(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

constexpr const char* kHeader =
    "step,episodes,mean_reward,reward_std,mean_length,length_std,success_rate,efficiency,"
    "train_episodes,train_mean_reward,train_mean_length,train_success_rate,loss,updates";

}  // namespace

Metrics Metrics::from(std::span<const EpisodeResult> episodes) {
  Metrics m;
  m.episodes = episodes.size();
  if (episodes.empty()) return m;
  std::vector<double> rewards, lengths;
  std::size_t successes = 0;
  for (const auto& e : episodes) {
    rewards.push_back(e.reward);
    lengths.push_back(e.length);
    successes += e.success;
  }
  const double n = static_cast<double>(episodes.size());
  for (double r : rewards) m.mean_reward += r;
  for (double l : lengths) m.mean_length += l;
  m.mean_reward /= n;
  m.mean_length /= n;
  m.reward_std = population_std(rewards, m.mean_reward);
  m.length_std = population_std(lengths, m.mean_length);
  m.success_rate = static_cast<double>(successes) / n;
  m.efficiency = m.mean_length > 0.0 ? m.mean_reward / m.mean_length : 0.0;
  return m;
}

EpisodeResult run_episode(obs::ObservationEnv& env, const Policy& policy) {
  EpisodeResult r;
  obs::ObsStep s = env.reset();
  while (true) {
    s = env.step(policy(s.observation));
    r.reward += s.reward;
    ++r.length;
    if (s.terminated || s.truncated) {
      r.success = s.info.success;
      return r;
    }
  }
}

Metrics evaluate(const Policy& policy, const env::EnvConfig& config, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw ContractViolation("evaluate needs at least one episode");
  std::vector<EpisodeResult> results;
  for (std::size_t i = 0; i < episodes; ++i) {
    env::EnvConfig c = config;
    c.seed = seed + i;
    obs::ObservationEnv env(c);
    results.push_back(run_episode(env, policy));
  }
  return Metrics::from(results);
}

Metrics random_baseline(const env::EnvConfig& config, std::size_t episodes, std::uint64_t seed,
                        std::vector<std::size_t>* action_counts) {
  if (episodes == 0) throw ContractViolation("random_baseline needs at least one episode");
  if (action_counts) action_counts->assign(env::kNumActions, 0);
  Rng rng(seed ^ 0x5eed0fba5e11e5ULL);
  std::vector<EpisodeResult> results;
  for (std::size_t i = 0; i < episodes; ++i) {
    env::EnvConfig c = config;
    c.seed = seed + i;
    c.render_frames = false;
    env::GripperEnv env(c);
    env.reset();
    EpisodeResult r;
    while (true) {
      const auto a = uniform_index(rng, env::kNumActions);
      if (action_counts) ++(*action_counts)[a];
      const env::StepResult s = env.step(static_cast<int>(a));
      r.reward += s.reward;
      ++r.length;
      if (s.terminated || s.truncated) {
        r.success = s.info.success;
        break;
      }
    }
    results.push_back(r);
  }
  return Metrics::from(results);
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << kHeader << '\n';
  for (const auto& r : rows) {
    const Metrics& m = r.eval;
    os << r.step << ',' << m.episodes << ',' << format_double(m.mean_reward) << ',' << format_double(m.reward_std)
       << ',' << format_double(m.mean_length) << ',' << format_double(m.length_std) << ','
       << format_double(m.success_rate) << ',' << format_double(m.efficiency) << ',' << r.train_episodes << ','
       << format_double(r.train_mean_reward) << ',' << format_double(r.train_mean_length) << ','
       << format_double(r.train_success_rate) << ',' << format_double(r.loss) << ',' << r.updates << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kHeader) throw FormatError("metrics csv: unexpected header");
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 14) throw FormatError("metrics csv line " + std::to_string(lineno) + ": expected 14 fields");
    const auto d = [&](std::size_t i) { return parse_field<double>(f[i]); };
    const auto u = [&](std::size_t i) { return parse_field<std::uint64_t>(f[i]); };
    MetricsRow r;
    r.step = u(0);
    r.eval.episodes = u(1);
    r.eval.mean_reward = d(2);
    r.eval.reward_std = d(3);
    r.eval.mean_length = d(4);
    r.eval.length_std = d(5);
    r.eval.success_rate = d(6);
    r.eval.efficiency = d(7);
    r.train_episodes = u(8);
    r.train_mean_reward = d(9);
    r.train_mean_length = d(10);
    r.train_success_rate = d(11);
    r.loss = d(12);
    r.updates = u(13);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pbge::harness
