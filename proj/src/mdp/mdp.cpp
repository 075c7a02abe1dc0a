#include "pbge/mdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace pbge::mdp {

namespace {

constexpr std::size_t kEvaluationSweepCap = 200000;
constexpr double kProbabilityTolerance = 1e-12;

// Sweep-to-sweep change that guarantees `tolerance` distance to the fixed point.
double sweep_threshold(double tolerance, double gamma) {
  return gamma < 1.0 ? tolerance * (1.0 - gamma) : tolerance;
}

}  // namespace

// ---------------------------------------------------------------------------
// FiniteMdp

FiniteMdp::FiniteMdp(std::size_t n_states, std::size_t n_actions, double gamma)
    : n_states_(n_states), n_actions_(n_actions), gamma_(gamma), dynamics_(n_states * n_actions) {
  if (n_states == 0 || n_actions == 0) throw ContractViolation("FiniteMdp needs at least one state and action");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractViolation("FiniteMdp: gamma must lie in [0, 1]");
  start_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_states), 1.0 / static_cast<double>(n_states));
}

void FiniteMdp::add_outcome(std::size_t s, std::size_t a, std::size_t next, double reward, double probability) {
  if (s >= n_states_ || a >= n_actions_ || next > n_states_) {
    throw ContractViolation("add_outcome: index out of range");
  }
  if (probability < 0.0) throw ContractViolation("add_outcome: negative probability");
  dynamics_[s * n_actions_ + a].push_back({next, reward, probability});
}

const std::vector<Outcome>& FiniteMdp::outcomes(std::size_t s, std::size_t a) const {
  return dynamics_.at(s * n_actions_ + a);
}

void FiniteMdp::set_start_distribution(Eigen::VectorXd mu) {
  if (mu.size() != static_cast<Eigen::Index>(n_states_)) throw ContractViolation("start distribution length");
  if (std::abs(mu.sum() - 1.0) > kProbabilityTolerance || mu.minCoeff() < 0.0) {
    throw ContractViolation("start distribution must be a probability vector");
  }
  start_ = std::move(mu);
}

void FiniteMdp::validate() const {
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      double total = 0.0;
      for (const auto& o : outcomes(s, a)) total += o.probability;
      if (std::abs(total - 1.0) > kProbabilityTolerance) {
        std::ostringstream msg;
        msg << "probabilities for (s=" << s << ", a=" << a << ") sum to " << std::setprecision(17) << total;
        throw ContractViolation(msg.str());
      }
    }
  }
  if (gamma_ == 1.0 && !all_policies_proper()) {
    bool penalised = true;
    for (std::size_t s = 0; s < n_states_ && penalised; ++s) {
      for (std::size_t a = 0; a < n_actions_ && penalised; ++a) {
        for (const auto& o : outcomes(s, a)) {
          if (!is_terminal(o.next) && o.probability > 0.0 && !(o.reward < 0.0)) penalised = false;
        }
      }
    }
    if (!has_proper_policy() || !penalised) {
      throw ContractViolation("gamma = 1 requires episodes that terminate with probability one");
    }
  }
}

bool FiniteMdp::all_policies_proper() const {
  // Shrink to the largest set in which some action keeps all its mass; any
  // survivor can be trapped forever by a stationary policy.
  std::vector<bool> in_trap(n_states_, true);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t s = 0; s < n_states_; ++s) {
      if (!in_trap[s]) continue;
      bool can_stay = false;
      for (std::size_t a = 0; a < n_actions_ && !can_stay; ++a) {
        can_stay = std::all_of(outcomes(s, a).begin(), outcomes(s, a).end(), [&](const Outcome& o) {
          return o.probability == 0.0 || (!is_terminal(o.next) && in_trap[o.next]);
        });
      }
      if (!can_stay) {
        in_trap[s] = false;
        changed = true;
      }
    }
  }
  return std::none_of(in_trap.begin(), in_trap.end(), [](bool b) { return b; });
}

bool FiniteMdp::has_proper_policy() const {
  // States from which some action reaches the already-solved set with positive probability.
  std::vector<bool> reaches(n_states_ + 1, false);
  reaches[n_states_] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t s = 0; s < n_states_; ++s) {
      if (reaches[s]) continue;
      for (std::size_t a = 0; a < n_actions_ && !reaches[s]; ++a) {
        for (const auto& o : outcomes(s, a)) {
          if (o.probability > 0.0 && reaches[o.next]) {
            reaches[s] = true;
            changed = true;
            break;
          }
        }
      }
    }
  }
  return std::all_of(reaches.begin(), reaches.end(), [](bool b) { return b; });
}

double FiniteMdp::backup(std::size_t s, std::size_t a, const Eigen::VectorXd& values) const {
  double q = 0.0;
  for (const auto& o : outcomes(s, a)) {
    q += o.probability * (o.reward + gamma_ * values[static_cast<Eigen::Index>(o.next)]);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Policies and Q tables

TabularPolicy TabularPolicy::uniform(const FiniteMdp& mdp) {
  TabularPolicy p;
  p.probs = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(mdp.total_states()),
                                      static_cast<Eigen::Index>(mdp.n_actions()),
                                      1.0 / static_cast<double>(mdp.n_actions()));
  return p;
}

TabularPolicy TabularPolicy::deterministic(const FiniteMdp& mdp, std::span<const std::size_t> actions) {
  if (actions.size() != mdp.total_states()) throw ContractViolation("deterministic policy needs one action per state");
  TabularPolicy p;
  p.probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mdp.total_states()),
                                  static_cast<Eigen::Index>(mdp.n_actions()));
  for (std::size_t s = 0; s < actions.size(); ++s) {
    p.probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[s])) = 1.0;
  }
  return p;
}

std::size_t TabularPolicy::greedy_action(std::size_t s) const {
  Eigen::VectorXd row = probs.row(static_cast<Eigen::Index>(s));
  return argmax(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
}

void TabularPolicy::validate() const {
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    if (probs.row(s).minCoeff() < 0.0 || std::abs(probs.row(s).sum() - 1.0) > kProbabilityTolerance) {
      throw ContractViolation("policy row " + std::to_string(s) + " is not a distribution");
    }
  }
}

QTable::QTable(const FiniteMdp& mdp)
    : values(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mdp.total_states()),
                                   static_cast<Eigen::Index>(mdp.n_actions()))) {}

std::span<const double> QTable::row(std::size_t s) const {
  // Row-major copy is not needed: pick entries through a small buffer.
  thread_local std::vector<double> buffer;
  buffer.resize(static_cast<std::size_t>(values.cols()));
  for (Eigen::Index a = 0; a < values.cols(); ++a) buffer[static_cast<std::size_t>(a)] = values(static_cast<Eigen::Index>(s), a);
  return buffer;
}

double QTable::max_value(std::size_t s) const { return values.row(static_cast<Eigen::Index>(s)).maxCoeff(); }

std::size_t QTable::greedy_action(std::size_t s) const { return argmax(row(s)); }

// ---------------------------------------------------------------------------
// Dynamic programming

double compute_return(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractViolation("compute_return: gamma must lie in [0, 1]");
  double g = 0.0;
  for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) g = *it + gamma * g;
  return g;
}

std::size_t argmax(std::span<const double> row) {
  if (row.empty()) throw ContractViolation("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

Eigen::VectorXd policy_evaluation(const FiniteMdp& mdp, const TabularPolicy& policy, double tolerance) {
  if (!(tolerance > 0.0)) throw ContractViolation("policy_evaluation: tolerance must be positive");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mdp.total_states()));
  for (std::size_t sweep = 0; sweep < kEvaluationSweepCap; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
      double updated = 0.0;
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
        const double pa = policy.probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
        if (pa != 0.0) updated += pa * mdp.backup(s, a, v);
      }
      const auto idx = static_cast<Eigen::Index>(s);
      delta = std::max(delta, std::abs(updated - v[idx]));
      v[idx] = updated;
    }
    if (!std::isfinite(delta)) break;
    if (delta < tolerance) return v;
  }
  throw DivergenceError("policy_evaluation did not converge; the policy may never terminate");
}

TabularPolicy greedy_improvement(const FiniteMdp& mdp, const Eigen::VectorXd& values) {
  if (values.size() != static_cast<Eigen::Index>(mdp.total_states())) {
    throw ContractViolation("greedy_improvement: value vector length");
  }
  std::vector<std::size_t> actions(mdp.total_states(), 0);
  std::vector<double> q(mdp.n_actions());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) q[a] = mdp.backup(s, a, values);
    actions[s] = argmax(q);
  }
  return TabularPolicy::deterministic(mdp, actions);
}

DpSolution policy_iteration(const FiniteMdp& mdp, double tolerance) {
  const double inner = sweep_threshold(tolerance, mdp.gamma());
  const std::size_t cap = mdp.n_states() * mdp.n_actions() * 10;
  DpSolution sol{TabularPolicy::uniform(mdp), {}, 0};
  sol.values = policy_evaluation(mdp, sol.policy, inner);
  for (std::size_t it = 0; it < cap; ++it) {
    TabularPolicy next = greedy_improvement(mdp, sol.values);
    sol.iterations = it + 1;
    const bool stable = next.probs == sol.policy.probs;
    sol.policy = std::move(next);
    sol.values = policy_evaluation(mdp, sol.policy, inner);
    if (stable) return sol;
  }
  throw DivergenceError("policy_iteration exceeded " + std::to_string(cap) + " improvement steps");
}

DpSolution value_iteration(const FiniteMdp& mdp, double tolerance) {
  if (!(tolerance > 0.0)) throw ContractViolation("value_iteration: tolerance must be positive");
  const double threshold = sweep_threshold(tolerance, mdp.gamma());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mdp.total_states()));
  for (std::size_t sweep = 0; sweep < kEvaluationSweepCap; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < mdp.n_actions(); ++a) best = std::max(best, mdp.backup(s, a, v));
      const auto idx = static_cast<Eigen::Index>(s);
      delta = std::max(delta, std::abs(best - v[idx]));
      v[idx] = best;
    }
    if (!std::isfinite(delta)) break;
    if (delta < threshold) return DpSolution{greedy_improvement(mdp, v), v, sweep + 1};
  }
  throw DivergenceError("value_iteration did not converge");
}

// ---------------------------------------------------------------------------
// Sampling and TD control

std::size_t epsilon_greedy(std::span<const double> q_row, double epsilon, Rng& rng) {
  if (q_row.empty()) throw ContractViolation("epsilon_greedy: empty action row");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractViolation("epsilon_greedy: epsilon must lie in [0, 1]");
  if (epsilon > 0.0 && uniform01(rng) < epsilon) return uniform_index(rng, q_row.size());
  return argmax(q_row);
}

namespace {

std::size_t sample_index(const double* probs, std::size_t n, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the cumulative sum: take the last positive entry.
  for (std::size_t i = n; i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return n - 1;
}

}  // namespace

std::size_t MdpSimulator::reset(Rng& rng) const {
  const auto& mu = mdp_->start_distribution();
  return sample_index(mu.data(), static_cast<std::size_t>(mu.size()), uniform01(rng));
}

MdpSimulator::Step MdpSimulator::step(std::size_t s, std::size_t a, Rng& rng) const {
  const auto& outs = mdp_->outcomes(s, a);
  if (outs.size() == 1) return {outs[0].next, outs[0].reward};
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& o : outs) {
    acc += o.probability;
    if (u < acc) return {o.next, o.reward};
  }
  return {outs.back().next, outs.back().reward};
}

QTable sarsa0(const MdpSimulator& env, const TdOptions& options, Rng& rng) {
  const FiniteMdp& mdp = env.mdp();
  QTable q(mdp);
  for (std::size_t episode = 0; episode < options.episodes; ++episode) {
    std::size_t s = env.reset(rng);
    std::size_t a = epsilon_greedy(q.row(s), options.epsilon, rng);
    for (std::size_t t = 0; t < options.max_episode_steps; ++t) {
      const auto [next, reward] = env.step(s, a, rng);
      const std::size_t next_a = mdp.is_terminal(next) ? 0 : epsilon_greedy(q.row(next), options.epsilon, rng);
      const auto si = static_cast<Eigen::Index>(s);
      const auto ai = static_cast<Eigen::Index>(a);
      const double target = reward + mdp.gamma() * q.values(static_cast<Eigen::Index>(next), static_cast<Eigen::Index>(next_a));
      q.values(si, ai) += options.alpha * (target - q.values(si, ai));
      if (mdp.is_terminal(next)) break;
      s = next;
      a = next_a;
    }
  }
  return q;
}

QTable q_learning(const MdpSimulator& env, const TdOptions& options, Rng& rng) {
  const FiniteMdp& mdp = env.mdp();
  QTable q(mdp);
  for (std::size_t episode = 0; episode < options.episodes; ++episode) {
    std::size_t s = env.reset(rng);
    for (std::size_t t = 0; t < options.max_episode_steps; ++t) {
      const std::size_t a = epsilon_greedy(q.row(s), options.epsilon, rng);
      const auto [next, reward] = env.step(s, a, rng);
      const auto si = static_cast<Eigen::Index>(s);
      const auto ai = static_cast<Eigen::Index>(a);
      const double target = reward + mdp.gamma() * q.max_value(next);
      q.values(si, ai) += options.alpha * (target - q.values(si, ai));
      if (mdp.is_terminal(next)) break;
      s = next;
    }
  }
  return q;
}

double msve(std::span<const double> values_hat, std::span<const double> values_true, std::span<const double> mu) {
  if (values_hat.size() != values_true.size() || mu.size() != values_true.size()) {
    throw ContractViolation("msve: length mismatch");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < mu.size(); ++s) {
    if (mu[s] == 0.0) continue;
    const double d = values_true[s] - values_hat[s];
    total += mu[s] * d * d;
  }
  return total;
}

double importance_ratio(double pi_prob, double b_prob) {
  if (!(b_prob > 0.0)) throw ContractViolation("importance_ratio: behaviour probability must be positive");
  return pi_prob / b_prob;
}

// ---------------------------------------------------------------------------
// Gridworld and text format

GridWorld make_gridworld(std::size_t rows, std::size_t cols, std::span<const std::size_t> terminal_cells,
                         double step_reward, double gamma) {
  std::vector<bool> is_term(rows * cols, false);
  for (auto c : terminal_cells) is_term.at(c) = true;
  std::size_t n = 0;
  std::vector<std::size_t> cell_to_state(rows * cols);
  for (std::size_t c = 0; c < rows * cols; ++c) {
    if (!is_term[c]) cell_to_state[c] = n++;
  }
  for (std::size_t c = 0; c < rows * cols; ++c) {
    if (is_term[c]) cell_to_state[c] = n;
  }
  GridWorld g{rows, cols, cell_to_state, FiniteMdp(n, 4, gamma)};
  constexpr int dr[4] = {-1, 0, 1, 0};
  constexpr int dc[4] = {0, 1, 0, -1};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (is_term[r * cols + c]) continue;
      for (std::size_t a = 0; a < 4; ++a) {
        const long nr = static_cast<long>(r) + dr[a];
        const long nc = static_cast<long>(c) + dc[a];
        std::size_t target = g.state_of(r, c);
        if (nr >= 0 && nc >= 0 && nr < static_cast<long>(rows) && nc < static_cast<long>(cols)) {
          target = g.state_of(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc));
        }
        g.mdp.add_outcome(g.state_of(r, c), a, target, step_reward, 1.0);
      }
    }
  }
  return g;
}

FiniteMdp parse_mdp(std::istream& is) {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  double gamma = -1.0;
  std::vector<double> start;
  struct Row {
    std::size_t s, a;
    std::string next;
    double r, p;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw ConfigError("mdp line " + std::to_string(line_no) + ": " + why);
    };
    if (key == "states") {
      if (!(ls >> n_states)) fail("bad state count");
    } else if (key == "actions") {
      if (!(ls >> n_actions)) fail("bad action count");
    } else if (key == "gamma") {
      if (!(ls >> gamma)) fail("bad gamma");
    } else if (key == "start") {
      double p;
      while (ls >> p) start.push_back(p);
    } else if (key == "transition") {
      Row row{};
      if (!(ls >> row.s >> row.a >> row.next >> row.r >> row.p)) fail("expected: transition s a s' r p");
      rows.push_back(row);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (n_states == 0 || n_actions == 0 || gamma < 0.0) throw ConfigError("mdp: states, actions and gamma are required");
  FiniteMdp mdp(n_states, n_actions, gamma);
  for (const auto& row : rows) {
    std::size_t next = 0;
    if (row.next == "T") {
      next = mdp.terminal();
    } else {
      try {
        next = static_cast<std::size_t>(std::stoul(row.next));
      } catch (const std::exception&) {
        throw ConfigError("mdp: bad next state '" + row.next + "'");
      }
    }
    try {
      mdp.add_outcome(row.s, row.a, next, row.r, row.p);
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("mdp: ") + e.what());
    }
  }
  if (!start.empty()) {
    Eigen::VectorXd mu = Eigen::Map<Eigen::VectorXd>(start.data(), static_cast<Eigen::Index>(start.size()));
    try {
      mdp.set_start_distribution(mu);
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("mdp: ") + e.what());
    }
  }
  try {
    mdp.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("mdp: ") + e.what());
  }
  return mdp;
}

FiniteMdp load_mdp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open mdp file '" + path + "'");
  return parse_mdp(is);
}

void write_mdp(std::ostream& os, const FiniteMdp& mdp) {
  os << std::setprecision(17);
  os << "states " << mdp.n_states() << "\nactions " << mdp.n_actions() << "\ngamma " << mdp.gamma() << "\nstart";
  for (Eigen::Index i = 0; i < mdp.start_distribution().size(); ++i) os << ' ' << mdp.start_distribution()[i];
  os << '\n';
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      for (const auto& o : mdp.outcomes(s, a)) {
        os << "transition " << s << ' ' << a << ' ';
        if (mdp.is_terminal(o.next)) {
          os << 'T';
        } else {
          os << o.next;
        }
        os << ' ' << o.reward << ' ' << o.probability << '\n';
      }
    }
  }
}

}  // namespace pbge::mdp
