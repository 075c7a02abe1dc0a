#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <sstream>

#include "pbge/mdp/mdp.hpp"

using namespace pbge;
using namespace pbge::mdp;

namespace {

FiniteMdp random_mdp(Rng& rng, std::size_t n, std::size_t a) {
  FiniteMdp m(n, a, uniform(rng, 0.0, 0.95));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t act = 0; act < a; ++act) {
      std::vector<double> w(n + 1);
      double total = 0.0;
      for (auto& x : w) total += (x = uniform01(rng) < 0.5 ? 0.0 : uniform01(rng));
      if (total == 0.0) w[n] = total = 1.0;
      double acc = 0.0;
      std::size_t last = 0;
      for (std::size_t k = 0; k <= n; ++k) if (w[k] > 0.0) last = k;
      for (std::size_t k = 0; k <= n; ++k) {
        if (w[k] == 0.0) continue;
        double p = k == last ? 1.0 - acc : w[k] / total;
        acc += p;
        m.add_outcome(s, act, k, uniform(rng, -1.0, 1.0), p);
      }
    }
  }
  return m;
}

// Direct solve of (I - gamma P_pi) v = r_pi over non-terminal states.
Eigen::VectorXd linear_solve(const FiniteMdp& m, const TabularPolicy& pi) {
  const auto n = static_cast<Eigen::Index>(m.n_states());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  for (std::size_t s = 0; s < m.n_states(); ++s) {
    for (std::size_t a = 0; a < m.n_actions(); ++a) {
      const double pa = pi.probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
      for (const auto& o : m.outcomes(s, a)) {
        r[static_cast<Eigen::Index>(s)] += pa * o.probability * o.reward;
        if (!m.is_terminal(o.next)) P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o.next)) += pa * o.probability;
      }
    }
  }
  return (Eigen::MatrixXd::Identity(n, n) - m.gamma() * P).partialPivLu().solve(r);
}

GridWorld corner_grid(double gamma = 1.0) {
  std::vector<std::size_t> terminals{0, 15};
  return make_gridworld(4, 4, terminals, -1.0, gamma);
}

// Shortest path lengths to the nearest terminal cell.
std::vector<int> bfs_distances(const GridWorld& g, std::span<const std::size_t> terminal_cells) {
  std::vector<int> dist(g.rows * g.cols, -1);
  std::deque<std::size_t> q;
  for (auto c : terminal_cells) {
    dist[c] = 0;
    q.push_back(c);
  }
  while (!q.empty()) {
    std::size_t c = q.front();
    q.pop_front();
    const long r = static_cast<long>(c / g.cols), col = static_cast<long>(c % g.cols);
    const long dr[4] = {-1, 0, 1, 0}, dc[4] = {0, 1, 0, -1};
    for (int k = 0; k < 4; ++k) {
      long nr = r + dr[k], nc = col + dc[k];
      if (nr < 0 || nc < 0 || nr >= static_cast<long>(g.rows) || nc >= static_cast<long>(g.cols)) continue;
      std::size_t n = static_cast<std::size_t>(nr) * g.cols + static_cast<std::size_t>(nc);
      if (dist[n] < 0) {
        dist[n] = dist[c] + 1;
        q.push_back(n);
      }
    }
  }
  return dist;
}

// Actions attaining the optimal backup at s.
std::vector<std::size_t> optimal_actions(const FiniteMdp& m, const Eigen::VectorXd& v, std::size_t s) {
  std::vector<double> q(m.n_actions());
  for (std::size_t a = 0; a < m.n_actions(); ++a) q[a] = m.backup(s, a, v);
  double best = *std::max_element(q.begin(), q.end());
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < q.size(); ++a) if (q[a] >= best - 1e-6) out.push_back(a);
  return out;
}

}  // namespace

TEST(Return, Examples) {
  std::vector<double> ones{1, 1, 1};
  EXPECT_EQ(compute_return(ones, 0.0), 1.0);
  std::vector<double> late{0, 0, 1};
  EXPECT_DOUBLE_EQ(compute_return(late, 0.5), 0.25);
  EXPECT_EQ(compute_return({}, 0.9), 0.0);
  Rng rng(1);
  std::vector<double> r(20);
  for (auto& x : r) x = uniform(rng, -5, 5);
  for (std::size_t t = 0; t + 1 < r.size(); ++t) {
    std::span<const double> tail(r.begin() + static_cast<long>(t), r.end());
    EXPECT_EQ(compute_return(tail, 0.7), r[t] + 0.7 * compute_return(tail.subspan(1), 0.7));
  }
}

TEST(PolicyEvaluation, OneStepEpisode) {
  for (double gamma : {0.0, 0.5, 1.0}) {
    FiniteMdp m(1, 1, gamma);
    m.add_outcome(0, 0, m.terminal(), 1.0, 1.0);
    m.validate();
    EXPECT_NEAR(policy_evaluation(m, TabularPolicy::uniform(m), 1e-10)[0], 1.0, 1e-12);
  }
}

TEST(PolicyEvaluation, ThreeStateChain) {
  FiniteMdp m(3, 1, 0.5);
  m.add_outcome(0, 0, 1, 1.0, 1.0);
  m.add_outcome(1, 0, 2, 1.0, 1.0);
  m.add_outcome(2, 0, m.terminal(), 1.0, 1.0);
  EXPECT_NEAR(policy_evaluation(m, TabularPolicy::uniform(m), 1e-12)[0], 1.75, 1e-10);
}

TEST(PolicyEvaluation, UniformGridMatchesLinearSolve) {
  std::vector<std::size_t> terminals{3};
  GridWorld g = make_gridworld(2, 2, terminals, -1.0, 1.0);
  auto pi = TabularPolicy::uniform(g.mdp);
  auto v = policy_evaluation(g.mdp, pi, 1e-12);
  auto oracle = linear_solve(g.mdp, pi);
  for (std::size_t s = 0; s < g.mdp.n_states(); ++s) EXPECT_NEAR(v[static_cast<Eigen::Index>(s)], oracle[static_cast<Eigen::Index>(s)], 1e-8);
  EXPECT_EQ(v[static_cast<Eigen::Index>(g.mdp.terminal())], 0.0);
}

TEST(PolicyEvaluation, ImproperPolicyDiverges) {
  FiniteMdp m(2, 2, 1.0);
  m.add_outcome(0, 0, 0, -1.0, 1.0);
  m.add_outcome(0, 1, 1, -1.0, 1.0);
  m.add_outcome(1, 0, 1, -1.0, 1.0);
  m.add_outcome(1, 1, m.terminal(), -1.0, 1.0);
  m.validate();
  EXPECT_FALSE(m.all_policies_proper());
  EXPECT_THROW(policy_evaluation(m, TabularPolicy::uniform(m).deterministic(m, std::vector<std::size_t>{0, 0, 0}), 1e-6),
               DivergenceError);
}

TEST(Validate, ProbabilitySums) {
  FiniteMdp m(1, 1, 0.9);
  m.add_outcome(0, 0, m.terminal(), 0.0, 0.5);
  EXPECT_THROW(m.validate(), ContractViolation);
}

TEST(Validate, UndiscountedLoopWithoutPenaltyRejected) {
  FiniteMdp m(1, 2, 1.0);
  m.add_outcome(0, 0, 0, 0.0, 1.0);
  m.add_outcome(0, 1, m.terminal(), 1.0, 1.0);
  EXPECT_THROW(m.validate(), ContractViolation);
}

TEST(Greedy, TieGoesToLowestAction) {
  FiniteMdp m(1, 3, 0.9);
  for (std::size_t a = 0; a < 3; ++a) m.add_outcome(0, a, m.terminal(), 1.0, 1.0);
  auto pi = greedy_improvement(m, Eigen::VectorXd::Zero(2));
  EXPECT_EQ(pi.greedy_action(0), 0u);
  EXPECT_EQ(pi.probs(0, 0), 1.0);
}

TEST(Greedy, ManhattanValuesPointAtTerminal) {
  std::vector<std::size_t> terminals{0};
  GridWorld g = make_gridworld(3, 3, terminals, -1.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(g.mdp.total_states()));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) v[static_cast<Eigen::Index>(g.state_of(r, c))] = -static_cast<double>(r + c);
  auto pi = greedy_improvement(g.mdp, v);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (r + c == 0) continue;
      std::size_t a = pi.greedy_action(g.state_of(r, c));
      EXPECT_TRUE(a == 0 || a == 3) << r << "," << c;
      if (r == 0) EXPECT_EQ(a, 3u);
      if (c == 0) EXPECT_EQ(a, 0u);
    }
  }
}

TEST(Greedy, ImprovementIsMonotone) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    FiniteMdp m = random_mdp(rng, 2 + uniform_index(rng, 5), 1 + uniform_index(rng, 3));
    auto pi = TabularPolicy::uniform(m);
    auto v = linear_solve(m, pi);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.total_states()));
    full.head(v.size()) = v;
    auto improved = linear_solve(m, greedy_improvement(m, full));
    for (Eigen::Index s = 0; s < v.size(); ++s) EXPECT_GE(improved[s], v[s] - 1e-9);
  }
}

TEST(PolicyIteration, SingleActionUnchanged) {
  FiniteMdp m(2, 1, 0.9);
  m.add_outcome(0, 0, 1, 1.0, 1.0);
  m.add_outcome(1, 0, m.terminal(), 1.0, 1.0);
  auto sol = policy_iteration(m, 1e-10);
  EXPECT_EQ(sol.policy.probs, TabularPolicy::uniform(m).probs);
  EXPECT_NEAR(sol.values[0], 1.9, 1e-9);
}

TEST(PolicyIteration, GridworldMatchesBfs) {
  std::vector<std::size_t> terminals{0, 15};
  GridWorld g = corner_grid();
  auto dist = bfs_distances(g, terminals);
  auto sol = policy_iteration(g.mdp, 1e-10);
  for (std::size_t c = 0; c < 16; ++c) {
    if (dist[c] == 0) continue;
    EXPECT_NEAR(sol.values[static_cast<Eigen::Index>(g.cell_to_state[c])], -dist[c], 1e-8) << c;
  }
}

TEST(ValueIteration, TwoStateChain) {
  FiniteMdp m(2, 1, 0.9);
  m.add_outcome(0, 0, 1, 0.0, 1.0);
  m.add_outcome(1, 0, m.terminal(), 10.0, 1.0);
  auto sol = value_iteration(m, 1e-12);
  EXPECT_NEAR(sol.values[0], 9.0, 1e-10);
  EXPECT_NEAR(sol.values[1], 10.0, 1e-10);
}

TEST(ValueIteration, MyopicIsBestExpectedReward) {
  Rng rng(4);
  FiniteMdp base = random_mdp(rng, 4, 3);
  FiniteMdp m(4, 3, 0.0);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t a = 0; a < 3; ++a)
      for (const auto& o : base.outcomes(s, a)) m.add_outcome(s, a, o.next, o.reward, o.probability);
  auto sol = value_iteration(m, 1e-12);
  for (std::size_t s = 0; s < 4; ++s) {
    double best = -1e9;
    for (std::size_t a = 0; a < 3; ++a) {
      double e = 0;
      for (const auto& o : m.outcomes(s, a)) e += o.probability * o.reward;
      best = std::max(best, e);
    }
    EXPECT_NEAR(sol.values[static_cast<Eigen::Index>(s)], best, 1e-12);
  }
}

TEST(DynamicProgramming, PolicyAndValueIterationAgree) {
  const double tol = 1e-8;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    FiniteMdp m = random_mdp(rng, 1 + uniform_index(rng, 6), 1 + uniform_index(rng, 3));
    m.validate();
    auto pi = policy_iteration(m, tol);
    auto vi = value_iteration(m, tol);
    for (std::size_t s = 0; s < m.n_states(); ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      EXPECT_NEAR(pi.values[i], vi.values[i], 2 * tol) << "seed " << seed;
      auto opt = optimal_actions(m, vi.values, s);
      EXPECT_NE(std::find(opt.begin(), opt.end(), pi.policy.greedy_action(s)), opt.end());
    }
  }
}

TEST(EpsilonGreedy, Frequencies) {
  std::vector<double> q{0.0, 2.0, 1.0, 2.0};
  Rng rng(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(epsilon_greedy(q, 0.0, rng), 1u);
  std::array<int, 4> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[epsilon_greedy(q, 1.0, rng)];
  for (int c : counts) EXPECT_NEAR(c / double(n), 0.25, 0.01);
  int greedy = 0;
  for (int i = 0; i < n; ++i) greedy += epsilon_greedy(q, 0.2, rng) == 1u;
  EXPECT_NEAR(greedy / double(n), 0.85, 0.01);
}

TEST(Td, TrivialOverwrite) {
  FiniteMdp m(1, 1, 0.0);
  m.add_outcome(0, 0, m.terminal(), 5.0, 1.0);
  MdpSimulator env(m);
  TdOptions opt{1, 1.0, 0.0};
  Rng rng(1);
  EXPECT_EQ(sarsa0(env, opt, rng).values(0, 0), 5.0);
  EXPECT_EQ(q_learning(env, opt, rng).values(0, 0), 5.0);
}

TEST(Td, SarsaDeterministicUnderSeed) {
  GridWorld g = corner_grid();
  MdpSimulator env(g.mdp);
  TdOptions opt{500, 0.1, 0.1};
  Rng a(42), b(42);
  EXPECT_EQ(sarsa0(env, opt, a).values, sarsa0(env, opt, b).values);
}

TEST(Td, SarsaGreedyPolicyIsOptimal) {
  GridWorld g = corner_grid();
  MdpSimulator env(g.mdp);
  Rng rng(2024);
  QTable q = sarsa0(env, TdOptions{20000, 0.1, 0.1}, rng);
  auto vi = value_iteration(g.mdp, 1e-10);
  for (std::size_t s = 0; s < g.mdp.n_states(); ++s) {
    auto opt = optimal_actions(g.mdp, vi.values, s);
    EXPECT_NE(std::find(opt.begin(), opt.end(), q.greedy_action(s)), opt.end()) << s;
  }
}

TEST(Td, QLearningMatchesValueIteration) {
  GridWorld g = corner_grid();
  MdpSimulator env(g.mdp);
  Rng rng(99);
  QTable q = q_learning(env, TdOptions{50000, 0.1, 0.1}, rng);
  auto vi = value_iteration(g.mdp, 1e-10);
  for (std::size_t s = 0; s < g.mdp.n_states(); ++s) {
    EXPECT_NEAR(q.max_value(s), vi.values[static_cast<Eigen::Index>(s)], 0.05);
    auto opt = optimal_actions(g.mdp, vi.values, s);
    EXPECT_NE(std::find(opt.begin(), opt.end(), q.greedy_action(s)), opt.end());
  }
  for (std::size_t a = 0; a < 4; ++a) EXPECT_EQ(q.values(static_cast<Eigen::Index>(g.mdp.terminal()), static_cast<Eigen::Index>(a)), 0.0);
}

TEST(Msve, Examples) {
  std::vector<double> v{1, 2, 3, 4};
  std::vector<double> mu4(4, 0.25);
  EXPECT_EQ(msve(v, v, mu4), 0.0);
  std::vector<double> hat{0, 0}, truth{2, 999}, mu{1, 0};
  EXPECT_EQ(msve(hat, truth, mu), 4.0);
  std::vector<double> shifted{2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(msve(v, shifted, mu4), 1.0);
}

TEST(ImportanceRatio, Examples) {
  EXPECT_EQ(importance_ratio(0.4, 0.4), 1.0);
  EXPECT_DOUBLE_EQ(importance_ratio(0.9, 0.3), 3.0);
  EXPECT_EQ(importance_ratio(0.0, 0.7), 0.0);
  EXPECT_THROW(importance_ratio(0.5, 0.0), ContractViolation);
}

TEST(MdpFile, RoundTrip) {
  Rng rng(5);
  FiniteMdp m = random_mdp(rng, 3, 2);
  std::stringstream ss;
  write_mdp(ss, m);
  FiniteMdp back = parse_mdp(ss);
  EXPECT_EQ(back.n_states(), 3u);
  EXPECT_EQ(back.gamma(), m.gamma());
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) {
      ASSERT_EQ(back.outcomes(s, a).size(), m.outcomes(s, a).size());
      for (std::size_t k = 0; k < m.outcomes(s, a).size(); ++k) {
        EXPECT_EQ(back.outcomes(s, a)[k].next, m.outcomes(s, a)[k].next);
        EXPECT_EQ(back.outcomes(s, a)[k].reward, m.outcomes(s, a)[k].reward);
        EXPECT_EQ(back.outcomes(s, a)[k].probability, m.outcomes(s, a)[k].probability);
      }
    }
}

TEST(MdpFile, ParsesAndValidates) {
  std::istringstream good("# chain\nstates 1\nactions 1\ngamma 0.5\ntransition 0 0 T 2 1\n");
  EXPECT_EQ(parse_mdp(good).outcomes(0, 0)[0].reward, 2.0);
  std::istringstream bad("states 1\nactions 1\ngamma 0.5\ntransition 0 0 T 2 0.7\n");
  EXPECT_THROW(parse_mdp(bad), ConfigError);
  std::istringstream junk("states 1\nbogus 3\n");
  EXPECT_THROW(parse_mdp(junk), ConfigError);
}
