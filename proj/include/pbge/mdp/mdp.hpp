#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pbge/common.hpp"

namespace pbge::mdp {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Outcome {
  std::size_t next;
  double reward;
  double probability;
};

/// Tabular dynamics p(s', r | s, a). States 0..n_states-1 are ordinary; index
/// n_states is the absorbing terminal state, whose value is always zero.
class FiniteMdp {
 public:
  FiniteMdp(std::size_t n_states, std::size_t n_actions, double gamma);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t terminal() const { return n_states_; }
  std::size_t total_states() const { return n_states_ + 1; }
  double gamma() const { return gamma_; }
  bool is_terminal(std::size_t s) const { return s == n_states_; }

  void add_outcome(std::size_t s, std::size_t a, std::size_t next, double reward, double probability);
  const std::vector<Outcome>& outcomes(std::size_t s, std::size_t a) const;

  /// Distribution over the non-terminal states; defaults to uniform.
  const Eigen::VectorXd& start_distribution() const { return start_; }
  void set_start_distribution(Eigen::VectorXd mu);

  /// Probabilities sum to one per (s, a); gamma in [0, 1]; with gamma == 1
  /// either every policy terminates, or some policy does and every
  /// non-terminating transition is penalised so looping policies diverge.
  void validate() const;

  bool all_policies_proper() const;
  bool has_proper_policy() const;

  /// Expected one-step backup sum_{s',r} p (r + gamma v(s')).
  double backup(std::size_t s, std::size_t a, const Eigen::VectorXd& values) const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  double gamma_;
  std::vector<std::vector<Outcome>> dynamics_;
  Eigen::VectorXd start_;
};

/// Row-stochastic matrix over total_states() x n_actions().
struct TabularPolicy {
  Eigen::MatrixXd probs;

  static TabularPolicy uniform(const FiniteMdp& mdp);
  static TabularPolicy deterministic(const FiniteMdp& mdp, std::span<const std::size_t> actions);
  std::size_t greedy_action(std::size_t s) const;
  void validate() const;
};

struct QTable {
  Eigen::MatrixXd values;  // total_states() x n_actions(); terminal row stays zero

  explicit QTable(const FiniteMdp& mdp);
  std::span<const double> row(std::size_t s) const;
  double max_value(std::size_t s) const;
  std::size_t greedy_action(std::size_t s) const;
};

/// Discounted sum of a finished episode's rewards.
double compute_return(std::span<const double> rewards, double gamma);

/// Lowest index among the maximal entries.
std::size_t argmax(std::span<const double> row);

/// Iterative evaluation; stops once a sweep changes no state by `tolerance` or more.
Eigen::VectorXd policy_evaluation(const FiniteMdp& mdp, const TabularPolicy& policy, double tolerance);

TabularPolicy greedy_improvement(const FiniteMdp& mdp, const Eigen::VectorXd& values);

struct DpSolution {
  TabularPolicy policy;
  Eigen::VectorXd values;
  std::size_t iterations = 0;
};

/// Both solvers return values within `tolerance` of the fixed point when gamma < 1.
DpSolution policy_iteration(const FiniteMdp& mdp, double tolerance);
DpSolution value_iteration(const FiniteMdp& mdp, double tolerance);

std::size_t epsilon_greedy(std::span<const double> q_row, double epsilon, Rng& rng);

/// Sampling view of a FiniteMdp for model-free learners.
class MdpSimulator {
 public:
  struct Step {
    std::size_t next;
    double reward;
  };

  explicit MdpSimulator(const FiniteMdp& mdp) : mdp_(&mdp) {}
  const FiniteMdp& mdp() const { return *mdp_; }
  std::size_t reset(Rng& rng) const;
  Step step(std::size_t s, std::size_t a, Rng& rng) const;

 private:
  const FiniteMdp* mdp_;
};

struct TdOptions {
  std::size_t episodes = 1000;
  double alpha = 0.1;
  double epsilon = 0.1;
  std::size_t max_episode_steps = 10000;
};

QTable sarsa0(const MdpSimulator& env, const TdOptions& options, Rng& rng);
QTable q_learning(const MdpSimulator& env, const TdOptions& options, Rng& rng);

double msve(std::span<const double> values_hat, std::span<const double> values_true, std::span<const double> mu);

double importance_ratio(double pi_prob, double b_prob);

/// Deterministic grid with moves {up, right, down, left}; bumping a wall stays put.
struct GridWorld {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> cell_to_state;  // terminal cells map to mdp.terminal()
  FiniteMdp mdp{1, 1, 0.0};

  std::size_t state_of(std::size_t r, std::size_t c) const { return cell_to_state[r * cols + c]; }
};

GridWorld make_gridworld(std::size_t rows, std::size_t cols, std::span<const std::size_t> terminal_cells,
                         double step_reward, double gamma);

/// Plain-text description:
///   states N / actions A / gamma G / [start p0 p1 ...] /
///   transition s a s' r p   (s' may be T for the terminal state)
FiniteMdp parse_mdp(std::istream& is);
FiniteMdp load_mdp(const std::string& path);
void write_mdp(std::ostream& os, const FiniteMdp& mdp);

}  // namespace pbge::mdp
