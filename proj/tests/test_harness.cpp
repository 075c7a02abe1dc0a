#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pbge/harness/report.hpp"
#include "pbge/harness/train.hpp"

using namespace pbge;
using namespace pbge::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pbge_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

// Small, fast configuration for loop tests.
Recipe tiny_recipe(std::uint64_t eval_every = 100) {
  std::istringstream is(R"(
name = tiny
algorithms = ppo,a2c,dqn,reinforce
total_timesteps = 400
eval_every = 100
eval_episodes = 2
final_episodes = 3
env.seed = 5
env.clutter_items = 0
env.spawn_radius_fraction = 0.1
env.reward_func = budget
env.obs_size = 28
env.view_scale = 0.5
env.max_timesteps = 40
env.noops = 8
agent.network = smoke
agent.dqn.buffer_size = 500
agent.dqn.learning_starts = 50
agent.dqn.batch_size = 8
agent.dqn.target_update_interval = 40
agent.ppo.n_steps = 64
agent.ppo.batch_size = 16
agent.ppo.n_epochs = 2
)");
  Recipe r = Recipe::from(KeyValueConfig::parse(is), "full");
  r.eval_every = eval_every;
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- metrics

TEST(Metrics, Summary) {
  const std::vector<EpisodeResult> eps{{-1.0, 10, false}, {3.0, 30, true}};
  const Metrics m = Metrics::from(eps);
  EXPECT_EQ(m.episodes, 2u);
  EXPECT_EQ(m.mean_reward, 1.0);
  EXPECT_EQ(m.reward_std, 2.0);
  EXPECT_EQ(m.mean_length, 20.0);
  EXPECT_EQ(m.length_std, 10.0);
  EXPECT_EQ(m.success_rate, 0.5);
  EXPECT_NEAR(m.efficiency * m.mean_length, m.mean_reward, 1e-9);
}

TEST(Metrics, InstantFailureUnderSparseReward) {
  // Backing straight out of the static layout fails every episode.
  const Recipe r = Recipe::load("I");
  const Metrics m = evaluate([](const Tensor&) { return 1; }, r.eval_env, 3, 11);
  EXPECT_EQ(m.mean_reward, -1.0);
  EXPECT_EQ(m.success_rate, 0.0);
  EXPECT_NEAR(m.efficiency * m.mean_length, m.mean_reward, 1e-9);
}

TEST(Metrics, EvaluateRequiresEpisodes) {
  EXPECT_THROW(evaluate([](const Tensor&) { return 0; }, env::EnvConfig{}, 0, 1), ContractViolation);
  EXPECT_THROW(random_baseline(env::EnvConfig{}, 0, 1), ContractViolation);
}

TEST(Metrics, CsvRoundTrip) {
  std::vector<MetricsRow> rows(3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].step = 1000 * i;
    rows[i].eval = Metrics::from(std::vector<EpisodeResult>{{0.1 * i - 1.0 / 3, 7, true}, {2.0 / 7, 300, false}});
    rows[i].train_episodes = 4 * i;
    rows[i].train_mean_reward = -98.25 + i;
    rows[i].train_mean_length = 1.0 / 3.0;
    rows[i].train_success_rate = 0.01 * i;
    rows[i].loss = 1e-300 * i;
    rows[i].updates = 17 * i;
  }
  std::stringstream ss;
  write_metrics_csv(ss, rows);
  EXPECT_EQ(read_metrics_csv(ss), rows);
  std::istringstream bad("step,nope\n");
  EXPECT_THROW(read_metrics_csv(bad), FormatError);
}

// ---------------------------------------------------------------- random baseline

TEST(RandomBaseline, UniformActions) {
  const Recipe r = Recipe::load("III");
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  for (std::uint64_t seed = 0; total < 10000; ++seed) {
    std::vector<std::size_t> c;
    random_baseline(r.env, 20, seed * 100, &c);
    if (counts.empty()) counts.assign(c.size(), 0);
    for (std::size_t a = 0; a < c.size(); ++a) counts[a] += c[a];
    total = 0;
    for (auto n : counts) total += n;
  }
  const double n = static_cast<double>(total);
  const double sd = std::sqrt(n * 0.25 * 0.75);
  for (auto c : counts) EXPECT_LT(std::abs(static_cast<double>(c) - n / 4), 3 * sd);
}

TEST(RandomBaseline, Deterministic) {
  const Recipe r = Recipe::load("IV");
  EXPECT_EQ(random_baseline(r.env, 5, 3), random_baseline(r.env, 5, 3));
  EXPECT_NE(random_baseline(r.env, 5, 3), random_baseline(r.env, 5, 4));
}

TEST(RandomBaseline, StepPenaltyIdentity) {
  const Recipe r = Recipe::load("V");
  const Metrics m = random_baseline(r.env, 20, 1);
  ASSERT_EQ(m.success_rate, 0.0);
  EXPECT_EQ(m.mean_reward, -m.mean_length);
  EXPECT_EQ(m.efficiency, -1.0);
}

TEST(RandomBaseline, ExperimentOneCharacter) {
  const Recipe r = Recipe::load("I");
  const Metrics m = random_baseline(r.env, 100, 756765);
  EXPECT_LE(m.success_rate, 0.05);
  EXPECT_GE(m.mean_reward, -1.0);
  EXPECT_LE(m.mean_reward, 0.0);
}

// ---------------------------------------------------------------- recipes

TEST(Recipes, MatchExperimentTables) {
  struct Row {
    std::string name;
    std::uint64_t seed;
    bool randomise, domain;
    int clutter;
    env::RewardFunc reward;
    std::size_t eval_episodes;
  };
  using env::RewardFunc;
  const std::vector<Row> table{{"I", 756765, false, false, 1, RewardFunc::sparse, 5},
                               {"II", 756765, false, false, 1, RewardFunc::shaped1, 5},
                               {"III", 934612, true, false, 3, RewardFunc::budget, 10},
                               {"IV", 467328, true, true, 3, RewardFunc::complex, 10},
                               {"V", 115545, true, false, 1, RewardFunc::step_penalty, 10},
                               {"VI", 433854, true, false, 3, RewardFunc::budget, 10}};
  for (const auto& t : table) {
    const Recipe r = Recipe::load(t.name);
    EXPECT_EQ(r.name, t.name);
    EXPECT_EQ(r.env.seed, t.seed) << t.name;
    EXPECT_EQ(r.env.randomise, t.randomise) << t.name;
    EXPECT_EQ(r.env.randomise_domain, t.domain) << t.name;
    EXPECT_EQ(r.env.clutter_items, t.clutter) << t.name;
    EXPECT_EQ(r.env.reward_func, t.reward) << t.name;
    EXPECT_EQ(r.eval_episodes, t.eval_episodes) << t.name;
    EXPECT_EQ(r.eval_every, 10000u);
    EXPECT_EQ(r.final_episodes, 100u);
    EXPECT_FALSE(r.ci_runnable);
    EXPECT_EQ(r.agent.network, "standard");
    // Shared base parameters.
    EXPECT_EQ(r.env.noops, 50);
    EXPECT_EQ(r.env.agent_history_len, 4);
    EXPECT_EQ(r.env.agent_act_repeat, 4);
    EXPECT_EQ(r.env.max_timesteps, 300);
    EXPECT_EQ(r.env.friction_coeff, 0.2);
    EXPECT_EQ(r.env.clutter_mass, 1.0);
    EXPECT_EQ(r.env.obs_size, 84);
    EXPECT_EQ(r.arch().input_shape(), (Shape{4, 84, 84}));
  }
  const Recipe vi = Recipe::load("VI");
  EXPECT_TRUE(vi.env.curriculum);
  EXPECT_FALSE(vi.eval_env.curriculum);
  EXPECT_EQ(vi.eval_env.spawn_radius_fraction, 1.0);
  EXPECT_EQ(vi.total_timesteps, 9000000u);
  EXPECT_EQ(vi.algorithms, (std::vector<std::string>{"ppo", "dqn"}));
  EXPECT_EQ(Recipe::load("I").total_timesteps, 1000000u);
}

TEST(Recipes, SmokeProfile) {
  for (const auto& name : shipped_recipes()) {
    const Recipe r = Recipe::load(name, "smoke");
    EXPECT_TRUE(r.ci_runnable) << name;
    EXPECT_EQ(r.agent.network, "smoke") << name;
    if (name == "eased") continue;
    EXPECT_EQ(r.total_timesteps, 50000u);
    EXPECT_EQ(r.eval_every, 2000u);
    EXPECT_EQ(r.eval_episodes, 5u);
    EXPECT_EQ(r.env.seed, Recipe::load(name).env.seed);
  }
  EXPECT_THROW(Recipe::load("I", "huge"), ConfigError);
}

TEST(Recipes, ResolvedRoundTrip) {
  for (const auto& name : shipped_recipes()) {
    for (const char* profile : {"full", "smoke"}) {
      const Recipe r = Recipe::load(name, profile);
      EXPECT_EQ(Recipe::from(r.resolved(), "full"), r) << name << ' ' << profile;
    }
  }
}

TEST(Recipes, Rejections) {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return Recipe::from(KeyValueConfig::parse(is));
  };
  EXPECT_THROW(parse("env.clutter = 3\n"), ConfigError);
  EXPECT_THROW(parse("evaluation_episodes = 3\n"), ConfigError);
  EXPECT_THROW(parse("algorithms = ppo,sac\n"), ConfigError);
  EXPECT_THROW(parse("eval_every = 0\n"), ConfigError);
  EXPECT_THROW(parse("agent.ppo.n_step = 3\n"), ConfigError);
  EXPECT_THROW(parse("env.obs_size = 28\n"), ConfigError);  // standard network needs 84
  EXPECT_THROW(Recipe::load("no_such_recipe"), ConfigError);
}

// ---------------------------------------------------------------- report

TEST(Report, RollingMean) {
  EXPECT_EQ(rolling_mean(std::vector<double>{0, 2}), (std::vector<double>{0, 1}));
  EXPECT_EQ(rolling_mean(std::vector<double>{4}), (std::vector<double>{4}));
  EXPECT_EQ(rolling_mean(std::vector<double>{1, 3, 5, 9}), (std::vector<double>{1, 2, 4, 7}));
  EXPECT_EQ(rolling_mean(std::vector<double>{1, 3, 5}, 3), (std::vector<double>{1, 2, 3}));
}

TEST(Report, SinglePointChart) {
  const Series s{"reward", {0}, {-0.5}, {0.25}};
  const std::string svg = render_svg(s);
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
  EXPECT_EQ(svg.find("<circle", svg.find("<circle") + 1), std::string::npos);
  const std::string two = render_svg(Series{"reward", {0, 10}, {0, 2}, {0, 0}}, 2, -1.0);
  EXPECT_NE(two.find("<polyline"), std::string::npos);
  EXPECT_NE(two.find("BASELINE"), std::string::npos);
}

TEST(Report, SeriesAndSummaryRoundTrip) {
  const Series s{"efficiency", {0, 2000, 4000}, {-1.0 / 3, 0.1, 1e-17}, {0, 0.5, 2.0 / 3}};
  std::stringstream ss;
  write_series_csv(ss, s);
  EXPECT_EQ(read_series_csv(ss, "efficiency"), s);
  const std::vector<SummaryEntry> summary{{"ppo", Metrics::from(std::vector<EpisodeResult>{{1.5, 3, true}})},
                                          {"baseline", Metrics::from(std::vector<EpisodeResult>{{-1, 7, false}})}};
  std::stringstream s2;
  write_summary_csv(s2, summary);
  EXPECT_EQ(read_summary_csv(s2), summary);
}

// ---------------------------------------------------------------- training

TEST(Train, ZeroTimestepsGivesInitialRowOnly) {
  const fs::path dir = fresh_dir("zero");
  TrainOptions o;
  o.algo = "ppo";
  o.total_timesteps = 0;
  const RunResult r = train(tiny_recipe(), o, dir.string());
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].step, 0u);
  EXPECT_TRUE(r.finished);
  EXPECT_TRUE(fs::exists(dir / "run.cfg"));
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "latest.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "final_report" / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir / "final_report" / "reward.svg"));
  fs::remove_all(dir);
}

TEST(Train, EvaluationCadenceAndLayout) {
  const fs::path dir = fresh_dir("cadence");
  TrainOptions o;
  o.algo = "a2c";
  o.total_timesteps = 250;
  o.save_frames = true;
  const RunResult r = train(tiny_recipe(100), o, dir.string());
  std::vector<std::uint64_t> steps;
  for (const auto& row : r.rows) steps.push_back(row.step);
  EXPECT_EQ(steps, (std::vector<std::uint64_t>{0, 100, 200, 250}));
  std::ifstream csv(dir / "metrics.csv");
  EXPECT_EQ(read_metrics_csv(csv), r.rows);
  EXPECT_TRUE(fs::exists(dir / "frames" / "step_100.ppm"));
  for (const char* m : {"reward", "length", "success_rate", "efficiency"}) {
    EXPECT_TRUE(fs::exists(dir / "final_report" / (std::string(m) + ".csv"))) << m;
    EXPECT_TRUE(fs::exists(dir / "final_report" / (std::string(m) + ".svg"))) << m;
  }
  ASSERT_TRUE(r.final_metrics && r.baseline);
  EXPECT_EQ(r.final_metrics->episodes, 3u);
  EXPECT_THROW(train(tiny_recipe(), o, dir.string()), StartupError);
  fs::remove_all(dir);
}

class SplitRun : public ::testing::TestWithParam<std::string> {};

TEST_P(SplitRun, ResumeMatchesUninterrupted) {
  const fs::path a = fresh_dir("whole_" + GetParam()), b = fresh_dir("split_" + GetParam());
  TrainOptions o;
  o.algo = GetParam();
  o.seed = 3;
  o.final_report = false;
  const RunResult whole = train(tiny_recipe(), o, a.string());
  o.stop_after = 170;  // between evaluation points
  const RunResult first = train(tiny_recipe(), o, b.string());
  EXPECT_FALSE(first.finished);
  EXPECT_EQ(first.steps, 170u);
  const RunResult rest = resume(b.string());
  EXPECT_TRUE(rest.finished);
  EXPECT_EQ(rest.rows, whole.rows);
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a / "checkpoints" / "latest.ckpt"), read_file(b / "checkpoints" / "latest.ckpt"));
  EXPECT_GT(whole.rows.back().updates, 0u);
  fs::remove_all(a);
  fs::remove_all(b);
}

INSTANTIATE_TEST_SUITE_P(Algorithms, SplitRun, ::testing::Values("ppo", "a2c", "dqn", "reinforce"));

TEST(Train, EvaluationLeavesTrainingUntouched) {
  // Evaluating more often must not change what the agent learns.
  const fs::path a = fresh_dir("eval_a"), b = fresh_dir("eval_b");
  TrainOptions o;
  o.algo = "dqn";
  o.final_report = false;
  train(tiny_recipe(400), o, a.string());
  train(tiny_recipe(50), o, b.string());
  const auto ca = load_checkpoint((a / "checkpoints" / "latest.ckpt").string());
  const auto cb = load_checkpoint((b / "checkpoints" / "latest.ckpt").string());
  TensorArchive x, y;
  ca.agent->save(x);
  cb.agent->save(y);
  std::ostringstream sx, sy;
  x.write(sx);
  y.write(sy);
  EXPECT_EQ(sx.str(), sy.str());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, CheckpointEvaluation) {
  const fs::path dir = fresh_dir("ckpt_eval");
  TrainOptions o;
  o.algo = "ppo";
  o.total_timesteps = 100;
  o.final_report = false;
  train(tiny_recipe(), o, dir.string());
  const std::string ckpt = (dir / "checkpoints" / "latest.ckpt").string();
  const LoadedCheckpoint c = load_checkpoint(ckpt);
  EXPECT_EQ(c.algo, "ppo");
  EXPECT_EQ(c.steps, 100u);
  const Metrics m = evaluate_checkpoint(ckpt, 2);
  EXPECT_EQ(m, evaluate_checkpoint(ckpt, 2));
  EXPECT_EQ(m.episodes, 2u);
  fs::remove_all(dir);
}

TEST(Train, UnwritableDirectory) {
  const fs::path file = fresh_dir("plain_file");
  std::ofstream(file) << "x";
  TrainOptions o;
  EXPECT_THROW(train(tiny_recipe(), o, (file / "run").string()), StartupError);
  fs::remove(file);
}

TEST(Train, NonFiniteLossAborts) {
  const fs::path dir = fresh_dir("nan");
  Recipe r = tiny_recipe();
  r.agent.a2c.learning_rate = 1e300;
  r.agent.a2c.max_grad_norm = 1e300;
  TrainOptions o;
  o.algo = "a2c";
  EXPECT_THROW(train(r, o, dir.string()), RunAborted);
  EXPECT_TRUE(fs::exists(dir / "diagnostics" / "abort.txt"));
  EXPECT_TRUE(fs::exists(dir / "diagnostics" / "agent.ckpt"));
  fs::remove_all(dir);
}
