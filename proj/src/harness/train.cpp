#include "pbge/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pbge/env/render.hpp"
#include "pbge/harness/report.hpp"
#include "pbge/tensor/serialize.hpp"

namespace fs = std::filesystem;

namespace pbge::harness {

namespace {

constexpr std::size_t kTrainWindow = 100;
constexpr std::uint64_t kEvalSeedOffset = 1'000'003;
constexpr std::uint64_t kFinalSeedOffset = 7'000'001;

struct RunSettings {
  Recipe recipe;
  std::string algo;
  std::uint64_t seed = 0;
  std::uint64_t total = 0;
  std::size_t final_episodes = 100;
  bool checkpoints = true;
  bool save_frames = false;
  bool final_report = true;

  KeyValueConfig to_kv() const {
    KeyValueConfig kv = recipe.resolved();
    kv.set("run.algo", algo);
    kv.set("run.seed", std::to_string(seed));
    kv.set("run.total_timesteps", std::to_string(total));
    kv.set("run.final_episodes", std::to_string(final_episodes));
    kv.set("run.checkpoints", checkpoints ? "true" : "false");
    kv.set("run.save_frames", save_frames ? "true" : "false");
    kv.set("run.final_report", final_report ? "true" : "false");
    return kv;
  }

  static RunSettings from_kv(const KeyValueConfig& kv) {
    RunSettings s;
    KeyValueConfig recipe_kv;
    for (const auto& [k, v] : kv.entries()) {
      if (k.rfind("run.", 0) != 0) recipe_kv.set(k, v);
    }
    s.recipe = Recipe::from(recipe_kv, "full");
    s.algo = kv.get_string("run.algo");
    s.seed = static_cast<std::uint64_t>(kv.get_int("run.seed"));
    s.total = static_cast<std::uint64_t>(kv.get_int("run.total_timesteps"));
    s.final_episodes = static_cast<std::size_t>(kv.get_int("run.final_episodes"));
    s.checkpoints = kv.get_bool("run.checkpoints");
    s.save_frames = kv.get_bool("run.save_frames");
    s.final_report = kv.get_bool("run.final_report");
    return s;
  }

  std::string text() const {
    std::ostringstream os;
    to_kv().write(os);
    return os.str();
  }
};

KeyValueConfig parse_text(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  return KeyValueConfig::parse(is, origin);
}

std::unique_ptr<agents::Agent> build_agent(const RunSettings& s) {
  return agents::make_agent(s.algo, s.recipe.agent, s.recipe.arch(), s.seed, s.total);
}

void write_file(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    os << content;
    if (!os) throw StartupError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

class Run {
 public:
  Run(RunSettings settings, fs::path dir, std::ostream* log)
      : s_(std::move(settings)), dir_(std::move(dir)), log_(log), env_([&] {
          env::EnvConfig c = s_.recipe.env;
          c.seed = train_env_seed(s_.recipe, s_.seed);
          return c;
        }()) {
    agent_ = build_agent(s_);
  }

  void start() {
    obs_ = env_.reset().observation;
    add_row();
    if (s_.checkpoints) checkpoint();
  }

  void restore(const TensorArchive& ar) {
    agent_->load(ar);
    env_.load(ar, "train.env");
    obs_ = ar.get("train.obs").clone();
    steps_ = ar.get_u64("train.steps");
    episodes_ = ar.get_u64("train.episodes");
    ep_reward_ = ar.get_scalar("train.ep_reward");
    ep_length_ = static_cast<int>(ar.get_u64("train.ep_length"));
    const auto r = ar.get_doubles("train.window.reward");
    const auto l = ar.get_doubles("train.window.length");
    const auto w = ar.get_doubles("train.window.success");
    window_.clear();
    for (std::size_t i = 0; i < r.size(); ++i) window_.push_back({r[i], static_cast<int>(l[i]), w[i] != 0.0});
    std::istringstream csv(ar.get_text("train.metrics"));
    rows_ = read_metrics_csv(csv);
    write_metrics();
  }

  RunResult go(std::optional<std::uint64_t> stop_after, const std::function<bool(const MetricsRow&)>& stop_when) {
    const auto t0 = std::chrono::steady_clock::now();
    bool early = stop_when && !rows_.empty() && stop_when(rows_.back());
    while (!early && steps_ < s_.total) {
      if (stop_after && steps_ >= *stop_after) break;
      step_once();
      if (steps_ % s_.recipe.eval_every == 0 || steps_ == s_.total) {
        add_row();
        if (s_.checkpoints) checkpoint();
        if (log_) {
          const auto& r = rows_.back();
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          *log_ << "step " << r.step << "  eval reward " << r.eval.mean_reward << " +- " << r.eval.reward_std
                << "  success " << r.eval.success_rate << "  length " << r.eval.mean_length << "  | train episodes "
                << r.train_episodes << " reward " << r.train_mean_reward << " success " << r.train_success_rate
                << "  loss " << r.loss << "  (" << std::lround(secs) << " s)\n"
                << std::flush;
        }
        early = stop_when && stop_when(rows_.back());
      }
    }
    if (s_.checkpoints && (steps_ % s_.recipe.eval_every != 0 && steps_ != s_.total)) checkpoint();

    RunResult result;
    result.dir = dir_.string();
    result.rows = rows_;
    result.steps = steps_;
    result.finished = steps_ == s_.total || early;
    if (result.finished && s_.final_report) finish(result);
    return result;
  }

 private:
  void step_once() {
    const int action = agent_->act(obs_);
    const obs::ObsStep r = env_.step(action);
    agents::Transition t{obs_, action, r.reward, r.observation, r.terminated, r.truncated};
    try {
      agent_->observe(t);
    } catch (const agents::NumericalError& e) {
      dump_diagnostics(t, e.what());
      throw RunAborted(std::string("numerical failure at step ") + std::to_string(steps_ + 1) + ": " + e.what() +
                       " (diagnostics in " + (dir_ / "diagnostics").string() + ")");
    }
    ++steps_;
    ep_reward_ += r.reward;
    ++ep_length_;
    if (r.terminated || r.truncated) {
      window_.push_back({ep_reward_, ep_length_, r.info.success});
      if (window_.size() > kTrainWindow) window_.pop_front();
      ++episodes_;
      ep_reward_ = 0.0;
      ep_length_ = 0;
      obs_ = env_.reset().observation;
    } else {
      obs_ = r.observation;
    }
  }

  void add_row() {
    MetricsRow row;
    row.step = steps_;
    const agents::Agent& frozen = *agent_;
    row.eval = evaluate([&](const Tensor& o) { return frozen.greedy(o); }, s_.recipe.eval_env,
                        s_.recipe.eval_episodes, eval_env_seed(s_.recipe, s_.seed));
    row.train_episodes = episodes_;
    if (!window_.empty()) {
      const std::vector<EpisodeResult> w(window_.begin(), window_.end());
      const Metrics m = Metrics::from(w);
      row.train_mean_reward = m.mean_reward;
      row.train_mean_length = m.mean_length;
      row.train_success_rate = m.success_rate;
    }
    row.loss = agent_->last_loss();
    row.updates = agent_->updates();
    rows_.push_back(row);
    write_metrics();
    if (s_.save_frames) save_frame();
  }

  void write_metrics() const {
    std::ostringstream os;
    write_metrics_csv(os, rows_);
    write_file(dir_ / "metrics.csv", os.str());
  }

  void save_frame() const {
    env::EnvConfig c = s_.recipe.eval_env;
    c.seed = eval_env_seed(s_.recipe, s_.seed);
    c.render_frames = false;
    env::GripperEnv e(c);
    e.reset();
    fs::create_directories(dir_ / "frames");
    env::write_ppm(env::render(e.world()), (dir_ / "frames" / ("step_" + std::to_string(steps_) + ".ppm")).string());
  }

  TensorArchive archive() const {
    TensorArchive ar;
    ar.put_text("run.config", s_.text());
    agent_->save(ar);
    env_.save(ar, "train.env");
    ar.put("train.obs", obs_);
    ar.put_u64("train.steps", steps_);
    ar.put_u64("train.episodes", episodes_);
    ar.put_scalar("train.ep_reward", ep_reward_);
    ar.put_u64("train.ep_length", static_cast<std::uint64_t>(ep_length_));
    std::vector<double> r, l, w;
    for (const auto& e : window_) {
      r.push_back(e.reward);
      l.push_back(e.length);
      w.push_back(e.success ? 1.0 : 0.0);
    }
    ar.put_doubles("train.window.reward", r);
    ar.put_doubles("train.window.length", l);
    ar.put_doubles("train.window.success", w);
    std::ostringstream csv;
    write_metrics_csv(csv, rows_);
    ar.put_text("train.metrics", csv.str());
    return ar;
  }

  void checkpoint() const {
    fs::create_directories(dir_ / "checkpoints");
    std::ostringstream os;
    archive().write(os);
    write_file(dir_ / "checkpoints" / "latest.ckpt", os.str());
  }

  void dump_diagnostics(const agents::Transition& t, const std::string& what) const {
    const fs::path d = dir_ / "diagnostics";
    fs::create_directories(d);
    std::ostringstream os;
    os << "error: " << what << "\nalgo: " << s_.algo << "\nstep: " << steps_ + 1 << "\nupdates: " << agent_->updates()
       << "\nlast_loss: " << agent_->last_loss() << "\naction: " << t.action << "\nreward: " << t.reward
       << "\nterminated: " << t.terminated << "\ntruncated: " << t.truncated << '\n';
    auto stats = [&](const char* name, const Tensor& x) {
      double lo = INFINITY, hi = -INFINITY;
      std::size_t bad = 0;
      for (double v : x.data()) {
        if (!std::isfinite(v)) ++bad;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      os << name << ": min " << lo << " max " << hi << " non_finite " << bad << '\n';
    };
    stats("state", t.state);
    stats("next_state", t.next_state);
    TensorArchive ar;
    try {
      agent_->save(ar);
    } catch (const std::exception& e) {
      // Interrupted mid-update; keep what can be saved.
      ar = TensorArchive();
      os << "agent state not saved: " << e.what() << '\n';
    }
    write_file(d / "abort.txt", os.str());
    ar.put("transition.state", t.state);
    ar.put("transition.next_state", t.next_state);
    std::ostringstream bin;
    ar.write(bin);
    write_file(d / "agent.ckpt", bin.str());
  }

  void finish(RunResult& result) const {
    const agents::Agent& frozen = *agent_;
    const std::uint64_t seed = eval_env_seed(s_.recipe, s_.seed) + kFinalSeedOffset;
    result.final_metrics =
        evaluate([&](const Tensor& o) { return frozen.greedy(o); }, s_.recipe.eval_env, s_.final_episodes, seed);
    result.baseline = random_baseline(s_.recipe.eval_env, s_.final_episodes, seed);
    fs::create_directories(dir_ / "final_report");
    std::ostringstream os;
    write_summary_csv(os, {{s_.algo, *result.final_metrics}, {"baseline", *result.baseline}});
    write_file(dir_ / "final_report" / "summary.csv", os.str());
    report(dir_.string());
  }

  RunSettings s_;
  fs::path dir_;
  std::ostream* log_;
  obs::ObservationEnv env_;
  std::unique_ptr<agents::Agent> agent_;
  Tensor obs_;
  std::uint64_t steps_ = 0;
  std::uint64_t episodes_ = 0;
  double ep_reward_ = 0.0;
  int ep_length_ = 0;
  std::deque<EpisodeResult> window_;
  std::vector<MetricsRow> rows_;
};

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw StartupError("cannot create run directory " + dir.string());
  if (fs::exists(dir / "run.cfg")) throw StartupError(dir.string() + " already holds a run; resume it instead");
  const fs::path probe = dir / ".write_test";
  {
    std::ofstream os(probe);
    if (!(os << "ok")) throw StartupError("run directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

}  // namespace

std::uint64_t train_env_seed(const Recipe& recipe, std::uint64_t run_seed) { return recipe.env.seed + run_seed; }

std::uint64_t eval_env_seed(const Recipe& recipe, std::uint64_t run_seed) {
  return recipe.eval_env.seed + run_seed + kEvalSeedOffset;
}

RunResult train(const Recipe& recipe, const TrainOptions& options, const std::string& out_dir) {
  RunSettings s;
  s.recipe = recipe;
  s.algo = options.algo;
  s.seed = options.seed;
  s.total = options.total_timesteps.value_or(recipe.total_timesteps);
  s.final_episodes = options.final_episodes.value_or(recipe.final_episodes);
  s.checkpoints = options.checkpoints;
  s.save_frames = options.save_frames;
  s.final_report = options.final_report;
  // Reject a bad algorithm or network before touching the filesystem.
  (void)build_agent(s);

  const fs::path dir(out_dir);
  prepare_dir(dir);
  write_file(dir / "run.cfg", s.text());
  Run run(s, dir, options.log);
  run.start();
  return run.go(options.stop_after, options.stop_when);
}

RunResult resume(const std::string& run_dir, std::optional<std::uint64_t> stop_after, std::ostream* log) {
  const fs::path dir(run_dir);
  const fs::path ckpt = dir / "checkpoints" / "latest.ckpt";
  if (!fs::exists(ckpt)) throw StartupError("no checkpoint in " + run_dir);
  const TensorArchive ar = TensorArchive::load(ckpt.string());
  const RunSettings s = RunSettings::from_kv(parse_text(ar.get_text("run.config"), ckpt.string()));
  Run run(s, dir, log);
  run.restore(ar);
  return run.go(stop_after, {});
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw StartupError("no checkpoint at " + path);
  const TensorArchive ar = TensorArchive::load(path);
  const RunSettings s = RunSettings::from_kv(parse_text(ar.get_text("run.config"), path));
  LoadedCheckpoint out{s.recipe, s.algo, s.seed, ar.get_u64("train.steps"), build_agent(s)};
  out.agent->load(ar);
  return out;
}

Metrics evaluate_checkpoint(const std::string& path, std::size_t episodes) {
  const LoadedCheckpoint c = load_checkpoint(path);
  const agents::Agent& a = *c.agent;
  return evaluate([&](const Tensor& o) { return a.greedy(o); }, c.recipe.eval_env, episodes,
                  eval_env_seed(c.recipe, c.seed) + kFinalSeedOffset);
}

}  // namespace pbge::harness
