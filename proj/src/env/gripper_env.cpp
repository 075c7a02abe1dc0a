#include "pbge/env/gripper_env.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pbge/tensor/serialize.hpp"

namespace pbge::env {

namespace {

constexpr double kSpawnMargin = 60.0;
constexpr double kGripperClearance = 75.0;
constexpr int kSpawnAttempts = 100;
constexpr double kStationaryPx = 0.5;

double rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

bool inside_margin(const Vec2& p) {
  return p.x() >= kSpawnMargin && p.y() >= kSpawnMargin && p.x() <= kWorldSize - kSpawnMargin &&
         p.y() <= kWorldSize - kSpawnMargin;
}

Body make_box(const Vec2& pos, double angle, double side, double mass) {
  Body b;
  b.pos = pos;
  b.angle = angle;
  b.half = Vec2(side / 2.0, side / 2.0);
  b.mass = mass;
  return b;
}

OrientedBox inflated(OrientedBox b, double by) {
  b.half += Vec2(by, by);
  return b;
}

// Boxes already placed in the world, for rejection sampling.
class Occupancy {
 public:
  bool free(const OrientedBox& candidate) const {
    const OrientedBox c = inflated(candidate, 2.0);
    for (const auto& b : boxes_) {
      if (collide(b, c)) return false;
    }
    return true;
  }
  bool free_of_target(const OrientedBox& candidate, const Target& t) const {
    return (candidate.center - t.pos).norm() > t.radius + candidate.radius();
  }
  void add(const OrientedBox& b) { boxes_.push_back(b); }

 private:
  std::vector<OrientedBox> boxes_;
};

Vec2 polar(const Vec2& origin, double radius, double angle) { return origin + radius * heading_vector(angle); }

}  // namespace

// ---------------------------------------------------------------------------
// Layout files

std::vector<LayoutEntry> parse_layout(std::istream& is) {
  std::vector<LayoutEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    LayoutEntry e;
    if (!(ls >> e.kind)) continue;
    if (!(ls >> e.x >> e.y >> e.angle_deg >> e.size)) {
      throw ConfigError("layout line " + std::to_string(line_no) + ": expected 'kind x y angle size'");
    }
    if (e.kind != "gripper" && e.kind != "goal" && e.kind != "target" && e.kind != "clutter") {
      throw ConfigError("layout line " + std::to_string(line_no) + ": unknown kind '" + e.kind + "'");
    }
    if (!(e.size > 0.0)) throw ConfigError("layout line " + std::to_string(line_no) + ": size must be positive");
    out.push_back(e);
  }
  for (const char* kind : {"gripper", "goal", "target"}) {
    const auto n = std::count_if(out.begin(), out.end(), [&](const LayoutEntry& e) { return e.kind == kind; });
    if (n != 1) throw ConfigError(std::string("layout needs exactly one ") + kind);
  }
  return out;
}

std::vector<LayoutEntry> load_layout(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open layout '" + path + "'");
  return parse_layout(is);
}

std::string canonical_layout_path() { return data_dir() + "/layouts/canonical.layout"; }

// ---------------------------------------------------------------------------

Palette random_palette(Rng& rng) {
  auto draw = [&] {
    return Rgb{static_cast<std::uint8_t>(uniform_index(rng, 256)), static_cast<std::uint8_t>(uniform_index(rng, 256)),
               static_cast<std::uint8_t>(uniform_index(rng, 256))};
  };
  auto far_enough = [](const Rgb& a, const Rgb& b) {
    const int dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
    return dr * dr + dg * dg + db * db >= 60 * 60;
  };
  std::array<Rgb, 5> colours{};
  for (std::size_t i = 0; i < colours.size(); ++i) {
    bool ok = false;
    while (!ok) {
      colours[i] = draw();
      ok = true;
      for (std::size_t j = 0; j < i; ++j) ok = ok && far_enough(colours[i], colours[j]);
    }
  }
  return Palette{colours[0], colours[1], colours[2], colours[3], colours[4]};
}

GripperEnv::GripperEnv(EnvConfig config) : config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  curriculum_.spawn_radius_fraction = config_.spawn_radius_fraction;
  curriculum_.clutter_count_current = std::min(1, config_.clutter_items);
  if (!config_.randomise) {
    layout_ = load_layout(config_.layout.empty() ? canonical_layout_path() : config_.layout);
    const auto clutter = std::count_if(layout_.begin(), layout_.end(), [](const LayoutEntry& e) { return e.kind == "clutter"; });
    if (clutter < config_.clutter_items) {
      throw ConfigError("layout lists " + std::to_string(clutter) + " clutter items, config asks for " +
                        std::to_string(config_.clutter_items));
    }
  }
}

void GripperEnv::randomize_domain(int& clutter_count, double& size_lo, double& size_hi) {
  world_.palette = random_palette(rng_);
  world_.friction = uniform(rng_, config_.dr_friction_min, config_.dr_friction_max);
  clutter_count = static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(clutter_count) + 1));
  size_lo = config_.dr_clutter_size_min;
  size_hi = config_.dr_clutter_size_max;
}

void GripperEnv::spawn_fixed() {
  int clutter_left = config_.clutter_items;
  for (const auto& e : layout_) {
    const Vec2 pos(e.x, e.y);
    if (e.kind == "gripper") {
      world_.gripper.pos = pos;
      world_.gripper.angle = rad(e.angle_deg);
    } else if (e.kind == "goal") {
      world_.goal = make_box(pos, rad(e.angle_deg), e.size, config_.goal_mass);
    } else if (e.kind == "target") {
      world_.target = {pos, e.size};
    } else if (clutter_left > 0) {
      world_.clutter.push_back(make_box(pos, rad(e.angle_deg), e.size, config_.clutter_mass));
      --clutter_left;
    }
  }
}

void GripperEnv::spawn_random(int clutter_count, double size_lo, double size_hi) {
  const double fraction = config_.curriculum ? curriculum_.spawn_radius_fraction : config_.spawn_radius_fraction;
  const double reach = fraction * config_.max_spawn_radius;
  const double tr = config_.target_radius;
  auto uniform_angle = [this] { return uniform(rng_, -std::numbers::pi, std::numbers::pi); };
  auto uniform_point = [this] {
    const double x = uniform(rng_, kSpawnMargin, kWorldSize - kSpawnMargin);
    return Vec2(x, uniform(rng_, kSpawnMargin, kWorldSize - kSpawnMargin));
  };
  auto fail = [](const char* what) { throw ResetError(std::string("could not place ") + what + " after 100 samples"); };

  world_.target = {uniform_point(), tr};
  Occupancy occ;

  bool placed = false;
  for (int i = 0; i < kSpawnAttempts && !placed; ++i) {
    const double dist = uniform(rng_, tr, std::max(tr, reach));
    const Vec2 p = polar(world_.target.pos, dist, uniform_angle());
    const double a = uniform_angle();
    if (!inside_margin(p)) continue;
    world_.goal = make_box(p, a, config_.goal_size, config_.goal_mass);
    placed = true;
  }
  if (!placed) fail("goal object");
  occ.add(world_.goal.box());

  placed = false;
  for (int i = 0; i < kSpawnAttempts && !placed; ++i) {
    Gripper g;
    const double dist = uniform(rng_, kGripperClearance, kGripperClearance + reach);
    g.pos = polar(world_.goal.pos, dist, uniform_angle());
    g.angle = uniform_angle();
    if (!inside_margin(g.pos)) continue;
    const auto parts = g.parts();
    if (!std::all_of(parts.begin(), parts.end(), [&](const OrientedBox& b) { return occ.free(b); })) continue;
    world_.gripper = g;
    for (const auto& b : parts) occ.add(b);
    placed = true;
  }
  if (!placed) fail("gripper");

  for (int c = 0; c < clutter_count; ++c) {
    placed = false;
    for (int i = 0; i < kSpawnAttempts && !placed; ++i) {
      const double side = size_lo == size_hi ? size_lo : uniform(rng_, size_lo, size_hi);
      const Vec2 pos = uniform_point();
      Body b = make_box(pos, uniform_angle(), side, config_.clutter_mass);
      if (!occ.free(b.box()) || !occ.free_of_target(b.box(), world_.target)) continue;
      occ.add(b.box());
      world_.clutter.push_back(b);
      placed = true;
    }
    if (!placed) fail("clutter item");
  }
}

StepResult GripperEnv::reset(const FrameHook& hook) {
  world_ = WorldState{};
  world_.friction = config_.friction_coeff;
  world_.target.radius = config_.target_radius;
  int clutter_count = config_.curriculum ? curriculum_.clutter_count_current : config_.clutter_items;
  double size_lo = config_.clutter_size, size_hi = config_.clutter_size;
  if (config_.randomise_domain) randomize_domain(clutter_count, size_lo, size_hi);
  if (config_.randomise) {
    spawn_random(clutter_count, size_lo, size_hi);
  } else {
    spawn_fixed();
  }

  for (int i = 0; i < config_.noops; ++i) {
    physics_substep(world_, kFrameDt);
    if (hook) hook(world_);
  }

  const Distances d = world_.distances();
  world_.initial = world_.prev = d;
  world_.best = d;
  world_.best_total = d.total();
  world_.notmoving = 0;
  world_.timestep = 0;
  world_.active = true;

  StepResult r;
  if (config_.render_frames) r.observation = render(world_);
  r.info.distances = d;
  return r;
}

double GripperEnv::reward_for(Event event, const Distances& next) const {
  const BestDistances best{world_.best.gt, world_.best.gtt, world_.best_total};
  switch (config_.reward_func) {
    case RewardFunc::sparse: return reward_sparse(event);
    case RewardFunc::shaped1: return reward_shaped1(event, world_.prev, next);
    case RewardFunc::budget: return reward_budget(event, best, next, world_.initial.total(), config_.budget);
    case RewardFunc::complex:
      return reward_complex(event, best, next, world_.notmoving,
                            {config_.w_gt, config_.w_gtt, config_.r_min, config_.r_max});
    case RewardFunc::step_penalty: return reward_step_penalty(event);
  }
  return 0.0;
}

StepResult GripperEnv::step(int action, const FrameHook& hook) {
  if (action < 0 || action >= kNumActions) throw ContractViolation("step: action must lie in [0, 4)");
  return step(static_cast<Action>(action), hook);
}

StepResult GripperEnv::step(Action action, const FrameHook& hook) {
  if (!world_.active) throw ContractViolation("step called without an active episode; call reset first");
  Gripper& g = world_.gripper;
  g.vel = Vec2::Zero();
  g.omega = 0.0;
  switch (action) {
    case Action::forward: g.vel = config_.agent_speed * heading_vector(g.angle); break;
    case Action::backward: g.vel = -config_.agent_speed * heading_vector(g.angle); break;
    case Action::turn_left: g.omega = -config_.agent_ang_speed; break;
    case Action::turn_right: g.omega = config_.agent_ang_speed; break;
  }

  const Vec2 gripper_before = g.pos;
  const Vec2 goal_before = world_.goal.pos;
  for (int i = 0; i < config_.agent_act_repeat; ++i) {
    physics_substep(world_, kFrameDt);
    if (hook) hook(world_);
  }
  ++world_.timestep;

  Event event = Event::none;
  if (world_.out_of_bounds()) {
    event = Event::failure;
  } else if (world_.goal_on_target()) {
    event = Event::success;
  }

  const bool stationary = (g.pos - gripper_before).norm() < kStationaryPx &&
                          (world_.goal.pos - goal_before).norm() < kStationaryPx;
  world_.notmoving = stationary ? world_.notmoving + 1 : 0;

  const Distances next = world_.distances();
  const double reward = reward_for(event, next);
  world_.prev = next;
  world_.best = {std::min(world_.best.gt, next.gt), std::min(world_.best.gtt, next.gtt)};
  world_.best_total = std::min(world_.best_total, next.total());

  StepResult r = finish(reward, event);
  if (r.terminated || r.truncated) {
    world_.active = false;
    if (config_.curriculum) curriculum_ = curriculum_update(curriculum_, r.info.success, config_.clutter_items);
  }
  return r;
}

StepResult GripperEnv::finish(double reward, Event event) const {
  StepResult r;
  if (config_.render_frames) r.observation = render(world_);
  r.reward = reward;
  r.terminated = event != Event::none;
  r.truncated = !r.terminated && world_.timestep >= config_.max_timesteps;
  r.info.success = event == Event::success;
  r.info.distances = world_.prev;
  r.info.episode_timestep = world_.timestep;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpointing

namespace {

void pack_body(std::vector<double>& v, const Body& b) {
  v.insert(v.end(), {b.pos.x(), b.pos.y(), b.angle, b.vel.x(), b.vel.y(), b.omega, b.half.x(), b.half.y(), b.mass});
}

Body unpack_body(const std::vector<double>& v, std::size_t& i) {
  Body b;
  b.pos = Vec2(v.at(i), v.at(i + 1));
  b.angle = v.at(i + 2);
  b.vel = Vec2(v.at(i + 3), v.at(i + 4));
  b.omega = v.at(i + 5);
  b.half = Vec2(v.at(i + 6), v.at(i + 7));
  b.mass = v.at(i + 8);
  i += 9;
  return b;
}

double pack_rgb(const Rgb& c) { return c.r * 65536.0 + c.g * 256.0 + c.b; }
Rgb unpack_rgb(double v) {
  const auto x = static_cast<std::uint32_t>(v);
  return {static_cast<std::uint8_t>(x >> 16), static_cast<std::uint8_t>(x >> 8), static_cast<std::uint8_t>(x)};
}

}  // namespace

void GripperEnv::save(TensorArchive& ar, const std::string& prefix) const {
  const WorldState& w = world_;
  std::vector<double> v{w.gripper.pos.x(), w.gripper.pos.y(), w.gripper.angle, w.gripper.vel.x(), w.gripper.vel.y(),
                        w.gripper.omega, w.target.pos.x(), w.target.pos.y(), w.target.radius, w.friction,
                        static_cast<double>(w.timestep), static_cast<double>(w.frames), w.initial.gt, w.initial.gtt,
                        w.prev.gt, w.prev.gtt, w.best.gt, w.best.gtt, w.best_total,
                        static_cast<double>(w.notmoving), w.active ? 1.0 : 0.0,
                        pack_rgb(w.palette.background), pack_rgb(w.palette.target), pack_rgb(w.palette.goal),
                        pack_rgb(w.palette.clutter), pack_rgb(w.palette.gripper),
                        curriculum_.spawn_radius_fraction, static_cast<double>(curriculum_.clutter_count_current),
                        static_cast<double>(curriculum_.successes), static_cast<double>(w.clutter.size())};
  pack_body(v, w.goal);
  for (const auto& c : w.clutter) pack_body(v, c);
  ar.put_doubles(prefix + ".world", v);
  ar.put_rng(prefix + ".rng", rng_);
}

void GripperEnv::load(const TensorArchive& ar, const std::string& prefix) {
  const std::vector<double> v = ar.get_doubles(prefix + ".world");
  WorldState w;
  std::size_t i = 0;
  auto next = [&] { return v.at(i++); };
  auto next2 = [&] {
    const double x = next();
    return Vec2(x, next());
  };
  w.gripper.pos = next2();
  w.gripper.angle = next();
  w.gripper.vel = next2();
  w.gripper.omega = next();
  w.target.pos = next2();
  w.target.radius = next();
  w.friction = next();
  w.timestep = static_cast<int>(next());
  w.frames = static_cast<std::uint64_t>(next());
  auto next_d = [&] {
    const double gt = next();
    return Distances{gt, next()};
  };
  w.initial = next_d();
  w.prev = next_d();
  w.best = next_d();
  w.best_total = next();
  w.notmoving = static_cast<int>(next());
  w.active = next() != 0.0;
  w.palette.background = unpack_rgb(next());
  w.palette.target = unpack_rgb(next());
  w.palette.goal = unpack_rgb(next());
  w.palette.clutter = unpack_rgb(next());
  w.palette.gripper = unpack_rgb(next());
  curriculum_.spawn_radius_fraction = next();
  curriculum_.clutter_count_current = static_cast<int>(next());
  curriculum_.successes = static_cast<int>(next());
  const auto clutter = static_cast<std::size_t>(next());
  w.goal = unpack_body(v, i);
  for (std::size_t c = 0; c < clutter; ++c) w.clutter.push_back(unpack_body(v, i));
  world_ = std::move(w);
  ar.get_rng(prefix + ".rng", rng_);
}

}  // namespace pbge::env
