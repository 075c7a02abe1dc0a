#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "pbge/env/gripper_env.hpp"
#include "pbge/tensor/serialize.hpp"

using namespace pbge;
using namespace pbge::env;

namespace {

EnvConfig fixed_config(RewardFunc f = RewardFunc::sparse) {
  EnvConfig c;
  c.seed = 756765;
  c.randomise = false;
  c.clutter_items = 1;
  c.reward_func = f;
  return c;
}

// A world with nothing inside the frame.
WorldState empty_world() {
  WorldState w;
  w.gripper.pos = Vec2(-5000, -5000);
  w.goal.pos = Vec2(-6000, -6000);
  w.goal.half = Vec2(15, 15);
  w.target.pos = Vec2(-7000, -7000);
  return w;
}

Body free_box(Vec2 pos, double side = 40.0) {
  Body b;
  b.pos = pos;
  b.half = Vec2(side / 2, side / 2);
  return b;
}

}  // namespace

TEST(EnvConfig, DefaultsMatchParameterTable) {
  EnvConfig c;
  EXPECT_EQ(c.noops, 50);
  EXPECT_EQ(c.agent_history_len, 4);
  EXPECT_EQ(c.agent_act_repeat, 4);
  EXPECT_EQ(c.agent_speed, 300.0);
  EXPECT_EQ(c.agent_ang_speed, 4.91);
  EXPECT_EQ(c.clutter_items, 10);
  EXPECT_EQ(c.clutter_mass, 1.0);
  EXPECT_EQ(c.max_timesteps, 300);
  EXPECT_EQ(c.friction_coeff, 0.2);
  EXPECT_TRUE(c.grayscale);
  EXPECT_TRUE(c.transpose);
  EXPECT_TRUE(c.randomise);
  EXPECT_FALSE(c.randomise_domain);
}

TEST(EnvConfig, KeyValueRoundTrip) {
  EnvConfig c = fixed_config(RewardFunc::complex);
  c.friction_coeff = 0.35;
  KeyValueConfig kv;
  c.to(kv);
  std::stringstream ss;
  kv.write(ss);
  EnvConfig back = EnvConfig::from(KeyValueConfig::parse(ss));
  EXPECT_EQ(back.reward_func, RewardFunc::complex);
  EXPECT_EQ(back.friction_coeff, 0.35);
  EXPECT_EQ(back.seed, 756765u);
  EXPECT_FALSE(back.randomise);
}

TEST(EnvConfig, RejectsBadValues) {
  std::istringstream bad_repeat("agent_act_repeat = 0\n");
  EXPECT_THROW(EnvConfig::from(KeyValueConfig::parse(bad_repeat)), ConfigError);
  std::istringstream bad_reward("reward_func = dense\n");
  EXPECT_THROW(EnvConfig::from(KeyValueConfig::parse(bad_reward)), ConfigError);
}

TEST(Reset, FixedLayoutDeterministic) {
  GripperEnv a(fixed_config()), b(fixed_config());
  EXPECT_EQ(a.reset().observation, b.reset().observation);
}

TEST(Reset, NoopsAdvanceOneSecond) {
  GripperEnv e(fixed_config());
  e.reset();
  EXPECT_EQ(e.world().frames, 50u);
  EXPECT_DOUBLE_EQ(static_cast<double>(e.world().frames) * kFrameDt, 1.0);
}

TEST(Reset, InitialFlags) {
  GripperEnv e(fixed_config());
  StepResult r = e.reset();
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.terminated);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.observation.channels, 3u);
  EXPECT_EQ(r.observation.height, 800u);
}

TEST(Reset, CurriculumSpawnRadius) {
  EnvConfig c;
  c.seed = 1;
  c.spawn_radius_fraction = 0.1;
  c.clutter_items = 0;
  c.noops = 0;
  c.render_frames = false;
  GripperEnv e(c);
  for (int i = 0; i < 1000; ++i) {
    e.reset();
    const double d = (e.world().goal.pos - e.world().target.pos).norm();
    EXPECT_LE(d, 0.1 * c.max_spawn_radius);
    EXPECT_GE(d, c.target_radius);
  }
}

TEST(Reset, RandomSpawnHasNoOverlaps) {
  EnvConfig c;
  c.seed = 3;
  c.noops = 0;
  c.render_frames = false;
  GripperEnv e(c);
  for (int i = 0; i < 200; ++i) {
    e.reset();
    const auto& w = e.world();
    std::vector<OrientedBox> boxes{w.goal.box()};
    for (const auto& b : w.clutter) boxes.push_back(b.box());
    for (std::size_t a = 0; a < boxes.size(); ++a) {
      for (const auto& p : w.gripper.parts()) EXPECT_FALSE(collide(p, boxes[a]));
      for (std::size_t b = a + 1; b < boxes.size(); ++b) EXPECT_FALSE(collide(boxes[a], boxes[b]));
    }
    EXPECT_EQ(w.clutter.size(), 10u);
  }
}

TEST(Step, ForwardAdvances24Px) {
  EnvConfig c = fixed_config();
  c.clutter_items = 0;
  GripperEnv e(c);
  e.reset();
  const Vec2 before = e.world().gripper.pos;
  e.step(Action::forward);
  const Vec2 moved = e.world().gripper.pos - before;
  EXPECT_NEAR(moved.norm(), 24.0, 1e-9);
  EXPECT_NEAR(moved.y(), -24.0, 1e-9);
}

TEST(Step, TurnLeftDecreasesHeading) {
  GripperEnv e(fixed_config());
  e.reset();
  const double before = e.world().gripper.angle;
  e.step(Action::turn_left);
  EXPECT_NEAR(e.world().gripper.angle - before, -4.91 * 4 / 50, 1e-12);
}

TEST(Step, PushingGoalOntoTargetSucceeds) {
  EnvConfig c = fixed_config();
  c.clutter_items = 0;
  GripperEnv e(c);
  e.reset();
  WorldState& w = e.mutable_world();
  w.target.pos = Vec2(400, 400);
  w.goal.pos = Vec2(400, 470);
  w.gripper.pos = Vec2(400, 530);
  StepResult r;
  for (int i = 0; i < 10 && !r.terminated; ++i) r = e.step(Action::forward);
  EXPECT_TRUE(r.terminated);
  EXPECT_FALSE(r.truncated);
  EXPECT_TRUE(r.info.success);
  EXPECT_EQ(r.reward, 1.0);
}

TEST(Step, TruncatesAtMaxTimesteps) {
  GripperEnv e(fixed_config());
  e.reset();
  StepResult r;
  for (int i = 0; i < 300; ++i) {
    ASSERT_FALSE(r.terminated || r.truncated);
    r = e.step(Action::turn_left);
  }
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.terminated);
  EXPECT_EQ(r.info.episode_timestep, 300);
  EXPECT_THROW(e.step(Action::forward), ContractViolation);
}

TEST(Step, LeavingTheWorldFails) {
  EnvConfig c = fixed_config(RewardFunc::shaped1);
  GripperEnv e(c);
  e.reset();
  StepResult r;
  int steps = 0;
  while (!r.terminated && !r.truncated) {
    r = e.step(Action::backward);
    ++steps;
  }
  EXPECT_TRUE(r.terminated);
  EXPECT_FALSE(r.info.success);
  EXPECT_EQ(r.reward, -100.0);
  EXPECT_LT(steps, 10);
}

TEST(Step, BeforeResetIsContractViolation) {
  GripperEnv e(fixed_config());
  EXPECT_THROW(e.step(Action::forward), ContractViolation);
  e.reset();
  EXPECT_THROW(e.step(7), ContractViolation);
}

TEST(Episodes, TrichotomyAndMonotoneBest) {
  EnvConfig c;
  c.seed = 17;
  c.clutter_items = 3;
  c.reward_func = RewardFunc::budget;
  c.render_frames = false;
  GripperEnv e(c);
  Rng rng(5);
  int outcomes[3] = {0, 0, 0};
  for (int ep = 0; ep < 40; ++ep) {
    e.reset();
    StepResult r;
    double best_gt = e.world().best.gt, best_gtt = e.world().best.gtt, best_total = e.world().best_total;
    double shaping = 0.0;
    while (!r.terminated && !r.truncated) {
      r = e.step(static_cast<int>(uniform_index(rng, 4)));
      EXPECT_LE(e.world().best.gt, best_gt);
      EXPECT_LE(e.world().best.gtt, best_gtt);
      EXPECT_LE(e.world().best_total, best_total);
      best_gt = e.world().best.gt;
      best_gtt = e.world().best.gtt;
      best_total = e.world().best_total;
      if (!r.terminated) shaping += r.reward;
    }
    EXPECT_LE(shaping, c.budget + 1e-9);
    EXPECT_FALSE(r.terminated && r.truncated);
    if (r.info.success) EXPECT_TRUE(r.terminated);
    ++outcomes[r.info.success ? 0 : (r.terminated ? 1 : 2)];
  }
  EXPECT_EQ(outcomes[0] + outcomes[1] + outcomes[2], 40);
}

TEST(Episodes, ScriptIsBitReproducible) {
  auto run = [] {
    EnvConfig c = fixed_config(RewardFunc::complex);
    GripperEnv e(c);
    std::vector<std::uint8_t> bytes;
    std::vector<double> rewards;
    e.reset();
    const int script[] = {0, 0, 2, 0, 3, 0, 1, 0, 0, 0, 2, 2, 0};
    for (int a : script) {
      StepResult r = e.step(a);
      rewards.push_back(r.reward);
      bytes.insert(bytes.end(), r.observation.data.begin(), r.observation.data.end());
      if (r.terminated || r.truncated) break;
    }
    return std::make_pair(bytes, rewards);
  };
  auto a = run();
  auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Episodes, SaveLoadContinuesIdentically) {
  EnvConfig c;
  c.seed = 8;
  c.clutter_items = 3;
  c.curriculum = true;
  c.spawn_radius_fraction = 0.3;
  c.reward_func = RewardFunc::complex;
  c.render_frames = false;
  GripperEnv a(c);
  Rng rng(1);
  a.reset();
  for (int i = 0; i < 5; ++i) a.step(static_cast<int>(uniform_index(rng, 4)));
  TensorArchive ar;
  a.save(ar, "env");
  GripperEnv b(c);
  b.load(ar, "env");
  Rng rb = rng;
  for (int i = 0; i < 400; ++i) {
    int act = static_cast<int>(uniform_index(rng, 4));
    (void)uniform_index(rb, 4);
    if (!a.episode_active()) {
      a.reset();
      b.reset();
    }
    StepResult ra = a.step(act), rb2 = b.step(act);
    ASSERT_EQ(ra.reward, rb2.reward);
    ASSERT_EQ(ra.terminated, rb2.terminated);
    ASSERT_EQ(a.world().goal.pos, b.world().goal.pos);
  }
  EXPECT_EQ(a.curriculum(), b.curriculum());
}

TEST(Physics, FrictionDampingOneSecond) {
  WorldState w = empty_world();
  w.goal = free_box(Vec2(400, 400), 30);
  w.goal.vel = Vec2(100, 0);
  w.friction = 0.2;
  for (int i = 0; i < 50; ++i) physics_substep(w, kFrameDt);
  EXPECT_NEAR(w.goal.vel.norm(), 100 * std::exp(-0.2), 100 * std::exp(-0.2) * 0.01);
}

TEST(Physics, GripperIsKinematic) {
  WorldState w = empty_world();
  w.gripper.pos = Vec2(400, 500);
  w.gripper.angle = -1.5707963267948966;
  w.gripper.vel = Vec2(0, -300);
  w.goal = free_box(Vec2(400, 440), 30);
  const Vec2 goal_before = w.goal.pos;
  for (int i = 0; i < 10; ++i) physics_substep(w, kFrameDt);
  EXPECT_NEAR(w.gripper.pos.y(), 500 - 60.0, 1e-9);
  EXPECT_NEAR(w.gripper.pos.x(), 400.0, 1e-9);
  EXPECT_LT(w.goal.pos.y(), goal_before.y() - 1.0);
}

TEST(Physics, RestingSeparatedBoxesUnchanged) {
  WorldState w = empty_world();
  w.goal = free_box(Vec2(300, 300), 30);
  w.clutter = {free_box(Vec2(500, 500)), free_box(Vec2(560, 500))};
  WorldState before = w;
  physics_substep(w, kFrameDt);
  EXPECT_EQ(w.goal.pos, before.goal.pos);
  EXPECT_EQ(w.clutter[0].pos, before.clutter[0].pos);
  EXPECT_EQ(w.clutter[1].pos, before.clutter[1].pos);
}

TEST(Physics, OverlappingBoxesSeparateConservingMomentum) {
  WorldState w = empty_world();
  w.friction = 0.0;
  w.goal = free_box(Vec2(400, 400), 30);
  w.goal.vel = Vec2(50, 0);
  w.clutter = {free_box(Vec2(433, 400), 30)};
  physics_substep(w, kFrameDt);
  EXPECT_FALSE(collide(w.goal.box(), w.clutter[0].box()));
  EXPECT_NEAR(w.goal.vel.x() + w.clutter[0].vel.x(), 50.0, 1e-9);
}

TEST(Rewards, Sparse) {
  EXPECT_EQ(reward_sparse(Event::success), 1.0);
  EXPECT_EQ(reward_sparse(Event::failure), -1.0);
  EXPECT_EQ(reward_sparse(Event::none), 0.0);
}

TEST(Rewards, Shaped1) {
  Distances prev{100, 200};
  EXPECT_EQ(reward_shaped1(Event::none, prev, {99, 199}), 2.0);
  EXPECT_EQ(reward_shaped1(Event::none, prev, {100, 199}), 1.0);
  EXPECT_EQ(reward_shaped1(Event::none, prev, {99, 201}), 1.0);
  EXPECT_EQ(reward_shaped1(Event::none, prev, prev), -1.0);
  EXPECT_EQ(reward_shaped1(Event::success, prev, prev), 100.0);
  EXPECT_EQ(reward_shaped1(Event::failure, prev, prev), -100.0);
}

TEST(Rewards, BudgetHandCase) {
  BestDistances best{100, 100, 200};
  EXPECT_DOUBLE_EQ(reward_budget(Event::none, best, {75, 75}, 200.0), 25.0);
  EXPECT_EQ(reward_budget(Event::success, best, {75, 75}, 200.0), 100.0);
  EXPECT_EQ(reward_budget(Event::failure, best, {75, 75}, 200.0), -100.0);
}

TEST(Rewards, BudgetOscillationAboveBestPaysNothing) {
  BestDistances best{50, 50, 100};
  EXPECT_EQ(reward_budget(Event::none, best, {60, 50}, 200.0), 0.0);
  EXPECT_EQ(reward_budget(Event::none, best, {55, 50}, 200.0), 0.0);
}

TEST(Rewards, BudgetTelescopes) {
  const Distances init{120, 180};
  BestDistances best = BestDistances::from(init);
  double total = 0.0;
  const int n = 997;
  for (int k = 1; k <= n; ++k) {
    const double f = 1.0 - static_cast<double>(k) / n;
    Distances d{init.gt * f, init.gtt * f};
    total += reward_budget(Event::none, best, d, init.total());
    best = best.improved(d);
  }
  EXPECT_NEAR(total, 100.0, 1e-9);
}

TEST(Rewards, ComplexHandCase) {
  BestDistances best{50, 80, 130};
  const double r = reward_complex(Event::none, best, {50, 80}, 0, {0.15, 0.15, -2.0, 2.0});
  EXPECT_NEAR(r, 0.835, 1e-12);
  EXPECT_EQ(reward_complex(Event::success, best, {50, 80}, 0), 100.0);
  EXPECT_EQ(reward_complex(Event::failure, best, {50, 80}, 0), -100.0);
}

TEST(Rewards, ComplexStaysInRange) {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    BestDistances best{uniform(rng, 0, 500), uniform(rng, 0, 500), 0};
    Distances next{uniform(rng, 0, 800), uniform(rng, 0, 800)};
    const double r = reward_complex(Event::none, best, next, static_cast<int>(uniform_index(rng, 10)));
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Rewards, StepPenalty) {
  EXPECT_EQ(reward_step_penalty(Event::none), -1.0);
  EXPECT_EQ(reward_step_penalty(Event::success), 1.0);
  EXPECT_EQ(reward_step_penalty(Event::failure), -1.0);
  EnvConfig c = fixed_config(RewardFunc::step_penalty);
  GripperEnv e(c);
  e.reset();
  double ret = 0.0;
  int len = 0;
  StepResult r;
  while (!r.terminated && !r.truncated) {
    r = e.step(Action::turn_right);
    ret += r.reward;
    ++len;
  }
  EXPECT_EQ(ret, -static_cast<double>(len));
}

TEST(DomainRandomisation, DisabledKeepsCanonicalPalette) {
  GripperEnv e(fixed_config());
  e.reset();
  EXPECT_EQ(e.world().palette, Palette{});
  EXPECT_EQ(e.world().palette.clutter, (Rgb{0, 0, 255}));
  EXPECT_EQ(e.world().palette.goal, (Rgb{0, 160, 0}));
  EXPECT_EQ(e.world().palette.target, (Rgb{255, 255, 0}));
}

TEST(DomainRandomisation, SeededAndBounded) {
  EnvConfig c;
  c.seed = 4;
  c.randomise_domain = true;
  c.render_frames = false;
  c.noops = 0;
  GripperEnv a(c), b(c);
  for (int i = 0; i < 2000; ++i) {
    a.reset();
    b.reset();
    ASSERT_EQ(a.world().palette, b.world().palette);
    ASSERT_EQ(a.world().friction, b.world().friction);
    EXPECT_GE(a.world().friction, 0.1);
    EXPECT_LE(a.world().friction, 0.4);
    EXPECT_LE(a.world().clutter.size(), 10u);
    for (const auto& cl : a.world().clutter) {
      EXPECT_GE(cl.half.x() * 2, 25.0);
      EXPECT_LE(cl.half.x() * 2, 60.0);
    }
  }
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double f = uniform(rng, c.dr_friction_min, c.dr_friction_max);
    ASSERT_GE(f, 0.1);
    ASSERT_LE(f, 0.4);
  }
}

TEST(DomainRandomisation, PaletteColoursDistinct) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    Palette p = random_palette(rng);
    std::array<Rgb, 5> c{p.background, p.target, p.goal, p.clutter, p.gripper};
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = a + 1; b < 5; ++b) EXPECT_FALSE(c[a] == c[b]);
  }
}

TEST(Curriculum, Updates) {
  CurriculumState s{0.1, 1, 0};
  EXPECT_EQ(curriculum_update(s, false, 3), s);
  for (int i = 0; i < 50; ++i) {
    s = curriculum_update(s, true, 3);
    EXPECT_LE(s.spawn_radius_fraction, 1.0);
  }
  EXPECT_EQ(s.spawn_radius_fraction, 1.0);
  EXPECT_EQ(s.clutter_count_current, 3);
  EXPECT_EQ(s.successes, 50);
  for (int i = 0; i < 100; ++i) s = curriculum_update(s, true, 3);
  EXPECT_EQ(s.clutter_count_current, 3);
}

TEST(Render, EmptyWorldIsBackground) {
  WorldState w = empty_world();
  ByteImage img = render(w);
  for (auto v : img.data) ASSERT_EQ(v, 0);
}

TEST(Render, Deterministic) {
  GripperEnv e(fixed_config());
  e.reset();
  EXPECT_EQ(render(e.world()), render(e.world()));
}

TEST(Render, GoalPixelCount) {
  struct Case { double side; Vec2 centre; std::size_t expected; };
  // Pixel centres on the box edge count as inside.
  for (const Case& c : {Case{30, Vec2(400, 400), 900}, Case{20, Vec2(400, 400), 400},
                        Case{41, Vec2(400.5, 400.5), 1681}, Case{41, Vec2(400, 400), 1764}}) {
    WorldState w = empty_world();
    w.goal = free_box(c.centre, c.side);
    ByteImage img = render(w);
    std::size_t green = 0;
    for (std::size_t i = 0; i < 800 * 800; ++i) green += img.data[800 * 800 + i] == 160;
    EXPECT_EQ(green, c.expected) << c.side;
  }
}

TEST(Render, PpmExport) {
  GripperEnv e(fixed_config());
  e.reset();
  const std::string path = ::testing::TempDir() + "frame.ppm";
  write_ppm(render(e.world()), path);
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  int w, h, maxv;
  is >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(w, 800);
  EXPECT_EQ(h, 800);
  is.seekg(0, std::ios::end);
  EXPECT_EQ(static_cast<std::size_t>(is.tellg()), std::string("P6\n800 800\n255\n").size() + 800u * 800u * 3u);
}

TEST(Layout, ParsesAndRejects) {
  std::istringstream good("gripper 1 2 0 60\ngoal 3 4 0 30\ntarget 5 6 0 30\nclutter 7 8 45 40\n");
  auto entries = parse_layout(good);
  EXPECT_EQ(entries.size(), 4u);
  EXPECT_EQ(entries[3].angle_deg, 45.0);
  std::istringstream missing("gripper 1 2 0 60\n");
  EXPECT_THROW(parse_layout(missing), ConfigError);
  std::istringstream junk("robot 1 2 0 60\n");
  EXPECT_THROW(parse_layout(junk), ConfigError);
  EXPECT_NO_THROW(load_layout(canonical_layout_path()));
}
