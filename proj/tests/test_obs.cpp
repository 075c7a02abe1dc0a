#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pbge/obs/pipeline.hpp"
#include "pbge/tensor/serialize.hpp"

using namespace pbge;
using namespace pbge::obs;
using env::Vec2;

namespace {

constexpr double kUp = -std::numbers::pi / 2;

ByteImage gradient_frame() {
  ByteImage img(3, 800, 800);
  for (std::size_t y = 0; y < 800; ++y)
    for (std::size_t x = 0; x < 800; ++x) {
      img.at(0, y, x) = static_cast<std::uint8_t>(x % 251);
      img.at(1, y, x) = static_cast<std::uint8_t>(y % 241);
      img.at(2, y, x) = static_cast<std::uint8_t>((x * 7 + y * 3) % 256);
    }
  return img;
}

ByteImage constant_frame(std::uint8_t v, std::size_t c = 1, std::size_t n = 84) {
  ByteImage img(c, n, n);
  std::fill(img.data.begin(), img.data.end(), v);
  return img;
}

env::EnvConfig obs_env_config() {
  env::EnvConfig c;
  c.seed = 21;
  c.clutter_items = 4;
  return c;
}

}  // namespace

TEST(AgentCentric, IdentityAtCentreHeadingUp) {
  const ByteImage frame = gradient_frame();
  EXPECT_EQ(agent_centric(frame, Vec2(400, 400), kUp, {0, 0, 0}), frame);
}

TEST(AgentCentric, ObjectAheadAppearsAboveCentre) {
  ByteImage frame(3, 800, 800);
  frame.at(0, 400, 499) = 255;  // 99 px ahead of a gripper at (400, 400) facing +x
  const ByteImage view = agent_centric(frame, Vec2(400, 400), 0.0, {0, 0, 0});
  EXPECT_EQ(view.at(0, 300, 400), 255);
  std::size_t lit = 0;
  for (std::size_t i = 0; i < 800 * 800; ++i) lit += view.data[i] != 0;
  EXPECT_EQ(lit, 1u);
}

TEST(AgentCentric, OutsideFrameIsBackground) {
  const ByteImage frame = gradient_frame();
  const ByteImage view = agent_centric(frame, Vec2(10, 10), kUp, {7, 8, 9});
  EXPECT_EQ(view.at(0, 0, 0), 7);
  EXPECT_EQ(view.at(1, 0, 0), 8);
  EXPECT_EQ(view.at(2, 0, 0), 9);
  EXPECT_EQ(view.at(0, 400, 400), frame.at(0, 10, 10));
}

TEST(AgentCentric, ViewToWorldMatchesRotation) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vec2 pos(uniform(rng, 0, 800), uniform(rng, 0, 800));
    const double h = uniform(rng, -3, 3);
    // The view centre column above centre runs along the heading.
    const Vec2 p = view_to_world(pos, h, 399.5, 399.5 - 50.0);
    EXPECT_NEAR((p - pos - 50.0 * env::heading_vector(h)).norm(), 0.0, 1e-9);
  }
}

TEST(Downsample, IndexMapping) {
  const ByteImage frame = gradient_frame();
  const ByteImage small = downsample(frame, 84);
  EXPECT_EQ(small.height, 84u);
  EXPECT_EQ(small.width, 84u);
  EXPECT_EQ(small.at(0, 83, 83), frame.at(0, 790, 790));
  EXPECT_EQ(small.at(1, 83, 83), frame.at(1, 790, 790));
  EXPECT_EQ(small.at(2, 10, 20), frame.at(2, 95, 190));
  EXPECT_EQ(small.at(0, 0, 0), frame.at(0, 0, 0));
}

TEST(Grayscale, Luminance) {
  EXPECT_EQ(luminance({100, 50, 200}), 82);
  EXPECT_EQ(luminance({255, 255, 255}), 255);
  EXPECT_EQ(luminance({0, 0, 0}), 0);
  ByteImage img(3, 1, 1);
  img.data = {100, 50, 200};
  EXPECT_EQ(grayscale(img).data, std::vector<std::uint8_t>{82});
}

TEST(FrameStack, OrderingAndCapacity) {
  FrameStack s(4);
  for (std::uint8_t v = 1; v <= 3; ++v) s.push(constant_frame(v));
  EXPECT_THROW(s.observation(), ContractViolation);
  s.push(constant_frame(4));
  s.push(constant_frame(5));
  EXPECT_EQ(s.size(), 4u);
  Tensor t = s.observation();
  EXPECT_EQ(t.shape(), (Shape{4, 84, 84}));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(t[c * 84 * 84 + 17], (c + 2) / 255.0);
  Tensor hwc = s.observation(false);
  EXPECT_EQ(hwc.shape(), (Shape{84, 84, 4}));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(hwc[17 * 4 + c], (c + 2) / 255.0);
}

TEST(FrameStack, PushAndStackNormalises) {
  FrameStack s(1);
  Tensor t = push_and_stack(s, constant_frame(255));
  for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(t[i], 1.0);
}

TEST(Pipeline, FusedPathMatchesSlowPath) {
  struct Variant { bool gray; std::size_t size; double scale; };
  for (const Variant& var : {Variant{true, 84, 1.0}, Variant{false, 84, 1.0}, Variant{true, 28, 0.5},
                             Variant{false, 42, 0.75}}) {
    env::EnvConfig c = obs_env_config();
    c.randomise_domain = true;
    c.grayscale = var.gray;
    c.obs_size = var.size;
    c.view_scale = var.scale;
    ObsConfig oc = ObsConfig::from(c);
    env::GripperEnv e(c);
    Rng rng(8);
    for (int ep = 0; ep < 3; ++ep) {
      e.reset();
      for (int t = 0; t < 6 && e.episode_active(); ++t) {
        ASSERT_EQ(observe_world(e.world(), oc), process_frame(render(e.world()), e.world(), oc));
        e.step(static_cast<int>(uniform_index(rng, 4)));
      }
    }
  }
}

TEST(Pipeline, ObservationShapes) {
  env::EnvConfig c = obs_env_config();
  ObservationEnv gray(c);
  EXPECT_EQ(gray.reset().observation.shape(), (Shape{4, 84, 84}));
  c.grayscale = false;
  ObservationEnv rgb(c);
  EXPECT_EQ(rgb.reset().observation.shape(), (Shape{12, 84, 84}));
  c.transpose = false;
  ObservationEnv hwc(c);
  EXPECT_EQ(hwc.reset().observation.shape(), (Shape{84, 84, 12}));
}

TEST(Pipeline, ResetFillsStackWithLastNoopFrames) {
  env::EnvConfig c = obs_env_config();
  ObservationEnv oe(c);
  ObsStep s = oe.reset();
  ASSERT_TRUE(oe.stack().full());

  env::GripperEnv raw(c);
  std::vector<ByteImage> frames;
  const ObsConfig oc = ObsConfig::from(c);
  raw.reset([&](const env::WorldState& w) { frames.push_back(observe_world(w, oc)); });
  ASSERT_EQ(frames.size(), 50u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(oe.stack().frames()[i], frames[46 + i]);
  for (std::size_t i = 0; i < s.observation.size(); ++i) {
    ASSERT_GE(s.observation[i], 0.0);
    ASSERT_LE(s.observation[i], 1.0);
  }
}

TEST(Pipeline, StepPushesNewestFrame) {
  ObservationEnv oe(obs_env_config());
  oe.reset();
  const ByteImage second = oe.stack().frames()[1];
  oe.step(0);
  EXPECT_EQ(oe.stack().frames()[0], second);
  EXPECT_EQ(oe.latest_frame(), observe_world(oe.env().world(), oe.obs_config()));
}

TEST(Pipeline, CheckpointRoundTrip) {
  env::EnvConfig c = obs_env_config();
  ObservationEnv a(c);
  a.reset();
  a.step(0);
  a.step(2);
  TensorArchive ar;
  a.save(ar, "obs");
  ObservationEnv b(c);
  b.load(ar, "obs");
  for (int i = 0; i < 5; ++i) {
    ObsStep sa = a.step(i % 4), sb = b.step(i % 4);
    ASSERT_TRUE(std::ranges::equal(sa.observation.data(), sb.observation.data()));
    ASSERT_EQ(sa.reward, sb.reward);
    if (sa.terminated || sa.truncated) break;
  }
}
