#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "arena/arena.hpp"
#include "nn/rng.hpp"

using namespace discorl;
using arena::ArenaConfig;
using arena::ArenaState;
using arena::Vec2;

namespace {

ArenaState state_with_lag(Vec2 z, Vec2 z_lag, int k, bool bumped) {
  ArenaState st;
  st.robot = z;
  st.position_history.clear();
  st.position_history.push_back(z_lag);
  for (int i = 1; i < k; ++i) st.position_history.push_back(z);
  st.bumped = bumped;
  return st;
}

// Eq.-style scalar evaluation written out independently of reward_tc.
double circling_reward_oracle(Vec2 z, Vec2 z_lag, bool bumped,
                              const ArenaConfig& cfg) {
  const double lambda = cfg.tc.lambda;
  const double radial = std::hypot(z.x, z.y) - cfg.tc.r_circle;
  const double move2 = (z.x - z_lag.x) * (z.x - z_lag.x) +
                       (z.y - z_lag.y) * (z.y - z_lag.y);
  return lambda * (1.0 - lambda * radial * radial) * move2 +
         lambda * lambda * (bumped ? -1.0 : 0.0);
}

}  // namespace

TEST_CASE("circling reward worked examples") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TC;

  // On the circle, no displacement, no bump.
  Vec2 on_circle{cfg.tc.r_circle, 0.0};
  CHECK(arena::reward_tc(state_with_lag(on_circle, on_circle, cfg.tc.k, false),
                         cfg) == 0.0);

  // On the circle, squared displacement 0.04, no bump.
  Vec2 lag{cfg.tc.r_circle, 0.2};
  ArenaState st = state_with_lag(on_circle, lag, cfg.tc.k, false);
  CHECK(arena::reward_tc(st, cfg) == doctest::Approx(0.4).epsilon(1e-12));

  // Same but bumped.
  st.bumped = true;
  CHECK(arena::reward_tc(st, cfg) == doctest::Approx(-99.6).epsilon(1e-12));
}

TEST_CASE("circling reward equals the scalar oracle on 1000 random states") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TC;
  nn::Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    Vec2 z{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    Vec2 lag{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const bool bumped = rng.uniform() < 0.3;
    ArenaState st = state_with_lag(z, lag, cfg.tc.k, bumped);
    CHECK(arena::reward_tc(st, cfg) ==
          circling_reward_oracle(z, lag, bumped, cfg));
  }
}

TEST_CASE("short histories fall back to the episode start position") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TC;
  ArenaState st;
  st.robot = Vec2{0.5, 0.0};
  st.position_history = {Vec2{0.5, 0.2}};  // only the start so far
  CHECK(arena::reward_tc(st, cfg) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("target reaching reward: bump dominates contact") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TR;
  ArenaState st;
  st.robot = cfg.tr.target;
  CHECK(arena::reward_tr(st, cfg) == 1.0);
  st.bumped = true;
  CHECK(arena::reward_tr(st, cfg) == -1.0);
  st.bumped = false;
  st.robot = Vec2{-0.9, -0.9};
  CHECK(arena::reward_tr(st, cfg) == 0.0);
}

TEST_CASE("escape reward: catch and bump both penalize") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TE;
  ArenaState st;
  st.robot = Vec2{0.5, 0.5};
  st.chaser = Vec2{-1.0, -1.0};
  CHECK(arena::reward_te(st, cfg) == 1.0);
  st.chaser = Vec2{0.5, 0.6};
  CHECK(arena::reward_te(st, cfg) == -1.0);
  st.chaser = Vec2{-1.0, -1.0};
  st.bumped = true;
  CHECK(arena::reward_te(st, cfg) == -1.0);
}

TEST_CASE("robot stays in bounds and bump fires exactly on wall hits") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TR;
  arena::Arena env(cfg);
  env.reset(3);
  nn::Rng rng(4);
  for (int t = 0; t < 200 && !env.done(); ++t) {
    const Vec2 before = env.state().robot;
    const int action = static_cast<int>(rng.uniform_int(4));
    Vec2 raw = before;
    switch (action) {
      case 0: raw.x -= cfg.step_size; break;
      case 1: raw.x += cfg.step_size; break;
      case 2: raw.y += cfg.step_size; break;
      case 3: raw.y -= cfg.step_size; break;
    }
    const bool out = raw.x < -cfg.half_width || raw.x > cfg.half_width ||
                     raw.y < -cfg.half_width || raw.y > cfg.half_width;
    arena::StepResult res = env.step(action);
    const Vec2 after = env.state().robot;
    CHECK(std::abs(after.x) <= cfg.half_width);
    CHECK(std::abs(after.y) <= cfg.half_width);
    CHECK(res.info.bumped == out);
  }
}

TEST_CASE("chaser closes in by exactly its speed away from walls") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TE;
  Vec2 chaser{-0.5, -0.5};
  Vec2 robot{0.5, 0.3};
  for (int i = 0; i < 30; ++i) {
    const double before = arena::distance(chaser, robot);
    chaser = arena::chaser_policy(chaser, robot, cfg);
    const double after = arena::distance(chaser, robot);
    CHECK(after <= before + 1e-12);
    CHECK(after ==
          doctest::Approx(std::max(before - cfg.te.chaser_speed, 0.0))
              .epsilon(1e-9));
  }
  // Once caught up it stays put.
  Vec2 same = arena::chaser_policy(robot, robot, cfg);
  CHECK(same.x == robot.x);
  CHECK(same.y == robot.y);
}

TEST_CASE("render is deterministic, bounded, and shows the actors") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TE;
  ArenaState st;
  st.robot = Vec2{0.0, 0.0};
  st.chaser = Vec2{-0.7, -0.7};
  nn::Tensor a = arena::render(st, cfg);
  nn::Tensor b = arena::render(st, cfg);
  CHECK(a.data == b.data);
  CHECK((a.shape == std::vector<size_t>{32, 32, 3}));
  for (double v : a.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // Robot at the center: a black pixel there.
  const int mid = 16;  // pixel of x=0 on a 32-grid: round(0.5 * 31)
  const size_t idx = (static_cast<size_t>(mid) * 32 + mid) * 3;
  CHECK(a.data[idx] == 0.0);
  CHECK(a.data[idx + 1] == 0.0);
  CHECK(a.data[idx + 2] == 0.0);
  // Moving the robot changes the image; moving the chaser too.
  st.robot = Vec2{0.5, 0.5};
  CHECK(arena::render(st, cfg).data != a.data);
  st.robot = Vec2{0.0, 0.0};
  st.chaser = Vec2{0.7, 0.7};
  CHECK(arena::render(st, cfg).data != a.data);
  // Background shows through.
  st.background = {0.1, 0.2, 0.3};
  nn::Tensor c = arena::render(st, cfg);
  const size_t corner = (static_cast<size_t>(2) * 32 + 16) * 3;
  CHECK(c.data[corner] == doctest::Approx(0.1));
}

TEST_CASE("reset honors the seed and the randomization switch") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TR;
  arena::Arena env(cfg);
  nn::Tensor a = env.reset(99);
  const Vec2 pos_a = env.state().robot;
  nn::Tensor b = env.reset(99);
  CHECK(a.data == b.data);
  CHECK(pos_a.x == env.state().robot.x);
  env.reset(100);
  CHECK(env.state().robot.x != pos_a.x);

  cfg.domain_randomization = false;
  arena::Arena fixed(cfg);
  fixed.reset(5);
  CHECK(fixed.state().background == arena::kCanonicalBackground);
}

TEST_CASE("grid position counts and bounds") {
  ArenaConfig cfg;
  CHECK(arena::grid_positions(cfg, 0.25).size() == 81);
  CHECK(arena::grid_positions(cfg, 1.0).size() == 9);
  CHECK(arena::grid_positions(cfg, 2.0).size() == 1);
  CHECK(arena::grid_positions(cfg, 0.1).size() == 441);
  auto grid = arena::grid_positions(cfg, 0.25);
  CHECK(grid.front().x == -1.0);
  CHECK(grid.front().y == -1.0);
  CHECK(grid.back().x == 1.0);
  CHECK(grid.back().y == 1.0);
  for (const Vec2& p : grid) {
    CHECK(std::abs(p.x) <= cfg.half_width);
    CHECK(std::abs(p.y) <= cfg.half_width);
  }
  CHECK_THROWS_AS(arena::grid_positions(cfg, 0.0), nn::ConfigError);
  CHECK_THROWS_AS(arena::grid_positions(cfg, 3.0), nn::ConfigError);
}

TEST_CASE("episodes end at the step limit and reject further steps") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TC;
  cfg.episode_len = 5;
  arena::Arena env(cfg);
  env.reset(1);
  for (int t = 0; t < 5; ++t) {
    CHECK(!env.done());
    env.step(0);
  }
  CHECK(env.done());
  CHECK_THROWS_AS(env.step(0), nn::UsageError);
  env.reset(2);
  CHECK_THROWS_AS(env.step(7), nn::UsageError);
}

TEST_CASE("target-contact limit ends dataset-mode episodes early") {
  ArenaConfig cfg;
  cfg.task = arena::Task::TR;
  cfg.episode_len = 500;
  cfg.max_target_contacts = 3;
  arena::Arena env(cfg);
  env.reset(8);
  int contacts = 0;
  while (!env.done()) {
    const Vec2 p = env.state().robot;
    const double dx = cfg.tr.target.x - p.x, dy = cfg.tr.target.y - p.y;
    const int action = std::abs(dx) >= std::abs(dy) ? (dx >= 0 ? 1 : 0)
                                                    : (dy >= 0 ? 2 : 3);
    arena::StepResult res = env.step(action);
    if (res.info.contact_with_target) ++contacts;
  }
  CHECK(contacts == 3);
  CHECK(env.state().t < 500);
}

TEST_CASE("trace csv has the documented header and one row per step") {
  std::vector<arena::TraceRow> rows = {{0, 0.1, 0.2, 1, 0.0, false},
                                       {1, 0.2, 0.2, 2, 1.0, true}};
  const auto path = std::filesystem::temp_directory_path() / "trace_test.csv";
  arena::write_trace_csv(path, rows, arena::Task::TR);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "t,x,y,action,reward,bumped,task");
  int n = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  CHECK(n == 2);
  std::filesystem::remove(path);
}

TEST_CASE("config validation rejects bad geometry") {
  ArenaConfig cfg;
  cfg.step_size = 2.0;
  CHECK_THROWS_AS(cfg.validate(), nn::ConfigError);
  cfg = ArenaConfig{};
  cfg.tc.r_circle = 1.5;
  CHECK_THROWS_AS(cfg.validate(), nn::ConfigError);
  cfg = ArenaConfig{};
  CHECK_NOTHROW(cfg.validate());
}
