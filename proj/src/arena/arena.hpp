#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include "nn/rng.hpp"
#include "nn/tensor.hpp"

namespace discorl::arena {

enum class Task { TR, TC, TE };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

struct Vec2 {
  double x = 0.0, y = 0.0;
};

double distance(const Vec2& a, const Vec2& b);

// 4 discrete actions: 0 left, 1 right, 2 up, 3 down.
inline constexpr int kNumActions = 4;

struct ArenaConfig {
  double half_width = 1.0;
  double step_size = 0.1;
  int episode_len = 250;
  int render_size = 32;
  Task task = Task::TR;
  struct {
    Vec2 target{0.6, 0.6};
    double contact_range = 0.15;
  } tr;
  struct {
    double lambda = 10.0;
    double r_circle = 0.5;
    int k = 5;
  } tc;
  struct {
    double chaser_speed = 0.05;
    double catch_range = 0.3;
    Vec2 chaser_start{-1.0, -1.0};
  } te;
  bool domain_randomization = true;
  uint64_t seed = 0;
  // Dataset-generation mode for TR: end the episode after this many target
  // contacts. 0 means no limit (plain training episodes).
  int max_target_contacts = 0;

  void validate() const;
};

// Fixed background used when domain randomization is off (evaluation).
inline constexpr std::array<double, 3> kCanonicalBackground = {0.85, 0.85,
                                                               0.75};

struct ArenaState {
  Vec2 robot;
  std::deque<Vec2> position_history;  // previous positions, most recent last,
                                      // length <= tc.k (padded from the start
                                      // position early in the episode)
  Vec2 chaser;                        // TE only
  std::array<double, 3> background = kCanonicalBackground;
  int t = 0;
  bool bumped = false;
  int target_contacts = 0;  // TR dataset mode
};

struct StepInfo {
  bool bumped = false;
  bool contact_with_target = false;
  bool caught_by_chaser = false;
};

struct StepResult {
  nn::Tensor observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Task reward terms. reward_tc reads z_{t-k} from the position history.
double reward_tr(const ArenaState& state, const ArenaConfig& cfg);
double reward_tc(const ArenaState& state, const ArenaConfig& cfg);
double reward_te(const ArenaState& state, const ArenaConfig& cfg);

// Greedy pursuit, clamped in bounds.
Vec2 chaser_policy(const Vec2& chaser, const Vec2& robot,
                   const ArenaConfig& cfg);

// Top-down RGB view, render_size x render_size x 3, values in [0, 1].
nn::Tensor render(const ArenaState& state, const ArenaConfig& cfg);

// Row-major lattice of in-bounds robot positions with the given stride.
std::vector<Vec2> grid_positions(const ArenaConfig& cfg, double stride);

class Arena {
 public:
  explicit Arena(ArenaConfig cfg);

  nn::Tensor reset(uint64_t seed);
  StepResult step(int action);

  const ArenaState& state() const { return state_; }
  // Curriculum hook: scales the pursuit speed while training on TE. Has no
  // effect on the other tasks. Applies from the next chaser move onward.
  void set_chaser_speed(double v) { cfg_.te.chaser_speed = v; }
  ArenaState& mutable_state() { return state_; }
  const ArenaConfig& config() const { return cfg_; }
  bool done() const { return done_; }
  nn::Tensor observe() const { return render(state_, cfg_); }

 private:
  ArenaConfig cfg_;
  ArenaState state_;
  nn::Rng rng_;
  bool done_ = true;
};

struct TraceRow {
  int t;
  double x, y;
  int action;
  double reward;
  bool bumped;
};

// Episode trace CSV: t,x,y,action,reward,bumped,task.
void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<TraceRow>& rows, Task task);

}  // namespace discorl::arena
