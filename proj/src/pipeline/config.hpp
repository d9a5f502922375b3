#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "arena/arena.hpp"
#include "rl/ppo.hpp"

namespace discorl::pipeline {

// Full experiment configuration. Serialized as schema-versioned JSON and
// round-trips losslessly.
struct PipelineConfig {
  int schema_version = 1;
  std::vector<arena::Task> tasks = {arena::Task::TR, arena::Task::TC,
                                    arena::Task::TE};
  uint64_t seed = 42;
  std::string out_dir = "out";
  arena::ArenaConfig arena;

  struct Srl {
    size_t samples = 8000;
    int epochs = 60;
    int state_dim = 32;
    double w_rec = 1.0;
    double w_inv = 10.0;
    double lr = 1e-3;
    int batch_size = 32;
    bool save_dataset = false;
  } srl;

  struct Rl {
    uint64_t budget_steps = 300000;
    rl::PpoConfig ppo;
    uint64_t checkpoint_interval = 200;
    bool save_checkpoints = false;
    std::string input_mode = "encoded";  // or "raw_pixels"
    // Greedy-evaluation snapshot selection during teacher training. The
    // evaluation episodes do not count against budget_steps. 0 disables it.
    uint64_t selection_interval_steps = 10000;
    int selection_episodes = 20;
    // Fraction of rollout episodes collected with argmax actions by the end
    // of teacher training (ramps in over the second half of the budget).
    double greedy_frac_final = 0.5;
    // Pursuit-speed curriculum for the escape task: the chaser starts
    // training at this fraction of its canonical speed and reaches full
    // speed at the budget's halfway mark (1.0 disables; only TE has a
    // chaser). Evaluation always runs at canonical speed.
    double chaser_curriculum_start = 0.3;
    // Per-task partial overrides of the PPO settings, keyed by task name
    // ("TR"/"TC"/"TE"); keys not listed fall back to `ppo`. The three tasks
    // have different training dynamics and one setting does not fit all.
    nlohmann::json task_ppo = default_task_ppo();
    static nlohmann::json default_task_ppo();
  } rl;

  struct Distill {
    size_t samples_per_task = 10000;
    int epochs = 4;
    int batch_size = 32;
    double lr = 1e-3;
    double val_frac = 0.1;
    std::string loss = "kl";  // or "mse"
    double tau = 0.01;
    std::string gen_mode = "on_policy";
    double grid_stride = 0.05;
  } distill;

  struct Eval {
    int episodes = 10;
  } eval;

  struct Finetune {
    int seeds = 5;
    uint64_t eval_interval_steps = 10000;
    int eval_episodes = 5;
  } finetune;

  struct Sweep {
    size_t samples = 15000;
    int seeds = 3;
  } sweep;

  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  arena::ArenaConfig arena_for(arena::Task task) const {
    arena::ArenaConfig c = arena;
    c.task = task;
    return c;
  }

  // rl.ppo with the task's rl.task_ppo overrides applied.
  rl::PpoConfig ppo_for(arena::Task task) const;
};

}  // namespace discorl::pipeline
