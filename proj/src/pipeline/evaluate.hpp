#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "arena/arena.hpp"
#include "distill/distill.hpp"
#include "rl/ppo.hpp"

namespace discorl::eval {

// An evaluation agent maps the current simulator state and observation to a
// discrete action. Learned agents must only look at the observation; the
// scripted oracles read the ground-truth state.
using Agent = std::function<int(const arena::ArenaState&, const nn::Tensor&)>;

Agent agent_from_teacher(const rl::TeacherPolicy& teacher);
Agent agent_from_student(const distill::StudentPolicy& student);
Agent random_agent(uint64_t seed);

// Scripted reference behaviour used to define the task's achievable maximum:
// TR walks straight to the target and hovers on it, TC walks to the circle
// and circulates, TE keeps maximal distance from the chaser away from walls.
Agent oracle_agent(arena::Task task, const arena::ArenaConfig& cfg);

struct EvalReport {
  arena::Task task = arena::Task::TR;
  std::string policy_id;
  uint64_t seed = 0;
  double r_max = 0.0;
  std::vector<double> raw;
  std::vector<double> normalized;
  double mean_raw = 0.0;
  double mean_norm = 0.0, std_norm = 0.0, min_norm = 0.0, max_norm = 0.0;
};

// Greedy episodes with the fixed canonical background. If r_max <= 0 it is
// first computed from the oracle on the same episode seeds, so the oracle
// scores exactly 1 on its own task.
EvalReport evaluate(const Agent& agent, const arena::ArenaConfig& cfg,
                    int n_episodes, uint64_t seed, double r_max = 0.0,
                    const std::string& policy_id = "");

double oracle_r_max(const arena::ArenaConfig& cfg, int n_episodes,
                    uint64_t seed);

void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<EvalReport>& reports);

}  // namespace discorl::eval
