#include "pipeline/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "nn/rng.hpp"

namespace discorl::eval {

using arena::ArenaConfig;
using arena::ArenaState;
using arena::Vec2;
using nn::Tensor;

namespace {

Vec2 after_action(const Vec2& p, int action, const ArenaConfig& cfg) {
  Vec2 q = p;
  switch (action) {
    case 0: q.x -= cfg.step_size; break;
    case 1: q.x += cfg.step_size; break;
    case 2: q.y += cfg.step_size; break;
    case 3: q.y -= cfg.step_size; break;
  }
  q.x = std::clamp(q.x, -cfg.half_width, cfg.half_width);
  q.y = std::clamp(q.y, -cfg.half_width, cfg.half_width);
  return q;
}

int toward(const Vec2& from, const Vec2& to) {
  const double dx = to.x - from.x, dy = to.y - from.y;
  if (std::abs(dx) >= std::abs(dy)) return dx >= 0.0 ? 1 : 0;
  return dy >= 0.0 ? 2 : 3;
}

}  // namespace

Agent agent_from_teacher(const rl::TeacherPolicy& teacher) {
  return [&teacher](const ArenaState&, const Tensor& obs) {
    return teacher.greedy_action(obs);
  };
}

Agent agent_from_student(const distill::StudentPolicy& student) {
  return [&student](const ArenaState&, const Tensor& obs) {
    return student.greedy_action(obs);
  };
}

Agent random_agent(uint64_t seed) {
  auto rng = std::make_shared<nn::Rng>(seed);
  return [rng](const ArenaState&, const Tensor&) {
    return static_cast<int>(rng->uniform_int(arena::kNumActions));
  };
}

namespace {

int oracle_tr(const ArenaState& st, const ArenaConfig& cfg) {
  return toward(st.robot, cfg.tr.target);
}

int oracle_tc(const ArenaState& st, const ArenaConfig& cfg) {
  const double r = std::hypot(st.robot.x, st.robot.y);
  double theta = r > 1e-9 ? std::atan2(st.robot.y, st.robot.x) : 0.0;
  // Next waypoint on the circle, counterclockwise.
  const double delta = 0.45;
  Vec2 waypoint{cfg.tc.r_circle * std::cos(theta + delta),
                cfg.tc.r_circle * std::sin(theta + delta)};
  int best = 0;
  double best_d = 1e300;
  for (int a = 0; a < arena::kNumActions; ++a) {
    Vec2 q = after_action(st.robot, a, cfg);
    const double d = arena::distance(q, waypoint);
    if (d < best_d) {
      best_d = d;
      best = a;
    }
  }
  return best;
}

int oracle_te(const ArenaState& st, const ArenaConfig& cfg) {
  const double margin = 1.5 * cfg.step_size;
  auto wall_penalty = [&](const Vec2& p) {
    const double sx = cfg.half_width - std::abs(p.x);
    const double sy = cfg.half_width - std::abs(p.y);
    return 5.0 * (std::max(0.0, margin - sx) + std::max(0.0, margin - sy));
  };
  int best = 0;
  double best_score = -1e300;
  for (int a = 0; a < arena::kNumActions; ++a) {
    Vec2 q = after_action(st.robot, a, cfg);
    Vec2 chaser = arena::chaser_policy(st.chaser, q, cfg);
    const double score = arena::distance(q, chaser) - wall_penalty(q);
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  return best;
}

int oracle_action(arena::Task task, const ArenaState& st,
                  const ArenaConfig& cfg) {
  switch (task) {
    case arena::Task::TR: return oracle_tr(st, cfg);
    case arena::Task::TC: return oracle_tc(st, cfg);
    case arena::Task::TE: return oracle_te(st, cfg);
  }
  return 0;
}

}  // namespace

Agent oracle_agent(arena::Task task, const ArenaConfig& cfg) {
  return [task, cfg](const ArenaState& st, const Tensor&) {
    return oracle_action(task, st, cfg);
  };
}

namespace {

double run_episode(arena::Arena& env, uint64_t episode_seed,
                   const Agent& agent) {
  Tensor obs = env.reset(episode_seed);
  double total = 0.0;
  while (!env.done()) {
    int action = agent(env.state(), obs);
    arena::StepResult res = env.step(action);
    total += res.reward;
    obs = std::move(res.observation);
  }
  return total;
}

ArenaConfig eval_config(const ArenaConfig& cfg) {
  ArenaConfig out = cfg;
  out.domain_randomization = false;  // canonical background at evaluation
  out.max_target_contacts = 0;
  return out;
}

}  // namespace

double oracle_r_max(const ArenaConfig& cfg, int n_episodes, uint64_t seed) {
  ArenaConfig ec = eval_config(cfg);
  arena::Arena env(ec);
  double sum = 0.0;
  Agent oracle = [&ec](const ArenaState& st, const Tensor&) {
    return oracle_action(ec.task, st, ec);
  };
  for (int i = 0; i < n_episodes; ++i)
    sum += run_episode(env, nn::derive_seed(seed, 9000 + i), oracle);
  return sum / static_cast<double>(n_episodes);
}

EvalReport evaluate(const Agent& agent, const ArenaConfig& cfg, int n_episodes,
                    uint64_t seed, double r_max, const std::string& policy_id) {
  ArenaConfig ec = eval_config(cfg);
  EvalReport report;
  report.task = ec.task;
  report.policy_id = policy_id;
  report.seed = seed;
  report.r_max = r_max > 0.0 ? r_max : oracle_r_max(cfg, n_episodes, seed);
  arena::Arena env(ec);
  for (int i = 0; i < n_episodes; ++i) {
    double raw = run_episode(env, nn::derive_seed(seed, 9000 + i), agent);
    report.raw.push_back(raw);
    report.normalized.push_back(std::clamp(raw / report.r_max, 0.0, 1.0));
  }
  const double n = static_cast<double>(n_episodes);
  for (double v : report.raw) report.mean_raw += v / n;
  report.min_norm = 1e300;
  report.max_norm = -1e300;
  for (double v : report.normalized) {
    report.mean_norm += v / n;
    report.min_norm = std::min(report.min_norm, v);
    report.max_norm = std::max(report.max_norm, v);
  }
  for (double v : report.normalized)
    report.std_norm += (v - report.mean_norm) * (v - report.mean_norm) / n;
  report.std_norm = std::sqrt(report.std_norm);
  return report;
}

void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<EvalReport>& reports) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw nn::IoError("cannot open: " + path.string());
  f << "task,policy,episode,raw,normalized,r_max\n";
  for (const EvalReport& r : reports)
    for (size_t i = 0; i < r.raw.size(); ++i)
      f << arena::task_name(r.task) << ',' << r.policy_id << ',' << i << ','
        << r.raw[i] << ',' << r.normalized[i] << ',' << r.r_max << '\n';
}

}  // namespace discorl::eval
