#include "arena/arena.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace discorl::arena {

std::string task_name(Task t) {
  switch (t) {
    case Task::TR: return "TR";
    case Task::TC: return "TC";
    case Task::TE: return "TE";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  if (name == "TR") return Task::TR;
  if (name == "TC") return Task::TC;
  if (name == "TE") return Task::TE;
  throw nn::ConfigError("unknown task: " + name);
}

double distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void ArenaConfig::validate() const {
  if (half_width <= 0.0) throw nn::ConfigError("half_width must be positive");
  if (step_size <= 0.0 || step_size >= half_width)
    throw nn::ConfigError("step_size must be in (0, half_width)");
  if (episode_len < 1) throw nn::ConfigError("episode_len must be >= 1");
  if (render_size < 8) throw nn::ConfigError("render_size too small");
  if (tc.r_circle >= half_width)
    throw nn::ConfigError("r_circle must be < half_width");
  if (tc.k < 1) throw nn::ConfigError("tc.k must be >= 1");
  if (te.catch_range <= 0.0) throw nn::ConfigError("catch_range must be > 0");
  if (tr.contact_range <= 0.0) throw nn::ConfigError("contact_range must be > 0");
}

namespace {

Vec2 z_lag(const ArenaState& state, int k) {
  const auto& h = state.position_history;
  if (h.empty()) return state.robot;
  const size_t len = h.size();
  if (len >= static_cast<size_t>(k)) return h[len - static_cast<size_t>(k)];
  return h.front();  // padded with the start position
}

}  // namespace

double reward_tr(const ArenaState& state, const ArenaConfig& cfg) {
  if (state.bumped) return -1.0;
  if (distance(state.robot, cfg.tr.target) <= cfg.tr.contact_range) return 1.0;
  return 0.0;
}

double reward_tc(const ArenaState& state, const ArenaConfig& cfg) {
  const double lambda = cfg.tc.lambda;
  const Vec2 z = state.robot;
  const Vec2 zk = z_lag(state, cfg.tc.k);
  const double radial = std::hypot(z.x, z.y) - cfg.tc.r_circle;
  const double on_circle = 1.0 - lambda * radial * radial;
  const double dx = z.x - zk.x, dy = z.y - zk.y;
  const double movement = dx * dx + dy * dy;
  const double bump = state.bumped ? -1.0 : 0.0;
  return lambda * on_circle * movement + lambda * lambda * bump;
}

double reward_te(const ArenaState& state, const ArenaConfig& cfg) {
  if (state.bumped) return -1.0;
  if (distance(state.robot, state.chaser) <= cfg.te.catch_range) return -1.0;
  return 1.0;
}

Vec2 chaser_policy(const Vec2& chaser, const Vec2& robot,
                   const ArenaConfig& cfg) {
  const double dist = distance(chaser, robot);
  Vec2 next = chaser;
  if (dist > 0.0) {
    const double move = std::min(cfg.te.chaser_speed, dist);
    next.x += (robot.x - chaser.x) / dist * move;
    next.y += (robot.y - chaser.y) / dist * move;
  }
  next.x = std::clamp(next.x, -cfg.half_width, cfg.half_width);
  next.y = std::clamp(next.y, -cfg.half_width, cfg.half_width);
  return next;
}

namespace {

struct Canvas {
  nn::Tensor* img;
  int n;
  void set(int r, int c, double cr, double cg, double cb) {
    if (r < 0 || r >= n || c < 0 || c >= n) return;
    double* px = img->data.data() + (static_cast<size_t>(r) * n + c) * 3;
    px[0] = cr;
    px[1] = cg;
    px[2] = cb;
  }
  void square(int r, int c, int radius, double cr, double cg, double cb) {
    for (int dr = -radius; dr <= radius; ++dr)
      for (int dc = -radius; dc <= radius; ++dc) set(r + dr, c + dc, cr, cg, cb);
  }
};

int to_pixel(double v, const ArenaConfig& cfg) {
  const int n = cfg.render_size;
  const double u = (v + cfg.half_width) / (2.0 * cfg.half_width);
  int p = static_cast<int>(std::lround(u * (n - 1)));
  return std::clamp(p, 0, n - 1);
}

}  // namespace

nn::Tensor render(const ArenaState& state, const ArenaConfig& cfg) {
  const int n = cfg.render_size;
  nn::Tensor img({static_cast<size_t>(n), static_cast<size_t>(n), 3});
  Canvas cv{&img, n};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      cv.set(r, c, state.background[0], state.background[1],
             state.background[2]);
  // Boundary frame.
  for (int i = 0; i < n; ++i) {
    cv.set(0, i, 1.0, 0.0, 0.0);
    cv.set(n - 1, i, 1.0, 0.0, 0.0);
    cv.set(i, 0, 1.0, 0.0, 0.0);
    cv.set(i, n - 1, 1.0, 0.0, 0.0);
  }
  // Task marker (5x5), then robot (3x3) on top. Row 0 is y = +half_width.
  auto row = [&](double y) { return to_pixel(-y, cfg); };
  auto col = [&](double x) { return to_pixel(x, cfg); };
  switch (cfg.task) {
    case Task::TR:
      cv.square(row(cfg.tr.target.y), col(cfg.tr.target.x), 2, 1.0, 0.0, 0.0);
      break;
    case Task::TC:
      cv.square(row(0.0), col(0.0), 2, 0.0, 0.0, 1.0);
      break;
    case Task::TE:
      cv.square(row(state.chaser.y), col(state.chaser.x), 2, 1.0, 0.6, 0.1);
      break;
  }
  cv.square(row(state.robot.y), col(state.robot.x), 1, 0.0, 0.0, 0.0);
  return img;
}

std::vector<Vec2> grid_positions(const ArenaConfig& cfg, double stride) {
  if (stride <= 0.0 || stride > 2.0 * cfg.half_width + 1e-12)
    throw nn::ConfigError("grid stride must be in (0, arena width]");
  const double hw = cfg.half_width;
  // Degenerate stride spanning the whole arena: single lattice origin point.
  if (stride >= 2.0 * hw - 1e-12) return {Vec2{-hw, -hw}};
  const size_t per_axis =
      static_cast<size_t>(std::floor(2.0 * hw / stride + 1e-9)) + 1;
  std::vector<double> axis(per_axis);
  for (size_t i = 0; i < per_axis; ++i)
    axis[i] = std::min(-hw + static_cast<double>(i) * stride, hw);
  std::vector<Vec2> out;
  out.reserve(axis.size() * axis.size());
  for (double y : axis)
    for (double x : axis) out.push_back(Vec2{x, y});
  return out;
}

Arena::Arena(ArenaConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
}

nn::Tensor Arena::reset(uint64_t seed) {
  rng_ = nn::Rng(seed);
  state_ = ArenaState{};
  state_.robot.x = rng_.uniform(-cfg_.half_width, cfg_.half_width);
  state_.robot.y = rng_.uniform(-cfg_.half_width, cfg_.half_width);
  state_.position_history.clear();
  state_.position_history.push_back(state_.robot);
  state_.chaser = cfg_.te.chaser_start;
  if (cfg_.domain_randomization) {
    state_.background = {rng_.uniform(), rng_.uniform(), rng_.uniform()};
  } else {
    state_.background = kCanonicalBackground;
  }
  state_.t = 0;
  done_ = false;
  return render(state_, cfg_);
}

StepResult Arena::step(int action) {
  if (done_) throw nn::UsageError("step on a finished episode");
  if (action < 0 || action >= kNumActions)
    throw nn::UsageError("action index out of range");
  const double hw = cfg_.half_width, s = cfg_.step_size;
  Vec2 next = state_.robot;
  switch (action) {
    case 0: next.x -= s; break;
    case 1: next.x += s; break;
    case 2: next.y += s; break;
    case 3: next.y -= s; break;
  }
  const bool bumped = next.x < -hw || next.x > hw || next.y < -hw || next.y > hw;
  next.x = std::clamp(next.x, -hw, hw);
  next.y = std::clamp(next.y, -hw, hw);
  state_.robot = next;
  state_.bumped = bumped;
  if (cfg_.task == Task::TE)
    state_.chaser = chaser_policy(state_.chaser, state_.robot, cfg_);
  if (cfg_.domain_randomization)
    state_.background = {rng_.uniform(), rng_.uniform(), rng_.uniform()};
  state_.t += 1;

  StepResult res;
  res.info.bumped = bumped;
  switch (cfg_.task) {
    case Task::TR:
      res.reward = reward_tr(state_, cfg_);
      res.info.contact_with_target =
          distance(state_.robot, cfg_.tr.target) <= cfg_.tr.contact_range;
      if (res.info.contact_with_target) state_.target_contacts += 1;
      break;
    case Task::TC:
      res.reward = reward_tc(state_, cfg_);
      break;
    case Task::TE:
      res.reward = reward_te(state_, cfg_);
      res.info.caught_by_chaser =
          distance(state_.robot, state_.chaser) <= cfg_.te.catch_range;
      break;
  }
  state_.position_history.push_back(state_.robot);
  while (state_.position_history.size() > static_cast<size_t>(cfg_.tc.k))
    state_.position_history.pop_front();

  done_ = state_.t >= cfg_.episode_len;
  if (cfg_.task == Task::TR && cfg_.max_target_contacts > 0 &&
      state_.target_contacts >= cfg_.max_target_contacts)
    done_ = true;
  res.done = done_;
  res.observation = render(state_, cfg_);
  return res;
}

void write_trace_csv(const std::filesystem::path& path,
                     const std::vector<TraceRow>& rows, Task task) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw nn::IoError("cannot open: " + path.string());
  f << "t,x,y,action,reward,bumped,task\n";
  for (const TraceRow& r : rows)
    f << r.t << ',' << r.x << ',' << r.y << ',' << r.action << ',' << r.reward
      << ',' << (r.bumped ? 1 : 0) << ',' << task_name(task) << '\n';
}

}  // namespace discorl::arena
