#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "arena/arena.hpp"
#include "nn/adam.hpp"
#include "nn/network.hpp"
#include "srl/srl.hpp"

namespace discorl::rl {

enum class InputMode { Encoded, RawPixels };

// Actor and critic networks. The actor outputs 4 action logits; its softmax
// is the action distribution.
struct PolicyNets {
  nn::Network pi;
  nn::Network vf;
  InputMode mode = InputMode::Encoded;
  int state_dim = 0;
  int render_size = 0;
};

PolicyNets make_policy(InputMode mode, int state_dim, int render_size,
                       uint64_t seed);

void save_policy(const std::filesystem::path& path, const PolicyNets& nets);
PolicyNets load_policy(const std::filesystem::path& path);

// FNV-1a over the actor/critic parameter bytes (plus encoder when given);
// identifies which weights produced a distillation dataset.
uint64_t policy_fingerprint(const PolicyNets& nets,
                            const srl::SrlModel* encoder);

struct RolloutStep {
  nn::Tensor input;
  int action = 0;
  double logp = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct RolloutBatch {
  std::vector<RolloutStep> steps;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch_size = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double lr = 3e-4;
  int rollout_steps = 2048;
};

// Per-sample clipped-surrogate + entropy loss and its gradient w.r.t. the
// action logits. Samples pushed outside the clip band contribute zero
// surrogate gradient.
struct PpoSampleLoss {
  double loss = 0.0;
  nn::Tensor grad_logits;
};
PpoSampleLoss ppo_sample_loss(const nn::Tensor& logits, int action,
                              double old_logp, double advantage,
                              double clip_eps, double entropy_coef);

// Owns an environment across rollout batches; encodes observations when an
// encoder is given, feeds raw CHW pixels otherwise.
class RolloutWorker {
 public:
  RolloutWorker(const arena::ArenaConfig& cfg, const srl::SrlModel* encoder,
                InputMode mode, uint64_t seed);

  // greedy_frac: probability that a freshly started episode is collected
  // with argmax actions instead of sampling. Greedy episodes expose the
  // deterministic evaluation flow (and its failure states, e.g. action
  // cycles) to the learner, which plain on-policy sampling never visits.
  RolloutBatch collect(const PolicyNets& nets, int n_steps, nn::Rng& rng,
                       const PpoConfig& cfg, double greedy_frac = 0.0);

  // Episode rewards completed since the last call.
  std::vector<double> take_completed_rewards();

  void set_chaser_speed(double v) { env_.set_chaser_speed(v); }
  uint64_t episodes_completed() const { return episodes_completed_; }

 private:
  nn::Tensor policy_input(const nn::Tensor& obs_hwc) const;

  arena::Arena env_;
  const srl::SrlModel* encoder_;
  InputMode mode_;
  uint64_t seed_;
  uint64_t episode_index_ = 0;
  uint64_t episodes_completed_ = 0;
  nn::Tensor current_input_;
  double episode_reward_ = 0.0;
  std::vector<double> completed_rewards_;
  // Running variance of the discounted return, used to scale rewards for
  // the critic so value targets stay O(1) across reward regimes.
  double ret_accum_ = 0.0;
  double ret_mean_ = 0.0, ret_m2_ = 0.0;
  uint64_t ret_count_ = 0;
  bool episode_greedy_ = false;
  bool greedy_decided_ = false;
};

struct PpoStats {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

PpoStats ppo_update(PolicyNets& nets, nn::AdamState& opt_pi,
                    nn::AdamState& opt_vf, const RolloutBatch& batch,
                    const PpoConfig& cfg, nn::Rng& rng);

struct CurvePoint {
  uint64_t steps = 0;
  uint64_t episodes = 0;
  double mean_reward = 0.0;
};

struct Checkpoint {
  uint64_t episode = 0;
  PolicyNets policy;
};

struct TeacherTrainConfig {
  uint64_t budget_steps = 150000;
  PpoConfig ppo;
  InputMode mode = InputMode::Encoded;
  uint64_t checkpoint_interval = 200;  // episodes
  bool keep_checkpoints = true;
  // Greedy-evaluation model selection: every `selection_interval` training
  // steps, run `selection_episodes` greedy episodes on fixed seeds and keep
  // the best snapshot. The episodes are evaluation, not training; they are
  // not charged against budget_steps, so the training trajectory is
  // identical with selection on or off. 0 disables selection (the final
  // policy is returned).
  uint64_t selection_interval = 10000;
  int selection_episodes = 10;
  // Fraction of rollout episodes collected greedily by the end of training.
  // The fraction ramps linearly from zero at the budget's halfway mark (the
  // same point where the entropy bonus reaches zero), so the late training
  // distribution matches the greedy evaluation flow.
  double greedy_frac_final = 0.5;
  // Pursuit-speed curriculum for the escape task: training starts with the
  // chaser at this fraction of its canonical speed and ramps linearly to
  // full speed at the budget's halfway mark. Escape behavior is easy to
  // discover against a slow chaser; without the ramp, runs frequently never
  // find it (the robot is caught early, almost every reward is -1, and the
  // gradient carries no direction). Snapshot selection and evaluation always
  // use the canonical speed. 1.0 disables the curriculum; tasks without a
  // chaser are unaffected.
  double chaser_curriculum_start = 1.0;
};

struct TeacherResult {
  PolicyNets policy;
  std::vector<CurvePoint> curve;
  std::vector<Checkpoint> checkpoints;
};

TeacherResult train_teacher(const arena::ArenaConfig& env_cfg,
                            const srl::SrlModel* encoder,
                            const TeacherTrainConfig& cfg, uint64_t seed);

void write_curve_csv(const std::filesystem::path& path,
                     const std::vector<CurvePoint>& curve);

// Encoder + actor bundled as an observation-to-distribution policy.
class TeacherPolicy {
 public:
  TeacherPolicy() = default;
  TeacherPolicy(std::optional<srl::SrlModel> encoder, PolicyNets nets);

  std::array<double, arena::kNumActions> action_probs(
      const nn::Tensor& obs_hwc) const;
  int greedy_action(const nn::Tensor& obs_hwc) const;
  int sample_action(const nn::Tensor& obs_hwc, nn::Rng& rng) const;
  uint64_t fingerprint() const;
  const PolicyNets& nets() const { return nets_; }

 private:
  std::optional<srl::SrlModel> encoder_;
  PolicyNets nets_;
};

int argmax_action(const std::array<double, arena::kNumActions>& probs);

}  // namespace discorl::rl
