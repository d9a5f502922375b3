#include "rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "io/container.hpp"
#include "nn/rng.hpp"

namespace discorl::rl {

using nn::Tensor;

namespace {

size_t conv_out(size_t n, size_t k, size_t s) { return (n - k) / s + 1; }

nn::NetworkSpec trunk_spec(InputMode mode, int state_dim, int render_size,
                           size_t head_out, uint64_t seed) {
  using L = nn::LayerSpec;
  nn::NetworkSpec spec;
  spec.seed = seed;
  if (mode == InputMode::Encoded) {
    spec.layers = {L::dense(static_cast<size_t>(state_dim), 64), L::tanh(),
                   L::dense(64, 64), L::tanh(), L::dense(64, head_out)};
  } else {
    size_t n1 = conv_out(static_cast<size_t>(render_size), 3, 2);
    size_t n2 = conv_out(n1, 3, 2);
    spec.layers = {L::conv(3, 4, 3, 2),       L::relu(),
                   L::conv(4, 8, 3, 2),       L::relu(),
                   L::flatten(),              L::dense(8 * n2 * n2, 64),
                   L::relu(),                 L::dense(64, head_out)};
  }
  return spec;
}

}  // namespace

PolicyNets make_policy(InputMode mode, int state_dim, int render_size,
                       uint64_t seed) {
  PolicyNets nets;
  nets.mode = mode;
  nets.state_dim = state_dim;
  nets.render_size = render_size;
  nets.pi = nn::Network(trunk_spec(mode, state_dim, render_size,
                                   arena::kNumActions,
                                   nn::derive_seed(seed, 11)));
  nets.vf = nn::Network(
      trunk_spec(mode, state_dim, render_size, 1, nn::derive_seed(seed, 12)));
  // Shrink the actor's output layer so the initial policy is near-uniform:
  // early exploration then comes from the environment, not from init luck,
  // which cuts the across-seed variance of training outcomes.
  auto& pi_params = nets.pi.params();
  for (double& v : pi_params[pi_params.size() - 2].data) v *= 0.01;
  return nets;
}

void save_policy(const std::filesystem::path& path, const PolicyNets& nets) {
  io::Container c;
  c.kind = "policy";
  auto net_meta = [](const nn::Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.spec().layers)
      layers.push_back(io::layer_to_json(l));
    return nlohmann::json{{"layers", layers}, {"seed", net.spec().seed}};
  };
  c.meta = {{"mode", nets.mode == InputMode::Encoded ? "encoded" : "raw_pixels"},
            {"state_dim", nets.state_dim},
            {"render_size", nets.render_size},
            {"pi", net_meta(nets.pi)},
            {"vf", net_meta(nets.vf)}};
  auto flat = [](const nn::Network& net) {
    std::vector<double> out;
    for (const Tensor& p : net.params())
      out.insert(out.end(), p.data.begin(), p.data.end());
    return out;
  };
  c.add_section("pi", flat(nets.pi));
  c.add_section("vf", flat(nets.vf));
  c.save(path);
}

PolicyNets load_policy(const std::filesystem::path& path) {
  io::Container c = io::Container::load(path);
  if (c.kind != "policy") throw nn::IoError("not a policy file: " + path.string());
  PolicyNets nets;
  nets.mode = c.meta.at("mode") == "encoded" ? InputMode::Encoded
                                             : InputMode::RawPixels;
  nets.state_dim = c.meta.at("state_dim");
  nets.render_size = c.meta.at("render_size");
  auto restore = [&](const nlohmann::json& meta,
                     const std::vector<double>& flat) {
    nn::NetworkSpec spec;
    spec.seed = meta.at("seed");
    for (const auto& lj : meta.at("layers"))
      spec.layers.push_back(io::layer_from_json(lj));
    nn::Network net(spec);
    size_t off = 0;
    for (Tensor& p : net.params()) {
      std::copy(flat.begin() + off, flat.begin() + off + p.size(),
                p.data.begin());
      off += p.size();
    }
    return net;
  };
  nets.pi = restore(c.meta.at("pi"), c.section("pi"));
  nets.vf = restore(c.meta.at("vf"), c.section("vf"));
  return nets;
}

uint64_t policy_fingerprint(const PolicyNets& nets,
                            const srl::SrlModel* encoder) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::vector<Tensor>& params) {
    for (const Tensor& p : params) {
      for (double v : p.data) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) {
          h ^= (bits >> (8 * i)) & 0xff;
          h *= 0x100000001b3ULL;
        }
      }
    }
  };
  mix(nets.pi.params());
  if (encoder) mix(encoder->encoder().params());
  return h;
}

PpoSampleLoss ppo_sample_loss(const Tensor& logits, int action,
                              double old_logp, double advantage,
                              double clip_eps, double entropy_coef) {
  PpoSampleLoss out;
  out.grad_logits = Tensor(logits.shape);
  Tensor probs = nn::softmax(logits);
  const double logp = std::log(std::max(probs[action], 1e-300));
  const double ratio = std::exp(logp - old_logp);
  const double lo = 1.0 - clip_eps, hi = 1.0 + clip_eps;
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, lo, hi) * advantage;
  out.loss = -std::min(unclipped, clipped);
  const bool clipped_out =
      (ratio > hi && advantage > 0.0) || (ratio < lo && advantage < 0.0);
  if (!clipped_out) {
    // d(-ratio*A)/dz = -A * ratio * (onehot - probs)
    for (size_t k = 0; k < probs.size(); ++k)
      out.grad_logits[k] = advantage * ratio * probs[k];
    out.grad_logits[action] -= advantage * ratio;
  }
  double entropy = 0.0;
  for (size_t k = 0; k < probs.size(); ++k) {
    const double p = std::max(probs[k], 1e-300);
    entropy -= p * std::log(p);
  }
  out.loss -= entropy_coef * entropy;
  for (size_t k = 0; k < probs.size(); ++k) {
    const double p = std::max(probs[k], 1e-300);
    out.grad_logits[k] += entropy_coef * p * (std::log(p) + entropy);
  }
  return out;
}

RolloutWorker::RolloutWorker(const arena::ArenaConfig& cfg,
                             const srl::SrlModel* encoder, InputMode mode,
                             uint64_t seed)
    : env_(cfg), encoder_(encoder), mode_(mode), seed_(seed) {
  if (mode_ == InputMode::Encoded && !encoder_)
    throw nn::ConfigError("encoded input mode requires a trained encoder");
  current_input_ = policy_input(env_.reset(nn::derive_seed(seed_, episode_index_)));
}

Tensor RolloutWorker::policy_input(const Tensor& obs_hwc) const {
  if (mode_ == InputMode::Encoded) return encoder_->encode(obs_hwc);
  return srl::obs_to_chw(obs_hwc);
}

RolloutBatch RolloutWorker::collect(const PolicyNets& nets, int n_steps,
                                    nn::Rng& rng, const PpoConfig& cfg,
                                    double greedy_frac) {
  RolloutBatch batch;
  batch.steps.reserve(static_cast<size_t>(n_steps));
  if (!greedy_decided_) {
    episode_greedy_ = rng.uniform() < greedy_frac;
    greedy_decided_ = true;
  }
  for (int i = 0; i < n_steps; ++i) {
    RolloutStep step;
    step.input = current_input_;
    Tensor logits = nets.pi.forward(step.input);
    Tensor probs = nn::softmax(logits);
    int action;
    if (episode_greedy_) {
      action = 0;
      for (int a = 1; a < arena::kNumActions; ++a)
        if (probs[a] > probs[action]) action = a;
    } else {
      double u = rng.uniform();
      action = arena::kNumActions - 1;
      double acc = 0.0;
      for (int a = 0; a < arena::kNumActions; ++a) {
        acc += probs[a];
        if (u < acc) {
          action = a;
          break;
        }
      }
    }
    step.action = action;
    step.logp = std::log(std::max(probs[action], 1e-300));
    step.value = nets.vf.forward(step.input)[0];
    arena::StepResult res = env_.step(action);
    step.done = res.done;
    episode_reward_ += res.reward;
    // Reward scaling by the running std of the discounted return
    // (VecNormalize-style); the reported episode rewards stay raw.
    ret_accum_ = cfg.gamma * ret_accum_ + res.reward;
    ret_count_ += 1;
    const double d = ret_accum_ - ret_mean_;
    ret_mean_ += d / static_cast<double>(ret_count_);
    ret_m2_ += d * (ret_accum_ - ret_mean_);
    const double ret_std = ret_count_ > 1
                               ? std::sqrt(ret_m2_ /
                                           static_cast<double>(ret_count_ - 1))
                               : 1.0;
    step.reward = res.reward / std::max(ret_std, 1e-4);
    if (res.done) ret_accum_ = 0.0;
    if (res.done) {
      completed_rewards_.push_back(episode_reward_);
      episode_reward_ = 0.0;
      episodes_completed_ += 1;
      episode_index_ += 1;
      current_input_ =
          policy_input(env_.reset(nn::derive_seed(seed_, episode_index_)));
      episode_greedy_ = rng.uniform() < greedy_frac;
    } else {
      current_input_ = policy_input(res.observation);
    }
    batch.steps.push_back(std::move(step));
  }
  // GAE with a bootstrap value at the batch boundary.
  const size_t n = batch.steps.size();
  batch.advantages.assign(n, 0.0);
  batch.returns.assign(n, 0.0);
  double next_value = batch.steps.back().done
                          ? 0.0
                          : nets.vf.forward(current_input_)[0];
  double next_adv = 0.0;
  for (size_t t = n; t-- > 0;) {
    const RolloutStep& s = batch.steps[t];
    const double not_done = s.done ? 0.0 : 1.0;
    const double delta =
        s.reward + cfg.gamma * next_value * not_done - s.value;
    next_adv = delta + cfg.gamma * cfg.gae_lambda * not_done * next_adv;
    batch.advantages[t] = next_adv;
    batch.returns[t] = next_adv + s.value;
    next_value = s.value;
  }
  for (double a : batch.advantages)
    if (!std::isfinite(a)) throw nn::StageError("non-finite advantage");
  return batch;
}

std::vector<double> RolloutWorker::take_completed_rewards() {
  std::vector<double> out;
  out.swap(completed_rewards_);
  return out;
}

PpoStats ppo_update(PolicyNets& nets, nn::AdamState& opt_pi,
                    nn::AdamState& opt_vf, const RolloutBatch& batch,
                    const PpoConfig& cfg, nn::Rng& rng) {
  if (batch.steps.empty()) throw nn::UsageError("ppo_update on empty batch");
  const size_t n = batch.steps.size();
  // Advantage normalization over the batch.
  double mean = 0.0, var = 0.0;
  for (double a : batch.advantages) mean += a;
  mean /= static_cast<double>(n);
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);

  PpoStats stats;
  size_t stat_count = 0;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (size_t start = 0; start < n;
         start += static_cast<size_t>(cfg.minibatch_size)) {
      const size_t end =
          std::min(n, start + static_cast<size_t>(cfg.minibatch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      nn::GradStore g_pi = nets.pi.zero_grads();
      nn::GradStore g_vf = nets.vf.zero_grads();
      for (size_t i = start; i < end; ++i) {
        const RolloutStep& s = batch.steps[order[i]];
        const double adv = (batch.advantages[order[i]] - mean) * inv_std;
        nn::Cache c_pi, c_vf;
        Tensor logits = nets.pi.forward(s.input, &c_pi);
        PpoSampleLoss sl = ppo_sample_loss(logits, s.action, s.logp, adv,
                                           cfg.clip_eps, cfg.entropy_coef);
        if (!std::isfinite(sl.loss))
          throw nn::StageError("non-finite PPO loss");
        for (double& v : sl.grad_logits.data) v *= inv_b;
        nets.pi.backward(c_pi, sl.grad_logits, g_pi);

        Tensor v = nets.vf.forward(s.input, &c_vf);
        const double verr = v[0] - batch.returns[order[i]];
        Tensor gv({1});
        gv[0] = cfg.value_coef * 2.0 * verr * inv_b;
        nets.vf.backward(c_vf, gv, g_vf);

        stats.surrogate += -sl.loss;
        stats.value_loss += verr * verr;
        stat_count += 1;
      }
      nn::adam_step(opt_pi, nets.pi.params(), g_pi);
      nn::adam_step(opt_vf, nets.vf.params(), g_vf);
    }
  }
  if (stat_count > 0) {
    stats.surrogate /= static_cast<double>(stat_count);
    stats.value_loss /= static_cast<double>(stat_count);
  }
  return stats;
}

namespace {

// Mean raw return of the greedy policy over fixed-seed episodes on the
// canonical background; used for snapshot selection during training.
double greedy_selection_return(const arena::ArenaConfig& env_cfg,
                               const srl::SrlModel* encoder, InputMode mode,
                               const PolicyNets& nets, int episodes,
                               uint64_t seed) {
  arena::ArenaConfig ec = env_cfg;
  ec.domain_randomization = false;
  arena::Arena env(ec);
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    Tensor obs = env.reset(nn::derive_seed(seed, 9500 + i));
    while (!env.done()) {
      Tensor input = mode == InputMode::Encoded ? encoder->encode(obs)
                                                : srl::obs_to_chw(obs);
      Tensor logits = nets.pi.forward(input);
      size_t best = 0;
      for (size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = k;
      arena::StepResult res = env.step(static_cast<int>(best));
      total += res.reward;
      obs = std::move(res.observation);
    }
  }
  return total / static_cast<double>(episodes);
}

}  // namespace

TeacherResult train_teacher(const arena::ArenaConfig& env_cfg,
                            const srl::SrlModel* encoder,
                            const TeacherTrainConfig& cfg, uint64_t seed) {
  TeacherResult result;
  const int state_dim = encoder ? encoder->state_dim() : 0;
  result.policy = make_policy(cfg.mode, state_dim, env_cfg.render_size,
                              nn::derive_seed(seed, 21));
  if (cfg.keep_checkpoints)
    result.checkpoints.push_back({0, result.policy});
  if (cfg.budget_steps == 0) return result;

  nn::AdamState opt_pi, opt_vf;
  opt_pi.lr = opt_vf.lr = cfg.ppo.lr;
  opt_pi.init(result.policy.pi.params());
  opt_vf.init(result.policy.vf.params());
  RolloutWorker worker(env_cfg, encoder, cfg.mode, nn::derive_seed(seed, 22));
  nn::Rng rng(nn::derive_seed(seed, 23));

  uint64_t steps_done = 0;
  uint64_t next_checkpoint = cfg.checkpoint_interval;
  uint64_t next_selection = cfg.selection_interval;
  PolicyNets best_policy = result.policy;
  double best_return = -1e300;
  bool selected = false;
  std::vector<double> recent;
  while (steps_done < cfg.budget_steps) {
    const int n = static_cast<int>(std::min<uint64_t>(
        cfg.ppo.rollout_steps, cfg.budget_steps - steps_done));
    // Greedy-episode fraction ramps over the second half of the budget; see
    // TeacherTrainConfig::greedy_frac_final.
    const double pre_progress = static_cast<double>(steps_done) /
                                static_cast<double>(cfg.budget_steps);
    const double greedy_frac =
        cfg.greedy_frac_final * std::max(0.0, 2.0 * pre_progress - 1.0);
    // Pursuit-speed curriculum: ramp from the configured fraction of the
    // canonical speed to full speed at the halfway mark.
    const double speed_scale =
        cfg.chaser_curriculum_start +
        (1.0 - cfg.chaser_curriculum_start) * std::min(1.0, 2.0 * pre_progress);
    worker.set_chaser_speed(env_cfg.te.chaser_speed * speed_scale);
    RolloutBatch batch =
        worker.collect(result.policy, n, rng, cfg.ppo, greedy_frac);
    steps_done += static_cast<uint64_t>(n);
    for (double r : worker.take_completed_rewards()) {
      recent.push_back(r);
      if (recent.size() > 20) recent.erase(recent.begin());
    }
    if (!recent.empty()) {
      double m = std::accumulate(recent.begin(), recent.end(), 0.0) /
                 static_cast<double>(recent.size());
      result.curve.push_back({steps_done, worker.episodes_completed(), m});
    }
    // Linear decay of the learning rate and the entropy bonus over the
    // budget: late updates refine the policy instead of re-exploring, which
    // matters for the greedy evaluation.
    const double progress = static_cast<double>(steps_done) /
                            static_cast<double>(cfg.budget_steps);
    PpoConfig update_cfg = cfg.ppo;
    update_cfg.lr = cfg.ppo.lr * std::max(1.0 - progress, 0.05);
    // Entropy reaches zero at the halfway mark: the second half refines a
    // deterministic flow, which is what the greedy evaluation runs.
    update_cfg.entropy_coef =
        cfg.ppo.entropy_coef * std::max(1.0 - 2.0 * progress, 0.0);
    opt_pi.lr = opt_vf.lr = update_cfg.lr;
    ppo_update(result.policy, opt_pi, opt_vf, batch, update_cfg, rng);
    while (cfg.keep_checkpoints &&
           worker.episodes_completed() >= next_checkpoint) {
      result.checkpoints.push_back({next_checkpoint, result.policy});
      next_checkpoint += cfg.checkpoint_interval;
    }
    if (cfg.selection_interval > 0 && steps_done >= next_selection &&
        steps_done < cfg.budget_steps) {
      const double ret = greedy_selection_return(
          env_cfg, encoder, cfg.mode, result.policy, cfg.selection_episodes,
          nn::derive_seed(seed, 24));
      if (ret > best_return) {
        best_return = ret;
        best_policy = result.policy;
      }
      selected = true;
      next_selection += cfg.selection_interval;
    }
  }
  if (selected) {
    // The final policy competes with the snapshots on the same episodes.
    const double ret = greedy_selection_return(
        env_cfg, encoder, cfg.mode, result.policy, cfg.selection_episodes,
        nn::derive_seed(seed, 24));
    if (ret < best_return) result.policy = best_policy;
  }
  return result;
}

void write_curve_csv(const std::filesystem::path& path,
                     const std::vector<CurvePoint>& curve) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw nn::IoError("cannot open: " + path.string());
  f << "step,episode,mean_reward\n";
  for (const CurvePoint& p : curve)
    f << p.steps << ',' << p.episodes << ',' << p.mean_reward << '\n';
}

TeacherPolicy::TeacherPolicy(std::optional<srl::SrlModel> encoder,
                             PolicyNets nets)
    : encoder_(std::move(encoder)), nets_(std::move(nets)) {
  if (nets_.mode == InputMode::Encoded && !encoder_)
    throw nn::ConfigError("encoded policy requires its encoder");
}

std::array<double, arena::kNumActions> TeacherPolicy::action_probs(
    const Tensor& obs_hwc) const {
  Tensor input = nets_.mode == InputMode::Encoded
                     ? encoder_->encode(obs_hwc)
                     : srl::obs_to_chw(obs_hwc);
  Tensor probs = nn::softmax(nets_.pi.forward(input));
  std::array<double, arena::kNumActions> out{};
  for (int a = 0; a < arena::kNumActions; ++a) out[a] = probs[a];
  return out;
}

int argmax_action(const std::array<double, arena::kNumActions>& probs) {
  int best = 0;
  for (int a = 1; a < arena::kNumActions; ++a)
    if (probs[a] > probs[best]) best = a;
  return best;
}

int TeacherPolicy::greedy_action(const Tensor& obs_hwc) const {
  return argmax_action(action_probs(obs_hwc));
}

int TeacherPolicy::sample_action(const Tensor& obs_hwc, nn::Rng& rng) const {
  auto probs = action_probs(obs_hwc);
  double u = rng.uniform(), acc = 0.0;
  for (int a = 0; a < arena::kNumActions; ++a) {
    acc += probs[a];
    if (u < acc) return a;
  }
  return arena::kNumActions - 1;
}

uint64_t TeacherPolicy::fingerprint() const {
  return policy_fingerprint(nets_, encoder_ ? &*encoder_ : nullptr);
}

}  // namespace discorl::rl
