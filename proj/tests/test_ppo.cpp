#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nn/rng.hpp"
#include "rl/ppo.hpp"

using namespace discorl;
using nn::Tensor;

namespace {

Tensor random_logits(nn::Rng& rng) {
  Tensor t({4});
  for (double& v : t.data) v = rng.uniform(-2.0, 2.0);
  return t;
}

bool close_rel(double a, double b, double tol = 1e-4) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("ppo sample loss gradient matches finite differences") {
  nn::Rng rng(3);
  int checked = 0;
  for (int t = 0; t < 40; ++t) {
    Tensor logits = random_logits(rng);
    const int action = static_cast<int>(rng.uniform_int(4));
    const double old_logp =
        std::log(nn::softmax(random_logits(rng))[action]);
    const double adv = rng.uniform(-2.0, 2.0);
    rl::PpoSampleLoss sl =
        rl::ppo_sample_loss(logits, action, old_logp, adv, 0.2, 0.01);
    // Skip instances near the clip boundary where the loss is not smooth.
    const double ratio =
        std::exp(std::log(nn::softmax(logits)[action]) - old_logp);
    if (std::abs(ratio - 1.2) < 1e-3 || std::abs(ratio - 0.8) < 1e-3) continue;
    const double h = 1e-6;
    for (size_t k = 0; k < 4; ++k) {
      Tensor lp = logits, lm = logits;
      lp.data[k] += h;
      lm.data[k] -= h;
      const double fd =
          (rl::ppo_sample_loss(lp, action, old_logp, adv, 0.2, 0.01).loss -
           rl::ppo_sample_loss(lm, action, old_logp, adv, 0.2, 0.01).loss) /
          (2 * h);
      CHECK(close_rel(sl.grad_logits[k], fd));
    }
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("samples pushed outside the clip band stop contributing") {
  Tensor logits({4});
  logits.data = {2.0, 0.0, 0.0, 0.0};
  const double p0 = nn::softmax(logits)[0];
  // Old policy gave action 0 a much lower probability: ratio >> 1+eps.
  const double old_logp = std::log(p0 / 4.0);
  rl::PpoSampleLoss up =
      rl::ppo_sample_loss(logits, 0, old_logp, +1.0, 0.2, 0.0);
  for (double g : up.grad_logits.data) CHECK(g == 0.0);
  // With a negative advantage the same ratio is still inside the objective.
  rl::PpoSampleLoss down =
      rl::ppo_sample_loss(logits, 0, old_logp, -1.0, 0.2, 0.0);
  double norm = 0.0;
  for (double g : down.grad_logits.data) norm += std::abs(g);
  CHECK(norm > 0.0);
}

TEST_CASE("rollouts have consistent bookkeeping and finite advantages") {
  arena::ArenaConfig cfg;
  cfg.task = arena::Task::TR;
  cfg.episode_len = 25;
  srl::SrlModel encoder(srl::SrlSpec{8, 32, 5});
  rl::PolicyNets nets = rl::make_policy(rl::InputMode::Encoded, 8, 32, 7);
  rl::RolloutWorker worker(cfg, &encoder, rl::InputMode::Encoded, 13);
  nn::Rng rng(17);
  rl::PpoConfig pcfg;
  rl::RolloutBatch batch = worker.collect(nets, 100, rng, pcfg);
  CHECK(batch.steps.size() == 100);
  CHECK(batch.advantages.size() == 100);
  CHECK(worker.episodes_completed() == 4);
  CHECK(worker.take_completed_rewards().size() == 4);
  CHECK(worker.take_completed_rewards().empty());
  int dones = 0;
  for (const rl::RolloutStep& s : batch.steps) {
    CHECK(s.input.data.size() == 8);
    if (s.done) ++dones;
  }
  CHECK(dones == 4);
  for (double a : batch.advantages) CHECK(std::isfinite(a));
  // Raw mode feeds CHW pixels instead.
  rl::PolicyNets raw = rl::make_policy(rl::InputMode::RawPixels, 0, 32, 7);
  rl::RolloutWorker raw_worker(cfg, nullptr, rl::InputMode::RawPixels, 13);
  rl::RolloutBatch raw_batch = raw_worker.collect(raw, 5, rng, pcfg);
  CHECK(raw_batch.steps[0].input.data.size() == 32 * 32 * 3);
  CHECK_THROWS_AS(
      rl::RolloutWorker(cfg, nullptr, rl::InputMode::Encoded, 1),
      nn::ConfigError);
}

TEST_CASE("ppo update solves a one-state bandit") {
  // Fabricated rollouts on a single dummy state: action 0 pays 1, the rest
  // pay 0. The policy should concentrate on action 0.
  rl::PolicyNets nets = rl::make_policy(rl::InputMode::Encoded, 1, 0, 99);
  rl::PpoConfig cfg;
  cfg.minibatch_size = 64;
  nn::AdamState opt_pi, opt_vf;
  opt_pi.lr = opt_vf.lr = 3e-3;
  opt_pi.init(nets.pi.params());
  opt_vf.init(nets.vf.params());
  nn::Rng rng(8);
  Tensor state({1});
  state.data = {1.0};
  for (int iter = 0; iter < 25; ++iter) {
    rl::RolloutBatch batch;
    Tensor probs = nn::softmax(nets.pi.forward(state));
    const double value = nets.vf.forward(state)[0];
    for (int i = 0; i < 256; ++i) {
      rl::RolloutStep s;
      s.input = state;
      const double u = rng.uniform();
      double acc = 0.0;
      s.action = 3;
      for (int a = 0; a < 4; ++a) {
        acc += probs[a];
        if (u < acc) {
          s.action = a;
          break;
        }
      }
      s.logp = std::log(probs[s.action]);
      s.value = value;
      s.reward = s.action == 0 ? 1.0 : 0.0;
      s.done = true;  // one-step episodes
      batch.steps.push_back(std::move(s));
      batch.advantages.push_back(batch.steps.back().reward - value);
      batch.returns.push_back(batch.steps.back().reward);
    }
    rl::ppo_update(nets, opt_pi, opt_vf, batch, cfg, rng);
  }
  Tensor final_probs = nn::softmax(nets.pi.forward(state));
  CHECK(final_probs[0] > 0.9);
  CHECK(nets.vf.forward(state)[0] > 0.7);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(rl::argmax_action({0.3, 0.3, 0.2, 0.2}) == 0);
  CHECK(rl::argmax_action({0.1, 0.4, 0.4, 0.1}) == 1);
  CHECK(rl::argmax_action({0.1, 0.1, 0.1, 0.7}) == 3);
}

TEST_CASE("teacher training respects budget zero and checkpoint cadence") {
  arena::ArenaConfig env_cfg;
  env_cfg.task = arena::Task::TR;
  env_cfg.episode_len = 20;
  srl::SrlModel encoder(srl::SrlSpec{8, 32, 3});
  rl::TeacherTrainConfig cfg;
  cfg.budget_steps = 0;
  rl::TeacherResult zero = rl::train_teacher(env_cfg, &encoder, cfg, 1);
  CHECK(zero.curve.empty());
  REQUIRE(zero.checkpoints.size() == 1);
  CHECK(zero.checkpoints[0].episode == 0);

  cfg.budget_steps = 1200;  // 60 episodes of length 20
  cfg.ppo.rollout_steps = 200;
  cfg.checkpoint_interval = 25;
  rl::TeacherResult r = rl::train_teacher(env_cfg, &encoder, cfg, 1);
  REQUIRE(r.checkpoints.size() == 3);  // episodes 0, 25, 50
  CHECK(r.checkpoints[1].episode == 25);
  CHECK(r.checkpoints[2].episode == 50);
  CHECK(!r.curve.empty());
  CHECK(r.curve.back().steps == 1200);

  // Identical seed and config reproduce identical weights.
  rl::TeacherResult r2 = rl::train_teacher(env_cfg, &encoder, cfg, 1);
  for (size_t p = 0; p < r.policy.pi.params().size(); ++p)
    CHECK(r.policy.pi.params()[p].data == r2.policy.pi.params()[p].data);
  rl::TeacherResult r3 = rl::train_teacher(env_cfg, &encoder, cfg, 2);
  CHECK(r.policy.pi.params()[0].data != r3.policy.pi.params()[0].data);
}

TEST_CASE("policy save and load round-trips, fingerprint tracks weights") {
  rl::PolicyNets nets = rl::make_policy(rl::InputMode::Encoded, 16, 32, 55);
  const auto path = std::filesystem::temp_directory_path() / "policy_rt.bin";
  rl::save_policy(path, nets);
  rl::PolicyNets back = rl::load_policy(path);
  CHECK(back.mode == rl::InputMode::Encoded);
  CHECK(back.state_dim == 16);
  for (size_t p = 0; p < nets.pi.params().size(); ++p)
    CHECK(nets.pi.params()[p].data == back.pi.params()[p].data);
  CHECK(rl::policy_fingerprint(nets, nullptr) ==
        rl::policy_fingerprint(back, nullptr));
  back.pi.params()[0].data[0] += 1.0;
  CHECK(rl::policy_fingerprint(nets, nullptr) !=
        rl::policy_fingerprint(back, nullptr));
  std::filesystem::remove(path);
}

TEST_CASE("teacher policy greedy action follows the actor head") {
  srl::SrlModel encoder(srl::SrlSpec{8, 32, 5});
  rl::PolicyNets nets = rl::make_policy(rl::InputMode::Encoded, 8, 32, 7);
  rl::TeacherPolicy teacher(encoder, rl::PolicyNets{nets.pi, nets.vf,
                                                    nets.mode, nets.state_dim,
                                                    nets.render_size});
  arena::ArenaConfig cfg;
  cfg.task = arena::Task::TR;
  arena::Arena env(cfg);
  Tensor obs = env.reset(3);
  auto probs = teacher.action_probs(obs);
  double sum = 0.0;
  for (double p : probs) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(teacher.greedy_action(obs) == rl::argmax_action(probs));
  CHECK_THROWS_AS(
      rl::TeacherPolicy(std::nullopt,
                        rl::make_policy(rl::InputMode::Encoded, 8, 32, 7)),
      nn::ConfigError);
}
