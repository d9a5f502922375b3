#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "distill/distill.hpp"
#include "nn/rng.hpp"

using namespace discorl;
using nn::Tensor;
using Probs = std::array<double, 4>;

namespace {

rl::TeacherPolicy pixel_teacher(uint64_t seed, int render_size = 32) {
  return rl::TeacherPolicy(
      std::nullopt,
      rl::make_policy(rl::InputMode::RawPixels, 0, render_size, seed));
}

arena::ArenaConfig small_env(arena::Task task) {
  arena::ArenaConfig cfg;
  cfg.task = task;
  cfg.episode_len = 30;
  return cfg;
}

bool close_rel(double a, double b, double tol = 1e-4) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Synthetic dataset over random images with one-hot teacher labels.
distill::DistillDataset synthetic_dataset(size_t n, int render_size,
                                          uint64_t seed) {
  nn::Rng rng(seed);
  distill::DistillDataset ds;
  ds.seed = seed;
  for (size_t i = 0; i < n; ++i) {
    distill::DistillItem item;
    auto obs = std::make_shared<Tensor>(
        std::vector<size_t>{static_cast<size_t>(render_size),
                            static_cast<size_t>(render_size), 3});
    for (double& v : obs->data) v = rng.uniform();
    item.obs = std::move(obs);
    item.probs = {0.01, 0.01, 0.01, 0.01};
    item.probs[i % 4] = 0.97;
    item.episode = static_cast<uint32_t>(i / 4);  // 4 frames per episode
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace

TEST_CASE("squared-distance loss values and gradient") {
  Probs a = {1, 0, 0, 0}, b = {0, 1, 0, 0};
  CHECK(distill::loss_mse(a, b).loss == 2.0);
  CHECK(distill::loss_mse(a, a).loss == 0.0);
  Probs s = {0.4, 0.3, 0.2, 0.1}, t = {0.25, 0.25, 0.25, 0.25};
  distill::DistillLoss l = distill::loss_mse(s, t);
  const double h = 1e-6;
  for (int k = 0; k < 4; ++k) {
    Probs sp = s, sm = s;
    sp[k] += h;
    sm[k] -= h;
    const double fd =
        (distill::loss_mse(sp, t).loss - distill::loss_mse(sm, t).loss) /
        (2 * h);
    CHECK(close_rel(l.grad[k], fd));
  }
}

TEST_CASE("temperature sharpening of teacher distributions") {
  Probs p = {0.7, 0.1, 0.1, 0.1};
  Probs sharp = distill::temper_probs(p, 0.01);
  CHECK(sharp[0] > 0.999);
  Probs same = distill::temper_probs(p, 1.0);
  for (int k = 0; k < 4; ++k)
    CHECK(same[k] == doctest::Approx(p[k]).epsilon(1e-6));
  Probs flat = distill::temper_probs(p, 10.0);
  CHECK(flat[0] < p[0]);
  CHECK(flat[1] > p[1]);
  // Lower temperature concentrates more mass on the argmax.
  CHECK(distill::temper_probs(p, 0.5)[0] > p[0]);
  CHECK(distill::temper_probs(p, 0.1)[0] >
        distill::temper_probs(p, 0.5)[0]);
  CHECK_THROWS_AS(distill::temper_probs(p, 0.0), nn::ConfigError);
  CHECK_THROWS_AS(distill::temper_probs(p, -1.0), nn::ConfigError);
}

TEST_CASE("kl loss vanishes on itself and its gradient is exact") {
  nn::Rng rng(10);
  for (int t = 0; t < 20; ++t) {
    Tensor logits({4});
    for (double& v : logits.data) v = rng.uniform(-2.0, 2.0);
    Tensor p = nn::softmax(logits);
    Probs teacher = {p[0], p[1], p[2], p[3]};
    CHECK(std::abs(distill::loss_kl_tau(teacher, logits, 1.0).loss) < 1e-9);

    Probs other = {0.4, 0.3, 0.2, 0.1};
    distill::DistillLoss l = distill::loss_kl_tau(other, logits, 0.5);
    const double h = 1e-6;
    for (size_t k = 0; k < 4; ++k) {
      Tensor lp = logits, lm = logits;
      lp.data[k] += h;
      lm.data[k] -= h;
      const double fd = (distill::loss_kl_tau(other, lp, 0.5).loss -
                         distill::loss_kl_tau(other, lm, 0.5).loss) /
                        (2 * h);
      CHECK(close_rel(l.grad[k], fd));
    }
  }
}

TEST_CASE("loss names round-trip") {
  distill::LossChoice mse{distill::LossChoice::Kind::Mse, 0.0};
  CHECK(mse.name() == "mse");
  distill::LossChoice kl{distill::LossChoice::Kind::Kl, 0.01};
  CHECK(kl.name() == "kl_tau0.01");
  CHECK(distill::LossChoice::from_name("mse").kind ==
        distill::LossChoice::Kind::Mse);
  CHECK(distill::LossChoice::from_name("kl").kind ==
        distill::LossChoice::Kind::Kl);
  CHECK_THROWS_AS(distill::LossChoice::from_name("huber"), nn::ConfigError);
}

TEST_CASE("on-policy generation returns the exact count with fresh ids") {
  rl::TeacherPolicy teacher = pixel_teacher(3);
  distill::DistillDataset ds =
      distill::generate_onpolicy(small_env(arena::Task::TC), teacher, 100, 7);
  CHECK(ds.items.size() == 100);
  CHECK(ds.mode == distill::GenMode::OnPolicy);
  CHECK(ds.teacher_fingerprint == teacher.fingerprint());
  uint32_t max_ep = 0;
  for (const distill::DistillItem& item : ds.items) {
    max_ep = std::max(max_ep, item.episode);
    double sum = 0.0;
    for (double p : item.probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    // The stored soft labels are exactly the teacher's output on the frame.
    CHECK(item.probs == teacher.action_probs(*item.obs));
  }
  CHECK(max_ep + 1 >= 100 / 30);
}

TEST_CASE("grid generation enumerates the lattice, with chaser poses on TE") {
  rl::TeacherPolicy teacher = pixel_teacher(5);
  distill::DistillDataset tr = distill::generate_gridwalker(
      small_env(arena::Task::TR), teacher, 0.25, 1);
  CHECK(tr.items.size() == 81);
  distill::DistillDataset te = distill::generate_gridwalker(
      small_env(arena::Task::TE), teacher, 0.25, 1);
  CHECK(te.items.size() == 81 * 9);
  // One frame per pose, each its own episode.
  CHECK(tr.items.front().episode == 0);
  CHECK(tr.items.back().episode == 80);
  CHECK_THROWS_AS(distill::generate_gridwalker(small_env(arena::Task::TE),
                                               teacher, 0.001, 1),
                  nn::ConfigError);
}

TEST_CASE("random-walker generation annotates with the teacher") {
  rl::TeacherPolicy teacher = pixel_teacher(9);
  distill::DistillDataset ds = distill::generate_randomwalker(
      small_env(arena::Task::TR), teacher, 64, 11);
  CHECK(ds.items.size() == 64);
  CHECK(ds.mode == distill::GenMode::RandomWalker);
  for (const distill::DistillItem& item : ds.items)
    CHECK(item.probs == teacher.action_probs(*item.obs));
}

TEST_CASE("episode split is disjoint and respects the fraction") {
  distill::DistillDataset ds = synthetic_dataset(40, 16, 21);  // 10 episodes
  auto [train, val] = distill::split_by_episode(ds, 0.1, 5);
  CHECK(train.items.size() + val.items.size() == 40);
  CHECK(val.items.size() == 4);  // one episode of four frames
  std::set<uint32_t> train_eps, val_eps;
  for (const auto& item : train.items) train_eps.insert(item.episode);
  for (const auto& item : val.items) val_eps.insert(item.episode);
  for (uint32_t e : val_eps) CHECK(train_eps.count(e) == 0);
  // Same seed reproduces the same split.
  auto [train2, val2] = distill::split_by_episode(ds, 0.1, 5);
  CHECK(val2.items.size() == val.items.size());
  CHECK(val2.items.front().episode == val.items.front().episode);
}

TEST_CASE("student memorizes a small dataset") {
  distill::DistillDataset ds = synthetic_dataset(16, 16, 33);
  distill::StudentTrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 4;
  cfg.lr = 3e-3;
  cfg.val_frac = 0.0;
  cfg.loss = {distill::LossChoice::Kind::Kl, 1.0};
  cfg.seed = 2;
  distill::StudentTrainStats stats;
  distill::StudentPolicy student = distill::train_student({ds}, cfg, &stats);
  REQUIRE(!stats.train_loss.empty());
  CHECK(stats.train_loss.back() < stats.train_loss.front());
  int correct = 0;
  for (const distill::DistillItem& item : ds.items) {
    const int want = static_cast<int>(
        std::max_element(item.probs.begin(), item.probs.end()) -
        item.probs.begin());
    if (student.greedy_action(*item.obs) == want) ++correct;
  }
  CHECK(correct >= 13);
}

TEST_CASE("early stopping keeps the best-validation weights") {
  distill::DistillDataset ds = synthetic_dataset(40, 16, 44);
  distill::StudentTrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 8;
  cfg.val_frac = 0.25;
  cfg.loss = {distill::LossChoice::Kind::Kl, 1.0};
  cfg.seed = 3;
  distill::StudentTrainStats stats;
  distill::train_student({ds}, cfg, &stats);
  REQUIRE(stats.best_epoch >= 0);
  REQUIRE(stats.val_loss.size() >= static_cast<size_t>(stats.best_epoch + 1));
  // The recorded best epoch has the smallest validation loss seen.
  for (double v : stats.val_loss)
    CHECK(stats.val_loss[stats.best_epoch] <= v + 1e-12);
  // Stopped at most one epoch past the best one.
  CHECK(stats.val_loss.size() <= static_cast<size_t>(stats.best_epoch) + 2);
}

TEST_CASE("training rejects empty input") {
  distill::StudentTrainConfig cfg;
  CHECK_THROWS_AS(distill::train_student({}, cfg), nn::ConfigError);
  distill::DistillDataset empty;
  CHECK_THROWS_AS(distill::train_student({empty}, cfg), nn::ConfigError);
}

TEST_CASE("dataset save and load preserves every frame and label") {
  rl::TeacherPolicy teacher = pixel_teacher(13);
  distill::DistillDataset ds = distill::generate_onpolicy(
      small_env(arena::Task::TE), teacher, 50, 17);
  const auto path = std::filesystem::temp_directory_path() / "dpi_rt.bin";
  distill::save_distill_dataset(path, ds);
  distill::DistillDataset back = distill::load_distill_dataset(path);
  REQUIRE(back.items.size() == 50);
  CHECK(back.task == arena::Task::TE);
  CHECK(back.mode == distill::GenMode::OnPolicy);
  CHECK(back.teacher_fingerprint == ds.teacher_fingerprint);
  CHECK(back.seed == 17);
  for (size_t i = 0; i < 50; ++i) {
    CHECK(back.items[i].obs->data == ds.items[i].obs->data);
    CHECK(back.items[i].probs == ds.items[i].probs);
    CHECK(back.items[i].episode == ds.items[i].episode);
  }
  std::filesystem::remove(path);
}

TEST_CASE("student save and load round-trips weights and task list") {
  distill::StudentPolicy s = distill::make_student(16, 5);
  s.tasks = {arena::Task::TR, arena::Task::TC};
  const auto path = std::filesystem::temp_directory_path() / "student_rt.bin";
  distill::save_student(path, s);
  distill::StudentPolicy back = distill::load_student(path);
  CHECK(back.render_size == 16);
  CHECK(back.tasks == s.tasks);
  for (size_t p = 0; p < s.net.params().size(); ++p)
    CHECK(s.net.params()[p].data == back.net.params()[p].data);
  std::filesystem::remove(path);
}

TEST_CASE("loss comparison table covers all losses with paper references") {
  auto gen = [](arena::Task task, uint64_t seed) {
    distill::DistillDataset ds = synthetic_dataset(16, 16, seed);
    ds.task = task;
    return ds;
  };
  auto evaluator = [](const distill::StudentPolicy&, arena::Task) {
    return 0.5;
  };
  distill::StudentTrainConfig base;
  base.epochs = 1;
  base.batch_size = 8;
  std::vector<distill::LossChoice> losses = {
      {distill::LossChoice::Kind::Mse, 0.0},
      {distill::LossChoice::Kind::Kl, 1.0},
      {distill::LossChoice::Kind::Kl, 0.1},
      {distill::LossChoice::Kind::Kl, 0.01}};
  auto rows = distill::compare_losses(gen, {arena::Task::TR}, losses, {1, 2},
                                      base, evaluator);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].loss_name == "mse");
  CHECK(rows[0].paper_reference == 0.71);
  CHECK(rows[1].paper_reference == 0.76);
  CHECK(rows[2].paper_reference == 0.68);
  CHECK(rows[3].paper_reference == 0.77);
  for (const auto& r : rows) {
    CHECK(r.mean == doctest::Approx(0.5));
    CHECK(r.stddev == doctest::Approx(0.0));
  }
}
