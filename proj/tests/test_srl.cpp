#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "arena/arena.hpp"
#include "nn/rng.hpp"
#include "srl/srl.hpp"

using namespace discorl;
using nn::Tensor;

namespace {

arena::ArenaConfig small_env() {
  arena::ArenaConfig cfg;
  cfg.task = arena::Task::TR;
  cfg.episode_len = 50;
  return cfg;
}

}  // namespace

TEST_CASE("random collection yields the exact sample count and chains obs") {
  srl::SrlDataset ds = srl::collect_random_dataset(small_env(), 120, 5);
  CHECK(ds.transitions.size() == 120);
  int shared = 0;
  for (size_t i = 0; i + 1 < ds.transitions.size(); ++i)
    if (ds.transitions[i].next_obs == ds.transitions[i + 1].obs) ++shared;
  // All consecutive pairs share memory except across episode resets.
  CHECK(shared >= 117);
  for (const srl::SrlTransition& tr : ds.transitions) {
    CHECK(tr.action >= 0);
    CHECK(tr.action < 4);
    CHECK((tr.obs->shape == std::vector<size_t>{32, 32, 3}));
  }
}

TEST_CASE("random collection is deterministic and roughly uniform") {
  srl::SrlDataset a = srl::collect_random_dataset(small_env(), 200, 9);
  srl::SrlDataset b = srl::collect_random_dataset(small_env(), 200, 9);
  for (size_t i = 0; i < a.transitions.size(); ++i) {
    CHECK(a.transitions[i].action == b.transitions[i].action);
    CHECK(a.transitions[i].obs->data == b.transitions[i].obs->data);
  }
  srl::SrlDataset big = srl::collect_random_dataset(small_env(), 4000, 11);
  std::array<int, 4> counts{};
  for (const auto& tr : big.transitions) ++counts[tr.action];
  for (int c : counts) {
    // Within 5 percentage points of the uniform expectation.
    CHECK(c > 1000 - 200);
    CHECK(c < 1000 + 200);
  }
}

TEST_CASE("hwc to chw transposition moves the right values") {
  Tensor hwc({2, 2, 3});
  for (size_t i = 0; i < hwc.data.size(); ++i)
    hwc.data[i] = static_cast<double>(i);
  Tensor chw = srl::obs_to_chw(hwc);
  CHECK((chw.shape == std::vector<size_t>{3, 2, 2}));
  // Pixel (r=1, c=0), channel 2: hwc index (1*2+0)*3+2 = 8.
  CHECK(chw.data[2 * 4 + 1 * 2 + 0] == 8.0);
  // Channel 0 plane is the every-third sequence 0,3,6,9.
  CHECK(chw.data[0] == 0.0);
  CHECK(chw.data[1] == 3.0);
  CHECK(chw.data[2] == 6.0);
  CHECK(chw.data[3] == 9.0);
  Tensor bad({2, 2, 2});
  CHECK_THROWS_AS(srl::obs_to_chw(bad), nn::UsageError);
}

TEST_CASE("encoding is deterministic with the configured dimension") {
  srl::SrlModel model(srl::SrlSpec{16, 32, 77});
  srl::SrlDataset ds = srl::collect_random_dataset(small_env(), 3, 2);
  Tensor s1 = model.encode(*ds.transitions[0].obs);
  Tensor s2 = model.encode(*ds.transitions[0].obs);
  CHECK(s1.data == s2.data);
  CHECK(s1.data.size() == 16);
  srl::SrlModel model8(srl::SrlSpec{8, 32, 77});
  CHECK(model8.encode(*ds.transitions[0].obs).data.size() == 8);
}

TEST_CASE("training reduces the combined loss and is deterministic") {
  srl::SrlDataset ds = srl::collect_random_dataset(small_env(), 256, 31);
  srl::SrlTrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 5;
  srl::SrlModel m1(srl::SrlSpec{16, 32, 41});
  srl::SrlTrainResult r1 = srl::train_srl(m1, ds.transitions, cfg);
  REQUIRE(r1.epoch_total.size() == 3);
  CHECK(r1.epoch_total.back() < r1.epoch_total.front());
  CHECK(r1.epoch_rec.back() < r1.epoch_rec.front());

  srl::SrlModel m2(srl::SrlSpec{16, 32, 41});
  srl::SrlTrainResult r2 = srl::train_srl(m2, ds.transitions, cfg);
  CHECK(r1.epoch_total == r2.epoch_total);
  for (size_t p = 0; p < m1.encoder().params().size(); ++p)
    CHECK(m1.encoder().params()[p].data == m2.encoder().params()[p].data);
}

TEST_CASE("training edge cases: zero epochs and empty data") {
  srl::SrlModel model(srl::SrlSpec{16, 32, 1});
  srl::SrlTrainConfig cfg;
  cfg.epochs = 0;
  std::vector<srl::SrlTransition> empty;
  CHECK(srl::train_srl(model, empty, cfg).epoch_total.empty());
  cfg.epochs = 1;
  CHECK_THROWS_AS(srl::train_srl(model, empty, cfg), nn::ConfigError);
}

TEST_CASE("inverse head learns actions better than chance") {
  srl::SrlDataset ds = srl::collect_random_dataset(small_env(), 1024, 13);
  srl::SrlModel model(srl::SrlSpec{16, 32, 21});
  srl::SrlTrainConfig cfg;
  cfg.epochs = 8;
  cfg.seed = 3;
  srl::train_srl(model, ds.transitions, cfg);
  // Uniform guessing sits at 0.25.
  CHECK(srl::inverse_accuracy(model, ds.transitions) > 0.3);
}

TEST_CASE("model save and load round-trips every parameter") {
  srl::SrlModel model(srl::SrlSpec{12, 32, 3});
  const auto path = std::filesystem::temp_directory_path() / "srl_rt.bin";
  srl::save_srl_model(path, model);
  srl::SrlModel back = srl::load_srl_model(path);
  CHECK(back.state_dim() == 12);
  for (size_t p = 0; p < model.encoder().params().size(); ++p)
    CHECK(model.encoder().params()[p].data == back.encoder().params()[p].data);
  for (size_t p = 0; p < model.inverse().params().size(); ++p)
    CHECK(model.inverse().params()[p].data == back.inverse().params()[p].data);
  srl::SrlDataset ds = srl::collect_random_dataset(small_env(), 4, 2);
  CHECK(model.encode(*ds.transitions[0].obs).data ==
        back.encode(*ds.transitions[0].obs).data);
  std::filesystem::remove(path);
}

TEST_CASE("dataset save interns shared observations") {
  srl::SrlDataset ds = srl::collect_random_dataset(small_env(), 100, 17);
  const auto path = std::filesystem::temp_directory_path() / "srl_ds.bin";
  srl::save_srl_dataset(path, ds);
  srl::SrlDataset back = srl::load_srl_dataset(path);
  REQUIRE(back.transitions.size() == 100);
  CHECK(back.task == ds.task);
  for (size_t i = 0; i < 100; ++i) {
    CHECK(back.transitions[i].action == ds.transitions[i].action);
    CHECK(back.transitions[i].obs->data == ds.transitions[i].obs->data);
    CHECK(back.transitions[i].next_obs->data ==
          ds.transitions[i].next_obs->data);
  }
  // Interned: consecutive transitions share observation objects again.
  CHECK(back.transitions[0].next_obs == back.transitions[1].obs);
  // The file stores each frame once: about n+episodes frames, not 2n.
  const auto bytes = std::filesystem::file_size(path);
  const auto frame_bytes = 32 * 32 * 3 * sizeof(double);
  CHECK(bytes < 110 * frame_bytes);
  std::filesystem::remove(path);
}
