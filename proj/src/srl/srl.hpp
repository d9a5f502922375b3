#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "arena/arena.hpp"
#include "nn/network.hpp"

namespace discorl::srl {

struct SrlTransition {
  std::shared_ptr<nn::Tensor> obs;       // o_t, HWC
  std::shared_ptr<nn::Tensor> next_obs;  // o_{t+1}
  int action = 0;
};

struct SrlDataset {
  std::vector<SrlTransition> transitions;
  arena::Task task = arena::Task::TR;
  uint64_t seed = 0;
};

// Random-policy transitions, sharing consecutive observations in memory.
SrlDataset collect_random_dataset(const arena::ArenaConfig& cfg,
                                  size_t n_samples, uint64_t seed);

void save_srl_dataset(const std::filesystem::path& path, const SrlDataset& ds);
SrlDataset load_srl_dataset(const std::filesystem::path& path);

// HWC [0,1] image to the CHW layout the conv layers use.
nn::Tensor obs_to_chw(const nn::Tensor& obs_hwc);

struct SrlSpec {
  int state_dim = 16;
  int render_size = 32;
  uint64_t seed = 0;
};

// Autoencoder + inverse dynamics model sharing one encoder.
class SrlModel {
 public:
  SrlModel() = default;
  explicit SrlModel(const SrlSpec& spec);

  // Deterministic d-dimensional state for an HWC observation.
  nn::Tensor encode(const nn::Tensor& obs_hwc) const;

  int state_dim() const { return spec_.state_dim; }
  const SrlSpec& spec() const { return spec_; }

  nn::Network& encoder() { return encoder_; }
  nn::Network& decoder() { return decoder_; }
  nn::Network& inverse() { return inverse_; }
  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& decoder() const { return decoder_; }
  const nn::Network& inverse() const { return inverse_; }

 private:
  SrlSpec spec_;
  nn::Network encoder_, decoder_, inverse_;
};

struct SrlTrainConfig {
  int epochs = 25;
  int batch_size = 32;
  double w_rec = 1.0;
  // The reconstruction term dominates early (the robot covers a handful of
  // pixels); the inverse term needs this much weight to shape the state.
  double w_inv = 10.0;
  double lr = 1e-3;
  uint64_t seed = 0;
};

struct SrlTrainResult {
  std::vector<double> epoch_total;
  std::vector<double> epoch_rec;
  std::vector<double> epoch_inv;
};

SrlTrainResult train_srl(SrlModel& model,
                         const std::vector<SrlTransition>& transitions,
                         const SrlTrainConfig& cfg);

// Fraction of transitions whose action the inverse head predicts (argmax).
double inverse_accuracy(const SrlModel& model,
                        const std::vector<SrlTransition>& transitions);

void save_srl_model(const std::filesystem::path& path, const SrlModel& model);
SrlModel load_srl_model(const std::filesystem::path& path);

}  // namespace discorl::srl
