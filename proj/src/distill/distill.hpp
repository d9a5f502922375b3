#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "arena/arena.hpp"
#include "nn/network.hpp"
#include "rl/ppo.hpp"

namespace discorl::distill {

enum class GenMode { OnPolicy, GridWalker, RandomWalker };
enum class SplitTag { All, Train, Val };

std::string gen_mode_name(GenMode m);
GenMode gen_mode_from_name(const std::string& s);

struct DistillItem {
  std::shared_ptr<nn::Tensor> obs;  // HWC
  std::array<double, arena::kNumActions> probs;
  uint32_t episode = 0;
};

// The continual memory: observations soft-labelled by a teacher. Immutable
// once generated.
struct DistillDataset {
  std::vector<DistillItem> items;
  arena::Task task = arena::Task::TR;
  GenMode mode = GenMode::OnPolicy;
  uint64_t teacher_fingerprint = 0;
  uint64_t seed = 0;
  SplitTag split = SplitTag::All;
};

// Teacher-driven episodes from random starts; among the candidate episodes
// the highest reward-per-step ones are kept until n_samples is reached.
// TR episodes end after 10 target contacts.
DistillDataset generate_onpolicy(const arena::ArenaConfig& cfg,
                                 const rl::TeacherPolicy& teacher,
                                 size_t n_samples, uint64_t seed);

// Teacher annotations on an exhaustive lattice of robot positions
// (and a coarse 3x3 chaser lattice for TE).
DistillDataset generate_gridwalker(const arena::ArenaConfig& cfg,
                                   const rl::TeacherPolicy& teacher,
                                   double stride, uint64_t seed);

// Lower-bound baseline: trajectories from an untrained raw-pixel policy,
// annotated by the teacher.
DistillDataset generate_randomwalker(const arena::ArenaConfig& cfg,
                                     const rl::TeacherPolicy& teacher,
                                     size_t n_samples, uint64_t seed);

// Disjoint 90/10-style split by episode, not by frame.
std::pair<DistillDataset, DistillDataset> split_by_episode(
    const DistillDataset& ds, double val_frac, uint64_t seed);

void save_distill_dataset(const std::filesystem::path& path,
                          const DistillDataset& ds);
DistillDataset load_distill_dataset(const std::filesystem::path& path);

struct DistillLoss {
  double loss = 0.0;
  nn::Tensor grad;
};

// Squared L2 distance between two probability 4-vectors; gradient w.r.t.
// the student probabilities.
DistillLoss loss_mse(const std::array<double, arena::kNumActions>& student,
                     const std::array<double, arena::kNumActions>& teacher);

// KL(softmax(ln(p+1e-12)/tau) || softmax(q)); gradient w.r.t. the student
// logits q. tau=1 reduces to plain KL against the stored probabilities.
DistillLoss loss_kl_tau(const std::array<double, arena::kNumActions>& teacher_probs,
                        const nn::Tensor& student_logits, double tau);

// Temperature-sharpened teacher distribution softmax(ln(p+1e-12)/tau).
std::array<double, arena::kNumActions> temper_probs(
    const std::array<double, arena::kNumActions>& probs, double tau);

struct LossChoice {
  enum class Kind { Mse, Kl } kind = Kind::Kl;
  double tau = 0.01;
  std::string name() const;
  static LossChoice from_name(const std::string& s);  // "mse", "kl", tau set separately
};

// Raw-pixel student; no encoder, no task label.
struct StudentPolicy {
  nn::Network net;  // CHW observation -> 4 logits
  std::vector<arena::Task> tasks;
  int render_size = 32;

  std::array<double, arena::kNumActions> action_probs(
      const nn::Tensor& obs_hwc) const;
  int greedy_action(const nn::Tensor& obs_hwc) const;
};

StudentPolicy make_student(int render_size, uint64_t seed);
void save_student(const std::filesystem::path& path, const StudentPolicy& s);
StudentPolicy load_student(const std::filesystem::path& path);

struct StudentTrainConfig {
  int epochs = 4;
  int batch_size = 32;
  double lr = 1e-3;
  double val_frac = 0.1;
  LossChoice loss;
  uint64_t seed = 0;
};

struct StudentTrainStats {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
};

// Merges the train splits of all datasets, trains for at most
// cfg.epochs epochs (stopping early when validation loss plateaus) and
// returns the weights with the lowest validation loss.
StudentPolicy train_student(const std::vector<DistillDataset>& datasets,
                            const StudentTrainConfig& cfg,
                            StudentTrainStats* stats = nullptr);

struct LossComparisonRow {
  std::string loss_name;
  double mean = 0.0;
  double stddev = 0.0;
  double paper_reference = 0.0;
};

// Table-style comparison: one 3-task student per (loss, seed); the evaluator
// maps a student and task to a normalized score.
using StudentEvaluator =
    std::function<double(const StudentPolicy&, arena::Task)>;

std::vector<LossComparisonRow> compare_losses(
    const std::function<DistillDataset(arena::Task, uint64_t seed)>& gen,
    const std::vector<arena::Task>& tasks,
    const std::vector<LossChoice>& losses, const std::vector<uint64_t>& seeds,
    const StudentTrainConfig& base_cfg, const StudentEvaluator& evaluate);

void write_loss_table_csv(const std::filesystem::path& path,
                          const std::vector<LossComparisonRow>& rows);

}  // namespace discorl::distill
