#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill/distill.hpp"
#include "pipeline/config.hpp"
#include "pipeline/evaluate.hpp"

namespace discorl::pipeline {

// Artifact file names inside an output directory.
std::string srl_model_file(arena::Task t);
std::string teacher_file(arena::Task t);
std::string dataset_file(arena::Task t, const std::string& gen_mode);
inline const char* kStudentFile = "student.bin";

// Stage bookkeeping stored as manifest.json in the output directory.
// Records which stages completed (with content hashes of their artifacts)
// so an interrupted run resumes instead of recomputing, and which task
// environments have been retired and may no longer be used for training.
class Manifest {
 public:
  explicit Manifest(const std::filesystem::path& dir);

  bool done(const std::string& stage) const;
  void mark_done(const std::string& stage,
                 const std::vector<std::filesystem::path>& artifacts);
  uint64_t artifact_hash(const std::string& stage,
                         const std::string& filename) const;

  void close_env(arena::Task t);
  bool env_closed(arena::Task t) const;
  // Throws when a training stage tries to touch a retired environment.
  void require_env_open(arena::Task t) const;

  void note(const std::string& key, const nlohmann::json& value);
  const nlohmann::json& raw() const { return j_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void save() const;

  std::filesystem::path path_;
  nlohmann::json j_;
};

// Single-stage entry points backing the CLI verbs. Each reads its inputs
// from cfg.out_dir and writes its artifacts there.
void run_srl_train(const PipelineConfig& cfg, arena::Task task);
void run_rl_train(const PipelineConfig& cfg, arena::Task task);
std::filesystem::path run_gen_distill(const PipelineConfig& cfg,
                                      arena::Task task,
                                      const std::string& gen_mode);
// Empty dataset list means every dataset artifact found in out_dir.
distill::StudentPolicy run_distill(
    const PipelineConfig& cfg,
    std::vector<std::filesystem::path> dataset_paths);
eval::EvalReport run_eval(const PipelineConfig& cfg,
                          const std::filesystem::path& policy_path,
                          arena::Task task);

struct PipelineResult {
  std::filesystem::path student_path;
  std::vector<std::filesystem::path> dataset_paths;
  // Student scores after the final distillation stage, one per task.
  std::vector<eval::EvalReport> final_reports;
};

// Full sequential run: per task collect random data, train the state
// encoder, train the PPO teacher, generate the distillation dataset, then
// retire the environment and delete the encoder and teacher weights. After
// each task a fresh student is distilled from all datasets so far and
// evaluated on every task seen. Resumable through the manifest.
PipelineResult run_discorl(const PipelineConfig& cfg);

struct FinetuneSeedResult {
  uint64_t seed = 0;
  double tr_before = 0.0;   // teacher on task 1 before fine-tuning
  double tr_after = 0.0;    // same weights on task 1 after fine-tuning on task 2
  double tc_after = 0.0;
  double tr_distilled = 0.0;  // student distilled from both teachers, task 1
  double tc_distilled = 0.0;
};

struct FinetuneResult {
  std::vector<FinetuneSeedResult> per_seed;
  std::filesystem::path curves_csv;
  std::filesystem::path summary_csv;
  double mean_tr_before = 0.0;
  double mean_tr_after = 0.0;
  double mean_tr_distilled = 0.0;
};

// Catastrophic-forgetting baseline on the first two configured tasks:
// fine-tunes the first teacher on the second task (shared frozen encoder)
// while tracking both scores, against a distilled student trained from the
// datasets of both teachers.
FinetuneResult run_finetune_baseline(const PipelineConfig& cfg);

struct SweepRow {
  uint64_t checkpoint_episode = 0;
  double teacher_norm = 0.0;
  uint64_t seed = 0;
  double student_norm = 0.0;
};

// Distills a student from datasets generated at successive teacher
// checkpoints on the circling task; shows student quality tracking teacher
// quality. Writes sweep.csv.
std::vector<SweepRow> run_checkpoint_sweep(const PipelineConfig& cfg);

// Distills students under each candidate loss and tabulates normalized
// scores against the published reference values. Writes loss_table.csv.
std::vector<distill::LossComparisonRow> run_compare_losses(
    const PipelineConfig& cfg);

struct MemoryReport {
  uint64_t dataset_bytes = 0;
  uint64_t srl_bytes = 0;
  uint64_t teacher_bytes = 0;
  uint64_t student_bytes = 0;
  uint64_t other_bytes = 0;
  uint64_t total() const {
    return dataset_bytes + srl_bytes + teacher_bytes + student_bytes +
           other_bytes;
  }
};

// Byte census of the artifact classes in a directory, by filename pattern.
MemoryReport memory_report(const std::filesystem::path& dir);
void write_memory_report_csv(const std::filesystem::path& path,
                             const MemoryReport& r);

}  // namespace discorl::pipeline
