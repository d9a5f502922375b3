#include "pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "io/container.hpp"
#include "nn/rng.hpp"
#include "rl/ppo.hpp"
#include "srl/srl.hpp"

namespace discorl::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string srl_model_file(arena::Task t) {
  return "srl_" + arena::task_name(t) + ".bin";
}

std::string teacher_file(arena::Task t) {
  return "teacher_" + arena::task_name(t) + ".bin";
}

std::string dataset_file(arena::Task t, const std::string& gen_mode) {
  std::string name = "dpi_" + arena::task_name(t);
  if (gen_mode != "on_policy") name += "_" + gen_mode;
  return name + ".bin";
}

// ---------------------------------------------------------------------------
// Manifest

Manifest::Manifest(const fs::path& dir) : path_(dir / "manifest.json") {
  if (fs::exists(path_)) {
    std::ifstream f(path_);
    try {
      f >> j_;
    } catch (const json::exception& e) {
      throw nn::IoError("corrupt manifest: " + std::string(e.what()));
    }
  } else {
    j_ = json{{"version", 1},
              {"stages", json::object()},
              {"env_closed", json::array()},
              {"notes", json::object()}};
    save();
  }
}

bool Manifest::done(const std::string& stage) const {
  const json& stages = j_.at("stages");
  return stages.contains(stage) &&
         stages.at(stage).at("status").get<std::string>() == "done";
}

void Manifest::mark_done(const std::string& stage,
                         const std::vector<fs::path>& artifacts) {
  json art = json::object();
  for (const fs::path& p : artifacts) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(io::hash_file(p)));
    art[p.filename().string()] = std::string(buf);
  }
  j_["stages"][stage] = json{{"status", "done"}, {"artifacts", art}};
  save();
}

uint64_t Manifest::artifact_hash(const std::string& stage,
                                 const std::string& filename) const {
  const json& stages = j_.at("stages");
  if (!stages.contains(stage))
    throw nn::UsageError("no such stage in manifest: " + stage);
  const json& art = stages.at(stage).at("artifacts");
  if (!art.contains(filename))
    throw nn::UsageError("no such artifact in stage " + stage + ": " +
                         filename);
  return std::stoull(art.at(filename).get<std::string>(), nullptr, 16);
}

void Manifest::close_env(arena::Task t) {
  if (!env_closed(t)) {
    j_["env_closed"].push_back(arena::task_name(t));
    save();
  }
}

bool Manifest::env_closed(arena::Task t) const {
  for (const auto& e : j_.at("env_closed"))
    if (e.get<std::string>() == arena::task_name(t)) return true;
  return false;
}

void Manifest::require_env_open(arena::Task t) const {
  if (env_closed(t))
    throw nn::StageError("environment for task " + arena::task_name(t) +
                         " was retired; training stages may not revisit it");
}

void Manifest::note(const std::string& key, const json& value) {
  j_["notes"][key] = value;
  save();
}

void Manifest::save() const {
  io::atomic_write(path_, j_.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Stage helpers

namespace {

// Per-stage seed streams, derived from the root seed so runs are
// reproducible end to end and resumable stage by stage.
uint64_t stage_seed(const PipelineConfig& cfg, int base, int offset) {
  return nn::derive_seed(cfg.seed, static_cast<uint64_t>(base + offset));
}

int task_int(arena::Task t) { return static_cast<int>(t); }

void ensure_out_dir(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::string>& rows) {
  std::ostringstream ss;
  ss << header << '\n';
  for (const std::string& r : rows) ss << r << '\n';
  io::atomic_write(path, ss.str());
}

struct SrlArtifacts {
  srl::SrlModel model;
  fs::path model_path;
};

SrlArtifacts srl_stage(const PipelineConfig& cfg, arena::Task task) {
  const uint64_t s_collect = stage_seed(cfg, 100, task_int(task));
  const uint64_t s_model = stage_seed(cfg, 110, task_int(task));
  const uint64_t s_train = stage_seed(cfg, 120, task_int(task));

  arena::ArenaConfig env_cfg = cfg.arena_for(task);
  srl::SrlDataset ds = srl::collect_random_dataset(env_cfg, cfg.srl.samples,
                                                   s_collect);
  srl::SrlModel model(
      srl::SrlSpec{cfg.srl.state_dim, cfg.arena.render_size, s_model});
  srl::SrlTrainConfig tc;
  tc.epochs = cfg.srl.epochs;
  tc.batch_size = cfg.srl.batch_size;
  tc.w_rec = cfg.srl.w_rec;
  tc.w_inv = cfg.srl.w_inv;
  tc.lr = cfg.srl.lr;
  tc.seed = s_train;
  srl::SrlTrainResult tr = srl::train_srl(model, ds.transitions, tc);

  fs::path out(cfg.out_dir);
  fs::path model_path = out / srl_model_file(task);
  srl::save_srl_model(model_path, model);
  if (cfg.srl.save_dataset)
    srl::save_srl_dataset(out / ("srl_dataset_" + arena::task_name(task) +
                                 ".bin"),
                          ds);
  std::vector<std::string> rows;
  for (size_t e = 0; e < tr.epoch_total.size(); ++e) {
    std::ostringstream r;
    r << e << ',' << tr.epoch_rec[e] << ',' << tr.epoch_inv[e] << ','
      << tr.epoch_total[e];
    rows.push_back(r.str());
  }
  write_csv(out / ("srl_" + arena::task_name(task) + "_loss.csv"),
            "epoch,reconstruction,inverse,total", rows);
  return {std::move(model), model_path};
}

rl::InputMode input_mode_of(const PipelineConfig& cfg) {
  return cfg.rl.input_mode == "encoded" ? rl::InputMode::Encoded
                                        : rl::InputMode::RawPixels;
}

srl::SrlModel load_srl_or_fail(const PipelineConfig& cfg, arena::Task task) {
  fs::path p = fs::path(cfg.out_dir) / srl_model_file(task);
  if (!fs::exists(p))
    throw nn::ConfigError("missing encoder model " + p.string() +
                          "; run srl-train for this task first");
  return srl::load_srl_model(p);
}

rl::TeacherResult rl_stage(const PipelineConfig& cfg, arena::Task task,
                           const srl::SrlModel* encoder,
                           bool keep_checkpoints) {
  rl::TeacherTrainConfig tcfg;
  tcfg.budget_steps = cfg.rl.budget_steps;
  tcfg.ppo = cfg.ppo_for(task);
  tcfg.mode = input_mode_of(cfg);
  tcfg.checkpoint_interval = cfg.rl.checkpoint_interval;
  tcfg.keep_checkpoints = keep_checkpoints;
  tcfg.selection_interval = cfg.rl.selection_interval_steps;
  tcfg.selection_episodes = cfg.rl.selection_episodes;
  tcfg.greedy_frac_final = cfg.rl.greedy_frac_final;
  tcfg.chaser_curriculum_start = cfg.rl.chaser_curriculum_start;
  return rl::train_teacher(cfg.arena_for(task), encoder, tcfg,
                           stage_seed(cfg, 200, task_int(task)));
}

void save_rl_artifacts(const PipelineConfig& cfg, arena::Task task,
                       const rl::TeacherResult& result) {
  fs::path out(cfg.out_dir);
  rl::save_policy(out / teacher_file(task), result.policy);
  rl::write_curve_csv(out / ("rl_" + arena::task_name(task) + "_curve.csv"),
                      result.curve);
  if (cfg.rl.save_checkpoints)
    for (const rl::Checkpoint& c : result.checkpoints)
      rl::save_policy(out / ("teacher_" + arena::task_name(task) + "_ep" +
                             std::to_string(c.episode) + ".bin"),
                      c.policy);
}

rl::TeacherPolicy load_teacher(const PipelineConfig& cfg, arena::Task task,
                               const fs::path& policy_path) {
  rl::PolicyNets nets = rl::load_policy(policy_path);
  std::optional<srl::SrlModel> encoder;
  if (nets.mode == rl::InputMode::Encoded)
    encoder = load_srl_or_fail(cfg, task);
  return rl::TeacherPolicy(std::move(encoder), std::move(nets));
}

distill::DistillDataset generate_dataset(const PipelineConfig& cfg,
                                         arena::Task task,
                                         const rl::TeacherPolicy& teacher,
                                         const std::string& gen_mode,
                                         uint64_t seed) {
  arena::ArenaConfig env_cfg = cfg.arena_for(task);
  if (gen_mode == "on_policy")
    return distill::generate_onpolicy(env_cfg, teacher,
                                      cfg.distill.samples_per_task, seed);
  if (gen_mode == "grid_walker")
    return distill::generate_gridwalker(env_cfg, teacher,
                                        cfg.distill.grid_stride, seed);
  if (gen_mode == "random_walker")
    return distill::generate_randomwalker(env_cfg, teacher,
                                          cfg.distill.samples_per_task, seed);
  throw nn::ConfigError("unknown gen mode: " + gen_mode);
}

distill::StudentTrainConfig student_cfg(const PipelineConfig& cfg,
                                        uint64_t seed) {
  distill::StudentTrainConfig sc;
  sc.epochs = cfg.distill.epochs;
  sc.batch_size = cfg.distill.batch_size;
  sc.lr = cfg.distill.lr;
  sc.val_frac = cfg.distill.val_frac;
  sc.loss.kind = cfg.distill.loss == "mse" ? distill::LossChoice::Kind::Mse
                                           : distill::LossChoice::Kind::Kl;
  sc.loss.tau = cfg.distill.tau;
  sc.seed = seed;
  return sc;
}

double normalized_mean(const eval::Agent& agent, const PipelineConfig& cfg,
                       arena::Task task, int episodes) {
  return eval::evaluate(agent, cfg.arena_for(task), episodes,
                        stage_seed(cfg, 500, task_int(task)))
      .mean_norm;
}

}  // namespace

// ---------------------------------------------------------------------------
// Single-stage verbs

void run_srl_train(const PipelineConfig& cfg, arena::Task task) {
  cfg.validate();
  ensure_out_dir(cfg);
  srl_stage(cfg, task);
}

void run_rl_train(const PipelineConfig& cfg, arena::Task task) {
  cfg.validate();
  ensure_out_dir(cfg);
  std::optional<srl::SrlModel> encoder;
  if (input_mode_of(cfg) == rl::InputMode::Encoded)
    encoder = load_srl_or_fail(cfg, task);
  rl::TeacherResult result =
      rl_stage(cfg, task, encoder ? &*encoder : nullptr,
               cfg.rl.save_checkpoints);
  save_rl_artifacts(cfg, task, result);
}

fs::path run_gen_distill(const PipelineConfig& cfg, arena::Task task,
                         const std::string& gen_mode) {
  cfg.validate();
  ensure_out_dir(cfg);
  fs::path policy_path = fs::path(cfg.out_dir) / teacher_file(task);
  if (!fs::exists(policy_path))
    throw nn::ConfigError("missing teacher " + policy_path.string() +
                          "; run rl-train for this task first");
  rl::TeacherPolicy teacher = load_teacher(cfg, task, policy_path);
  distill::DistillDataset ds = generate_dataset(
      cfg, task, teacher, gen_mode, stage_seed(cfg, 300, task_int(task)));
  fs::path out = fs::path(cfg.out_dir) / dataset_file(task, gen_mode);
  distill::save_distill_dataset(out, ds);
  return out;
}

distill::StudentPolicy run_distill(const PipelineConfig& cfg,
                                   std::vector<fs::path> dataset_paths) {
  cfg.validate();
  ensure_out_dir(cfg);
  if (dataset_paths.empty()) {
    for (const auto& e : fs::directory_iterator(cfg.out_dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("dpi_", 0) == 0 && e.path().extension() == ".bin")
        dataset_paths.push_back(e.path());
    }
    std::sort(dataset_paths.begin(), dataset_paths.end());
  }
  if (dataset_paths.empty())
    throw nn::ConfigError("no distillation datasets found in " + cfg.out_dir);
  std::vector<distill::DistillDataset> datasets;
  for (const fs::path& p : dataset_paths)
    datasets.push_back(distill::load_distill_dataset(p));
  distill::StudentTrainStats stats;
  distill::StudentPolicy student = distill::train_student(
      datasets, student_cfg(cfg, stage_seed(cfg, 400, datasets.size())),
      &stats);
  fs::path out(cfg.out_dir);
  distill::save_student(out / kStudentFile, student);
  std::vector<std::string> rows;
  for (size_t e = 0; e < stats.train_loss.size(); ++e) {
    std::ostringstream r;
    r << e << ',' << stats.train_loss[e] << ',' << stats.val_loss[e];
    rows.push_back(r.str());
  }
  write_csv(out / "student_loss.csv", "epoch,train_loss,val_loss", rows);
  return student;
}

eval::EvalReport run_eval(const PipelineConfig& cfg,
                          const fs::path& policy_path, arena::Task task) {
  cfg.validate();
  ensure_out_dir(cfg);
  if (!fs::exists(policy_path))
    throw nn::ConfigError("no such policy file: " + policy_path.string());
  io::Container c = io::Container::load(policy_path);
  eval::Agent agent;
  std::optional<rl::TeacherPolicy> teacher;
  std::optional<distill::StudentPolicy> student;
  if (c.kind == "student") {
    student = distill::load_student(policy_path);
    agent = eval::agent_from_student(*student);
  } else if (c.kind == "policy") {
    teacher = load_teacher(cfg, task, policy_path);
    agent = eval::agent_from_teacher(*teacher);
  } else {
    throw nn::ConfigError("file is not a policy artifact: " +
                          policy_path.string());
  }

  const std::string stem = policy_path.stem().string();
  eval::EvalReport report =
      eval::evaluate(agent, cfg.arena_for(task), cfg.eval.episodes,
                     stage_seed(cfg, 500, task_int(task)), 0.0, stem);
  fs::path out(cfg.out_dir);
  eval::write_eval_csv(
      out / ("eval_" + arena::task_name(task) + "_" + stem + ".csv"),
      {report});

  // Trace of the first evaluation episode for inspection.
  arena::ArenaConfig env_cfg = cfg.arena_for(task);
  env_cfg.domain_randomization = false;
  env_cfg.max_target_contacts = 0;
  arena::Arena env(env_cfg);
  nn::Tensor obs =
      env.reset(nn::derive_seed(stage_seed(cfg, 500, task_int(task)), 9000));
  std::vector<arena::TraceRow> trace;
  while (!env.done()) {
    int action = agent(env.state(), obs);
    const arena::Vec2 pos = env.state().robot;
    const int t = env.state().t;
    arena::StepResult res = env.step(action);
    trace.push_back({t, pos.x, pos.y, action, res.reward, res.info.bumped});
    obs = std::move(res.observation);
  }
  arena::write_trace_csv(
      out / ("trace_" + arena::task_name(task) + "_" + stem + ".csv"), trace,
      task);
  return report;
}

// ---------------------------------------------------------------------------
// Full pipeline

PipelineResult run_discorl(const PipelineConfig& cfg) {
  cfg.validate();
  ensure_out_dir(cfg);
  fs::path out(cfg.out_dir);
  cfg.save(out / "config.json");
  Manifest m(out);

  const bool encoded = input_mode_of(cfg) == rl::InputMode::Encoded;
  PipelineResult result;
  result.student_path = out / kStudentFile;

  for (size_t i = 0; i < cfg.tasks.size(); ++i) {
    const arena::Task task = cfg.tasks[i];
    const std::string tn = arena::task_name(task);
    const fs::path srl_path = out / srl_model_file(task);
    const fs::path teacher_path = out / teacher_file(task);
    const fs::path ds_path = out / dataset_file(task, cfg.distill.gen_mode);

    if (encoded && !m.done("srl_" + tn)) {
      m.require_env_open(task);
      srl_stage(cfg, task);
      m.mark_done("srl_" + tn, {srl_path});
    }

    if (!m.done("rl_" + tn)) {
      m.require_env_open(task);
      std::optional<srl::SrlModel> encoder;
      if (encoded) encoder = load_srl_or_fail(cfg, task);
      rl::TeacherResult tr =
          rl_stage(cfg, task, encoder ? &*encoder : nullptr, false);
      save_rl_artifacts(cfg, task, tr);
      m.mark_done("rl_" + tn, {teacher_path});
    }

    if (!m.done("gen_" + tn)) {
      m.require_env_open(task);
      rl::TeacherPolicy teacher = load_teacher(cfg, task, teacher_path);
      distill::DistillDataset ds =
          generate_dataset(cfg, task, teacher, cfg.distill.gen_mode,
                           stage_seed(cfg, 300, task_int(task)));
      distill::save_distill_dataset(ds_path, ds);
      m.mark_done("gen_" + tn, {ds_path});
      // Only the dataset survives the task: the environment is retired and
      // the per-task models are deleted.
      m.close_env(task);
      fs::remove(teacher_path);
      if (encoded) fs::remove(srl_path);
    }
    result.dataset_paths.push_back(ds_path);

    const std::string dstage = "distill_" + std::to_string(i + 1);
    if (!m.done(dstage)) {
      std::vector<distill::DistillDataset> datasets;
      for (const fs::path& p : result.dataset_paths)
        datasets.push_back(distill::load_distill_dataset(p));
      distill::StudentTrainStats stats;
      distill::StudentPolicy student = distill::train_student(
          datasets,
          student_cfg(cfg, stage_seed(cfg, 400, static_cast<int>(i))), &stats);
      distill::save_student(result.student_path, student);
      std::vector<std::string> rows;
      for (size_t e = 0; e < stats.train_loss.size(); ++e) {
        std::ostringstream r;
        r << e << ',' << stats.train_loss[e] << ',' << stats.val_loss[e];
        rows.push_back(r.str());
      }
      write_csv(out / ("student_stage" + std::to_string(i + 1) + "_loss.csv"),
                "epoch,train_loss,val_loss", rows);
      m.mark_done(dstage, {result.student_path});
    }

    const std::string estage = "eval_" + std::to_string(i + 1);
    std::vector<eval::EvalReport> reports;
    distill::StudentPolicy student =
        distill::load_student(result.student_path);
    eval::Agent agent = eval::agent_from_student(student);
    for (size_t k = 0; k <= i; ++k) {
      const arena::Task et = cfg.tasks[k];
      reports.push_back(eval::evaluate(
          agent, cfg.arena_for(et), cfg.eval.episodes,
          stage_seed(cfg, 500, task_int(et)), 0.0,
          "student_stage" + std::to_string(i + 1)));
    }
    if (!m.done(estage)) {
      eval::write_eval_csv(
          out / ("eval_stage" + std::to_string(i + 1) + ".csv"), reports);
      json means = json::object();
      for (const eval::EvalReport& r : reports)
        means[arena::task_name(r.task)] = r.mean_norm;
      m.note(estage, means);
      m.mark_done(estage, {});
    }
    if (i + 1 == cfg.tasks.size()) result.final_reports = reports;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Fine-tuning baseline

namespace {

// Continues PPO training of existing actor/critic weights on a new task,
// evaluating both tasks every eval_interval steps.
struct FinetunePoint {
  uint64_t step;
  double first_norm;
  double second_norm;
};

std::vector<FinetunePoint> finetune_on(
    const PipelineConfig& cfg, rl::PolicyNets& nets,
    const srl::SrlModel* encoder, arena::Task first, arena::Task second,
    uint64_t seed) {
  rl::RolloutWorker worker(cfg.arena_for(second), encoder, nets.mode, seed);
  nn::Rng rng(nn::derive_seed(seed, 1));
  nn::AdamState opt_pi, opt_vf;
  opt_pi.lr = cfg.rl.ppo.lr;
  opt_vf.lr = cfg.rl.ppo.lr;
  opt_pi.init(nets.pi.params());
  opt_vf.init(nets.vf.params());

  auto eval_both = [&](uint64_t step) {
    rl::TeacherPolicy policy(
        encoder ? std::optional<srl::SrlModel>(*encoder) : std::nullopt,
        rl::PolicyNets{nets.pi, nets.vf, nets.mode, nets.state_dim,
                       nets.render_size});
    eval::Agent agent = eval::agent_from_teacher(policy);
    return FinetunePoint{
        step, normalized_mean(agent, cfg, first, cfg.finetune.eval_episodes),
        normalized_mean(agent, cfg, second, cfg.finetune.eval_episodes)};
  };

  std::vector<FinetunePoint> curve;
  curve.push_back(eval_both(0));
  uint64_t steps = 0;
  uint64_t next_eval = cfg.finetune.eval_interval_steps;
  while (steps < cfg.rl.budget_steps) {
    rl::RolloutBatch batch =
        worker.collect(nets, cfg.rl.ppo.rollout_steps, rng, cfg.rl.ppo);
    rl::ppo_update(nets, opt_pi, opt_vf, batch, cfg.rl.ppo, rng);
    steps += static_cast<uint64_t>(batch.steps.size());
    if (steps >= next_eval) {
      curve.push_back(eval_both(steps));
      while (next_eval <= steps) next_eval += cfg.finetune.eval_interval_steps;
    }
  }
  if (curve.back().step != steps) curve.push_back(eval_both(steps));
  return curve;
}

}  // namespace

FinetuneResult run_finetune_baseline(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.tasks.size() < 2)
    throw nn::ConfigError("finetune baseline needs at least two tasks");
  ensure_out_dir(cfg);
  fs::path out(cfg.out_dir);
  const arena::Task first = cfg.tasks[0];
  const arena::Task second = cfg.tasks[1];
  const bool encoded = input_mode_of(cfg) == rl::InputMode::Encoded;

  FinetuneResult result;
  result.curves_csv = out / "forgetting_curves.csv";
  result.summary_csv = out / "forgetting_summary.csv";
  std::vector<std::string> curve_rows;
  std::vector<std::string> summary_rows;

  for (int s = 0; s < cfg.finetune.seeds; ++s) {
    const uint64_t root = nn::derive_seed(cfg.seed, 600 + s);
    PipelineConfig run = cfg;
    run.seed = root;

    // Teacher for the first task; its encoder is kept frozen throughout.
    std::optional<srl::SrlModel> enc_first;
    if (encoded) {
      SrlArtifacts a = srl_stage(run, first);
      enc_first = std::move(a.model);
      fs::remove(a.model_path);
    }
    rl::TeacherResult t_first =
        rl_stage(run, first, enc_first ? &*enc_first : nullptr, false);

    rl::TeacherPolicy p_first(
        enc_first,
        rl::PolicyNets{t_first.policy.pi, t_first.policy.vf,
                       t_first.policy.mode, t_first.policy.state_dim,
                       t_first.policy.render_size});
    FinetuneSeedResult row;
    row.seed = root;
    row.tr_before = normalized_mean(eval::agent_from_teacher(p_first), run,
                                    first, cfg.finetune.eval_episodes);

    // Distilled comparison arm: dataset from the first teacher, a fresh
    // teacher for the second task, one student from both datasets.
    distill::DistillDataset d_first = generate_dataset(
        run, first, p_first, cfg.distill.gen_mode,
        stage_seed(run, 300, task_int(first)));
    std::optional<srl::SrlModel> enc_second;
    if (encoded) {
      SrlArtifacts a = srl_stage(run, second);
      enc_second = std::move(a.model);
      fs::remove(a.model_path);
    }
    rl::TeacherResult t_second =
        rl_stage(run, second, enc_second ? &*enc_second : nullptr, false);
    rl::TeacherPolicy p_second(
        enc_second,
        rl::PolicyNets{t_second.policy.pi, t_second.policy.vf,
                       t_second.policy.mode, t_second.policy.state_dim,
                       t_second.policy.render_size});
    distill::DistillDataset d_second = generate_dataset(
        run, second, p_second, cfg.distill.gen_mode,
        stage_seed(run, 300, task_int(second)));
    distill::StudentPolicy student = distill::train_student(
        {d_first, d_second}, student_cfg(run, stage_seed(run, 400, 2)),
        nullptr);
    eval::Agent student_agent = eval::agent_from_student(student);
    row.tr_distilled = normalized_mean(student_agent, run, first,
                                       cfg.finetune.eval_episodes);
    row.tc_distilled = normalized_mean(student_agent, run, second,
                                       cfg.finetune.eval_episodes);

    // Fine-tune the first teacher's weights on the second task.
    std::vector<FinetunePoint> curve = finetune_on(
        run, t_first.policy, enc_first ? &*enc_first : nullptr, first, second,
        nn::derive_seed(root, 7));
    for (const FinetunePoint& p : curve) {
      std::ostringstream r;
      r << s << ',' << p.step << ',' << p.first_norm << ',' << p.second_norm;
      curve_rows.push_back(r.str());
    }
    row.tr_after = curve.back().first_norm;
    row.tc_after = curve.back().second_norm;

    std::ostringstream r;
    r << s << ',' << row.tr_before << ',' << row.tr_after << ','
      << row.tc_after << ',' << row.tr_distilled << ',' << row.tc_distilled;
    summary_rows.push_back(r.str());
    result.per_seed.push_back(row);
  }

  const double n = static_cast<double>(result.per_seed.size());
  for (const FinetuneSeedResult& r : result.per_seed) {
    result.mean_tr_before += r.tr_before / n;
    result.mean_tr_after += r.tr_after / n;
    result.mean_tr_distilled += r.tr_distilled / n;
  }
  write_csv(result.curves_csv, "seed,step,first_task_norm,second_task_norm",
            curve_rows);
  write_csv(result.summary_csv,
            "seed,first_before,first_after_finetune,second_after_finetune,"
            "first_distilled,second_distilled",
            summary_rows);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint sweep

std::vector<SweepRow> run_checkpoint_sweep(const PipelineConfig& cfg) {
  cfg.validate();
  ensure_out_dir(cfg);
  const arena::Task task = arena::Task::TC;
  const bool encoded = input_mode_of(cfg) == rl::InputMode::Encoded;

  std::optional<srl::SrlModel> encoder;
  if (encoded) {
    SrlArtifacts a = srl_stage(cfg, task);
    encoder = std::move(a.model);
    fs::remove(a.model_path);
  }
  rl::TeacherResult tr =
      rl_stage(cfg, task, encoder ? &*encoder : nullptr, true);

  std::vector<SweepRow> rows;
  std::vector<std::string> csv_rows;
  for (const rl::Checkpoint& c : tr.checkpoints) {
    rl::TeacherPolicy teacher(
        encoder,
        rl::PolicyNets{c.policy.pi, c.policy.vf, c.policy.mode,
                       c.policy.state_dim, c.policy.render_size});
    const double teacher_norm = normalized_mean(
        eval::agent_from_teacher(teacher), cfg, task, cfg.eval.episodes);
    for (int s = 0; s < cfg.sweep.seeds; ++s) {
      const uint64_t seed = nn::derive_seed(cfg.seed, 700 + s);
      PipelineConfig run = cfg;
      run.distill.samples_per_task = cfg.sweep.samples;
      distill::DistillDataset ds =
          generate_dataset(run, task, teacher, cfg.distill.gen_mode,
                           nn::derive_seed(seed, 300 + c.episode));
      distill::StudentPolicy student = distill::train_student(
          {ds}, student_cfg(run, nn::derive_seed(seed, 400 + c.episode)),
          nullptr);
      const double student_norm =
          normalized_mean(eval::agent_from_student(student), cfg, task,
                          cfg.eval.episodes);
      rows.push_back({c.episode, teacher_norm, seed, student_norm});
      std::ostringstream r;
      r << c.episode << ',' << teacher_norm << ',' << s << ',' << student_norm;
      csv_rows.push_back(r.str());
    }
  }
  write_csv(fs::path(cfg.out_dir) / "sweep.csv",
            "checkpoint_episode,teacher_norm,seed,student_norm", csv_rows);
  return rows;
}

// ---------------------------------------------------------------------------
// Loss comparison

std::vector<distill::LossComparisonRow> run_compare_losses(
    const PipelineConfig& cfg) {
  cfg.validate();
  ensure_out_dir(cfg);
  const bool encoded = input_mode_of(cfg) == rl::InputMode::Encoded;

  // One teacher per task, reused across losses and seeds. Existing artifacts
  // in the output directory are loaded instead of retrained.
  std::vector<rl::TeacherPolicy> teachers;
  for (arena::Task task : cfg.tasks) {
    fs::path tp = fs::path(cfg.out_dir) / teacher_file(task);
    if (fs::exists(tp)) {
      teachers.push_back(load_teacher(cfg, task, tp));
      continue;
    }
    std::optional<srl::SrlModel> encoder;
    if (encoded) {
      SrlArtifacts a = srl_stage(cfg, task);
      encoder = std::move(a.model);
      fs::remove(a.model_path);
    }
    rl::TeacherResult tr =
        rl_stage(cfg, task, encoder ? &*encoder : nullptr, false);
    teachers.emplace_back(std::move(encoder), std::move(tr.policy));
  }

  auto gen = [&](arena::Task task, uint64_t seed) {
    size_t idx = 0;
    while (cfg.tasks[idx] != task) ++idx;
    return generate_dataset(cfg, task, teachers[idx], cfg.distill.gen_mode,
                            seed);
  };
  auto evaluator = [&](const distill::StudentPolicy& s, arena::Task task) {
    return normalized_mean(eval::agent_from_student(s), cfg, task,
                           cfg.eval.episodes);
  };

  std::vector<distill::LossChoice> losses = {
      {distill::LossChoice::Kind::Mse, 0.0},
      {distill::LossChoice::Kind::Kl, 1.0},
      {distill::LossChoice::Kind::Kl, 0.1},
      {distill::LossChoice::Kind::Kl, 0.01}};
  std::vector<uint64_t> seeds;
  for (int s = 0; s < cfg.sweep.seeds; ++s)
    seeds.push_back(nn::derive_seed(cfg.seed, 800 + s));

  std::vector<distill::LossComparisonRow> rows = distill::compare_losses(
      gen, cfg.tasks, losses, seeds, student_cfg(cfg, 0), evaluator);
  distill::write_loss_table_csv(fs::path(cfg.out_dir) / "loss_table.csv",
                                rows);
  return rows;
}

// ---------------------------------------------------------------------------
// Memory report

MemoryReport memory_report(const fs::path& dir) {
  MemoryReport r;
  if (!fs::exists(dir)) return r;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (e.path().extension() != ".bin") {
      r.other_bytes += e.file_size();
      continue;
    }
    const uint64_t bytes = e.file_size();
    if (name.rfind("dpi_", 0) == 0 || name.rfind("srl_dataset_", 0) == 0)
      r.dataset_bytes += bytes;
    else if (name.rfind("srl_", 0) == 0)
      r.srl_bytes += bytes;
    else if (name.rfind("teacher_", 0) == 0)
      r.teacher_bytes += bytes;
    else if (name.rfind("student", 0) == 0)
      r.student_bytes += bytes;
    else
      r.other_bytes += bytes;
  }
  return r;
}

void write_memory_report_csv(const fs::path& path, const MemoryReport& r) {
  // Reference column: footprint of the original desk-robot experiment, in
  // MB, for scale comparison.
  std::ostringstream ss;
  ss << "class,bytes,mb,reference_mb\n";
  auto row = [&](const char* cls, uint64_t bytes, double ref) {
    ss << cls << ',' << bytes << ',' << static_cast<double>(bytes) / 1.0e6
       << ',' << ref << '\n';
  };
  row("datasets", r.dataset_bytes, 554.6);
  row("srl_models", r.srl_bytes, 4.8);
  row("teachers", r.teacher_bytes, 0.143);
  row("students", r.student_bytes, 1.1);
  row("other", r.other_bytes, 0.0);
  io::atomic_write(path, ss.str());
}

}  // namespace discorl::pipeline
