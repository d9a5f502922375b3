#include "pipeline/config.hpp"

#include <fstream>
#include <sstream>

#include "io/container.hpp"
#include "nn/tensor.hpp"

namespace discorl::pipeline {

using nlohmann::json;

namespace {

const char* const kPpoKeys[] = {"gamma",        "gae_lambda",
                                "clip_eps",     "epochs",
                                "minibatch_size", "value_coef",
                                "entropy_coef", "lr",
                                "rollout_steps"};

void ppo_from_json(const json& p, rl::PpoConfig& c) {
  auto get = [&](const char* key, auto& out) {
    if (p.contains(key))
      out = p.at(key).get<std::remove_reference_t<decltype(out)>>();
  };
  get("gamma", c.gamma);
  get("gae_lambda", c.gae_lambda);
  get("clip_eps", c.clip_eps);
  get("epochs", c.epochs);
  get("minibatch_size", c.minibatch_size);
  get("value_coef", c.value_coef);
  get("entropy_coef", c.entropy_coef);
  get("lr", c.lr);
  get("rollout_steps", c.rollout_steps);
}

}  // namespace

nlohmann::json PipelineConfig::Rl::default_task_ppo() {
  // Per-task training settings chosen by calibration; see README.
  return json::object();
}

rl::PpoConfig PipelineConfig::ppo_for(arena::Task task) const {
  rl::PpoConfig c = rl.ppo;
  const std::string name = arena::task_name(task);
  if (rl.task_ppo.contains(name)) ppo_from_json(rl.task_ppo.at(name), c);
  return c;
}

void PipelineConfig::validate() const {
  if (schema_version != 1)
    throw nn::ConfigError("unsupported schema_version: " +
                          std::to_string(schema_version));
  if (tasks.empty()) throw nn::ConfigError("tasks must not be empty");
  if (out_dir.empty()) throw nn::ConfigError("out_dir must not be empty");
  arena.validate();
  if (srl.samples == 0) throw nn::ConfigError("srl.samples must be positive");
  if (srl.state_dim <= 0) throw nn::ConfigError("srl.state_dim must be positive");
  if (srl.epochs < 0) throw nn::ConfigError("srl.epochs must be non-negative");
  if (srl.batch_size <= 0) throw nn::ConfigError("srl.batch_size must be positive");
  if (rl.input_mode != "encoded" && rl.input_mode != "raw_pixels")
    throw nn::ConfigError("rl.input_mode must be encoded or raw_pixels");
  if (rl.ppo.minibatch_size <= 0 || rl.ppo.rollout_steps <= 0 ||
      rl.ppo.epochs <= 0)
    throw nn::ConfigError("rl.ppo sizes must be positive");
  if (rl.checkpoint_interval == 0)
    throw nn::ConfigError("rl.checkpoint_interval must be positive");
  if (rl.greedy_frac_final < 0.0 || rl.greedy_frac_final > 1.0)
    throw nn::ConfigError("rl.greedy_frac_final must be in [0, 1]");
  if (rl.chaser_curriculum_start <= 0.0 || rl.chaser_curriculum_start > 1.0)
    throw nn::ConfigError("rl.chaser_curriculum_start must be in (0, 1]");
  if (!rl.task_ppo.is_object())
    throw nn::ConfigError("rl.task_ppo must be an object keyed by task name");
  for (const auto& [task_name, overrides] : rl.task_ppo.items()) {
    arena::task_from_name(task_name);  // throws on unknown task
    if (!overrides.is_object())
      throw nn::ConfigError("rl.task_ppo." + task_name + " must be an object");
    for (const auto& [key, value] : overrides.items()) {
      (void)value;
      bool known = false;
      for (const char* k : kPpoKeys) known = known || key == k;
      if (!known)
        throw nn::ConfigError("unknown ppo key in rl.task_ppo." + task_name +
                              ": " + key);
    }
  }
  if (distill.samples_per_task == 0)
    throw nn::ConfigError("distill.samples_per_task must be positive");
  if (distill.epochs <= 0) throw nn::ConfigError("distill.epochs must be positive");
  if (distill.batch_size <= 0)
    throw nn::ConfigError("distill.batch_size must be positive");
  if (distill.val_frac < 0.0 || distill.val_frac >= 1.0)
    throw nn::ConfigError("distill.val_frac must be in [0, 1)");
  if (distill.loss != "kl" && distill.loss != "mse")
    throw nn::ConfigError("distill.loss must be kl or mse");
  if (distill.loss == "kl" && distill.tau <= 0.0)
    throw nn::ConfigError("distill.tau must be positive");
  if (distill.gen_mode != "on_policy" && distill.gen_mode != "grid_walker" &&
      distill.gen_mode != "random_walker")
    throw nn::ConfigError("unknown distill.gen_mode: " + distill.gen_mode);
  if (distill.grid_stride <= 0.0)
    throw nn::ConfigError("distill.grid_stride must be positive");
  if (eval.episodes <= 0) throw nn::ConfigError("eval.episodes must be positive");
  if (finetune.seeds <= 0 || finetune.eval_episodes <= 0 ||
      finetune.eval_interval_steps == 0)
    throw nn::ConfigError("finetune settings must be positive");
  if (sweep.samples == 0 || sweep.seeds <= 0)
    throw nn::ConfigError("sweep settings must be positive");
}

namespace {

json arena_to_json(const arena::ArenaConfig& a) {
  return json{
      {"half_width", a.half_width},
      {"step_size", a.step_size},
      {"episode_len", a.episode_len},
      {"render_size", a.render_size},
      {"tr", {{"target_x", a.tr.target.x},
              {"target_y", a.tr.target.y},
              {"contact_range", a.tr.contact_range}}},
      {"tc", {{"lambda", a.tc.lambda},
              {"r_circle", a.tc.r_circle},
              {"k", a.tc.k}}},
      {"te", {{"chaser_speed", a.te.chaser_speed},
              {"catch_range", a.te.catch_range},
              {"chaser_start_x", a.te.chaser_start.x},
              {"chaser_start_y", a.te.chaser_start.y}}},
      {"domain_randomization", a.domain_randomization},
  };
}

// Reads only keys that are present, so partial configs fall back to defaults.
template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

arena::ArenaConfig arena_from_json(const json& j, arena::ArenaConfig base) {
  get(j, "half_width", base.half_width);
  get(j, "step_size", base.step_size);
  get(j, "episode_len", base.episode_len);
  get(j, "render_size", base.render_size);
  if (j.contains("tr")) {
    const json& t = j.at("tr");
    get(t, "target_x", base.tr.target.x);
    get(t, "target_y", base.tr.target.y);
    get(t, "contact_range", base.tr.contact_range);
  }
  if (j.contains("tc")) {
    const json& t = j.at("tc");
    get(t, "lambda", base.tc.lambda);
    get(t, "r_circle", base.tc.r_circle);
    get(t, "k", base.tc.k);
  }
  if (j.contains("te")) {
    const json& t = j.at("te");
    get(t, "chaser_speed", base.te.chaser_speed);
    get(t, "catch_range", base.te.catch_range);
    get(t, "chaser_start_x", base.te.chaser_start.x);
    get(t, "chaser_start_y", base.te.chaser_start.y);
  }
  get(j, "domain_randomization", base.domain_randomization);
  return base;
}

}  // namespace

json PipelineConfig::to_json() const {
  json jt = json::array();
  for (arena::Task t : tasks) jt.push_back(arena::task_name(t));
  return json{
      {"schema_version", schema_version},
      {"tasks", jt},
      {"seed", seed},
      {"out_dir", out_dir},
      {"arena", arena_to_json(arena)},
      {"srl", {{"samples", srl.samples},
               {"epochs", srl.epochs},
               {"state_dim", srl.state_dim},
               {"w_rec", srl.w_rec},
               {"w_inv", srl.w_inv},
               {"lr", srl.lr},
               {"batch_size", srl.batch_size},
               {"save_dataset", srl.save_dataset}}},
      {"rl", {{"budget_steps", rl.budget_steps},
              {"checkpoint_interval", rl.checkpoint_interval},
              {"save_checkpoints", rl.save_checkpoints},
              {"input_mode", rl.input_mode},
              {"selection_interval_steps", rl.selection_interval_steps},
              {"selection_episodes", rl.selection_episodes},
              {"greedy_frac_final", rl.greedy_frac_final},
              {"chaser_curriculum_start", rl.chaser_curriculum_start},
              {"task_ppo", rl.task_ppo},
              {"ppo", {{"gamma", rl.ppo.gamma},
                       {"gae_lambda", rl.ppo.gae_lambda},
                       {"clip_eps", rl.ppo.clip_eps},
                       {"epochs", rl.ppo.epochs},
                       {"minibatch_size", rl.ppo.minibatch_size},
                       {"value_coef", rl.ppo.value_coef},
                       {"entropy_coef", rl.ppo.entropy_coef},
                       {"lr", rl.ppo.lr},
                       {"rollout_steps", rl.ppo.rollout_steps}}}}},
      {"distill", {{"samples_per_task", distill.samples_per_task},
                   {"epochs", distill.epochs},
                   {"batch_size", distill.batch_size},
                   {"lr", distill.lr},
                   {"val_frac", distill.val_frac},
                   {"loss", distill.loss},
                   {"tau", distill.tau},
                   {"gen_mode", distill.gen_mode},
                   {"grid_stride", distill.grid_stride}}},
      {"eval", {{"episodes", eval.episodes}}},
      {"finetune", {{"seeds", finetune.seeds},
                    {"eval_interval_steps", finetune.eval_interval_steps},
                    {"eval_episodes", finetune.eval_episodes}}},
      {"sweep", {{"samples", sweep.samples}, {"seeds", sweep.seeds}}},
  };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    get(j, "schema_version", c.schema_version);
    if (j.contains("tasks")) {
      c.tasks.clear();
      for (const auto& t : j.at("tasks"))
        c.tasks.push_back(arena::task_from_name(t.get<std::string>()));
    }
    get(j, "seed", c.seed);
    get(j, "out_dir", c.out_dir);
    if (j.contains("arena")) c.arena = arena_from_json(j.at("arena"), c.arena);
    if (j.contains("srl")) {
      const json& s = j.at("srl");
      get(s, "samples", c.srl.samples);
      get(s, "epochs", c.srl.epochs);
      get(s, "state_dim", c.srl.state_dim);
      get(s, "w_rec", c.srl.w_rec);
      get(s, "w_inv", c.srl.w_inv);
      get(s, "lr", c.srl.lr);
      get(s, "batch_size", c.srl.batch_size);
      get(s, "save_dataset", c.srl.save_dataset);
    }
    if (j.contains("rl")) {
      const json& r = j.at("rl");
      get(r, "budget_steps", c.rl.budget_steps);
      get(r, "checkpoint_interval", c.rl.checkpoint_interval);
      get(r, "save_checkpoints", c.rl.save_checkpoints);
      get(r, "input_mode", c.rl.input_mode);
      get(r, "selection_interval_steps", c.rl.selection_interval_steps);
      get(r, "selection_episodes", c.rl.selection_episodes);
      get(r, "greedy_frac_final", c.rl.greedy_frac_final);
      get(r, "chaser_curriculum_start", c.rl.chaser_curriculum_start);
      if (r.contains("task_ppo")) c.rl.task_ppo = r.at("task_ppo");
      if (r.contains("ppo")) ppo_from_json(r.at("ppo"), c.rl.ppo);
    }
    if (j.contains("distill")) {
      const json& d = j.at("distill");
      get(d, "samples_per_task", c.distill.samples_per_task);
      get(d, "epochs", c.distill.epochs);
      get(d, "batch_size", c.distill.batch_size);
      get(d, "lr", c.distill.lr);
      get(d, "val_frac", c.distill.val_frac);
      get(d, "loss", c.distill.loss);
      get(d, "tau", c.distill.tau);
      get(d, "gen_mode", c.distill.gen_mode);
      get(d, "grid_stride", c.distill.grid_stride);
    }
    if (j.contains("eval")) get(j.at("eval"), "episodes", c.eval.episodes);
    if (j.contains("finetune")) {
      const json& f = j.at("finetune");
      get(f, "seeds", c.finetune.seeds);
      get(f, "eval_interval_steps", c.finetune.eval_interval_steps);
      get(f, "eval_episodes", c.finetune.eval_episodes);
    }
    if (j.contains("sweep")) {
      const json& s = j.at("sweep");
      get(s, "samples", c.sweep.samples);
      get(s, "seeds", c.sweep.seeds);
    }
  } catch (const json::exception& e) {
    throw nn::ConfigError(std::string("bad config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw nn::ConfigError("cannot open config: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw nn::ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  std::ostringstream ss;
  ss << to_json().dump(2) << '\n';
  io::atomic_write(path, ss.str());
}

}  // namespace discorl::pipeline
