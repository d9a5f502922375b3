#include "discorl.h"

#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "arena/arena.hpp"
#include "distill/distill.hpp"
#include "io/container.hpp"
#include "pipeline/config.hpp"
#include "pipeline/pipeline.hpp"
#include "rl/ppo.hpp"
#include "srl/srl.hpp"

namespace {

thread_local std::string g_last_error;

discorl_status set_error(discorl_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

// Maps C++ exceptions to status codes; body returns DISCORL_OK on success.
template <typename F>
discorl_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const discorl::nn::ConfigError& e) {
    return set_error(DISCORL_CONFIG_ERROR, e.what());
  } catch (const discorl::nn::UsageError& e) {
    return set_error(DISCORL_USAGE_ERROR, e.what());
  } catch (const discorl::nn::IoError& e) {
    return set_error(DISCORL_IO_ERROR, e.what());
  } catch (const discorl::nn::StageError& e) {
    return set_error(DISCORL_STAGE_FAILURE, e.what());
  } catch (const std::exception& e) {
    return set_error(DISCORL_STAGE_FAILURE, e.what());
  } catch (...) {
    return set_error(DISCORL_STAGE_FAILURE, "unknown error");
  }
}

discorl_status require(bool ok, const char* what) {
  if (ok) return DISCORL_OK;
  throw discorl::nn::UsageError(what);
}

}  // namespace

struct discorl_config {
  discorl::pipeline::PipelineConfig cfg;
};

struct discorl_env {
  discorl::arena::Arena env;
  explicit discorl_env(const discorl::arena::ArenaConfig& c) : env(c) {}
};

struct discorl_policy {
  std::optional<discorl::rl::TeacherPolicy> teacher;
  std::optional<discorl::distill::StudentPolicy> student;
  int render_size = 32;

  std::array<double, discorl::arena::kNumActions> probs(
      const discorl::nn::Tensor& obs) const {
    if (student) return student->action_probs(obs);
    return teacher->action_probs(obs);
  }
};

extern "C" {

uint32_t discorl_abi_version(void) { return 1; }

const char* discorl_last_error(void) { return g_last_error.c_str(); }

discorl_status discorl_config_create(discorl_config** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    *out = new discorl_config{};
    return DISCORL_OK;
  });
}

discorl_status discorl_config_load(const char* path, discorl_config** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    auto cfg = std::make_unique<discorl_config>();
    cfg->cfg = discorl::pipeline::PipelineConfig::load(path);
    *out = cfg.release();
    return DISCORL_OK;
  });
}

discorl_status discorl_config_save(const discorl_config* cfg,
                                   const char* path) {
  return guarded([&] {
    require(cfg != nullptr && path != nullptr, "null argument");
    cfg->cfg.save(path);
    return DISCORL_OK;
  });
}

discorl_status discorl_config_set_seed(discorl_config* cfg, uint64_t seed) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    cfg->cfg.seed = seed;
    return DISCORL_OK;
  });
}

discorl_status discorl_config_set_out_dir(discorl_config* cfg,
                                          const char* out_dir) {
  return guarded([&] {
    require(cfg != nullptr && out_dir != nullptr, "null argument");
    cfg->cfg.out_dir = out_dir;
    return DISCORL_OK;
  });
}

discorl_status discorl_config_set(discorl_config* cfg, const char* dotted_key,
                                  const char* json_value) {
  return guarded([&] {
    require(cfg != nullptr && dotted_key != nullptr && json_value != nullptr,
            "null argument");
    nlohmann::json j = cfg->cfg.to_json();
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(json_value);
    } catch (const nlohmann::json::exception& e) {
      throw discorl::nn::ConfigError("value is not valid JSON: " +
                                     std::string(e.what()));
    }
    nlohmann::json* node = &j;
    std::string key(dotted_key);
    size_t pos;
    while ((pos = key.find('.')) != std::string::npos) {
      const std::string head = key.substr(0, pos);
      if (!node->is_object() || !node->contains(head))
        throw discorl::nn::ConfigError("unknown config key: " +
                                       std::string(dotted_key));
      node = &(*node)[head];
      key = key.substr(pos + 1);
    }
    if (!node->is_object() || !node->contains(key))
      throw discorl::nn::ConfigError("unknown config key: " +
                                     std::string(dotted_key));
    (*node)[key] = value;
    cfg->cfg = discorl::pipeline::PipelineConfig::from_json(j);
    return DISCORL_OK;
  });
}

void discorl_config_free(discorl_config* cfg) { delete cfg; }

discorl_status discorl_srl_train(const discorl_config* cfg,
                                 const char* task) {
  return guarded([&] {
    require(cfg != nullptr && task != nullptr, "null argument");
    discorl::pipeline::run_srl_train(cfg->cfg,
                                     discorl::arena::task_from_name(task));
    return DISCORL_OK;
  });
}

discorl_status discorl_rl_train(const discorl_config* cfg, const char* task) {
  return guarded([&] {
    require(cfg != nullptr && task != nullptr, "null argument");
    discorl::pipeline::run_rl_train(cfg->cfg,
                                    discorl::arena::task_from_name(task));
    return DISCORL_OK;
  });
}

discorl_status discorl_gen_distill(const discorl_config* cfg,
                                   const char* task, const char* mode) {
  return guarded([&] {
    require(cfg != nullptr && task != nullptr, "null argument");
    std::string m = mode ? mode : cfg->cfg.distill.gen_mode;
    discorl::pipeline::run_gen_distill(
        cfg->cfg, discorl::arena::task_from_name(task), m);
    return DISCORL_OK;
  });
}

discorl_status discorl_distill(const discorl_config* cfg,
                               const char* const* dataset_paths,
                               size_t n_paths) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    require(n_paths == 0 || dataset_paths != nullptr,
            "dataset_paths is null with n_paths > 0");
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n_paths; ++i) {
      require(dataset_paths[i] != nullptr, "dataset path is null");
      paths.emplace_back(dataset_paths[i]);
    }
    discorl::pipeline::run_distill(cfg->cfg, std::move(paths));
    return DISCORL_OK;
  });
}

discorl_status discorl_eval(const discorl_config* cfg,
                            const char* policy_path, const char* task,
                            double* mean_norm_out) {
  return guarded([&] {
    require(cfg != nullptr && policy_path != nullptr && task != nullptr,
            "null argument");
    discorl::eval::EvalReport r = discorl::pipeline::run_eval(
        cfg->cfg, policy_path, discorl::arena::task_from_name(task));
    if (mean_norm_out) *mean_norm_out = r.mean_norm;
    return DISCORL_OK;
  });
}

discorl_status discorl_pipeline(const discorl_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    discorl::pipeline::run_discorl(cfg->cfg);
    return DISCORL_OK;
  });
}

discorl_status discorl_finetune_baseline(const discorl_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    discorl::pipeline::run_finetune_baseline(cfg->cfg);
    return DISCORL_OK;
  });
}

discorl_status discorl_checkpoint_sweep(const discorl_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    discorl::pipeline::run_checkpoint_sweep(cfg->cfg);
    return DISCORL_OK;
  });
}

discorl_status discorl_compare_losses(const discorl_config* cfg) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    discorl::pipeline::run_compare_losses(cfg->cfg);
    return DISCORL_OK;
  });
}

discorl_status discorl_memory_report(const discorl_config* cfg,
                                     const char* dir) {
  return guarded([&] {
    require(cfg != nullptr, "cfg is null");
    std::filesystem::path d = dir ? dir : cfg->cfg.out_dir;
    discorl::pipeline::MemoryReport r = discorl::pipeline::memory_report(d);
    discorl::pipeline::write_memory_report_csv(d / "memory_report.csv", r);
    return DISCORL_OK;
  });
}

discorl_status discorl_env_create(const discorl_config* cfg, const char* task,
                                  discorl_env** out) {
  return guarded([&] {
    require(cfg != nullptr && task != nullptr && out != nullptr,
            "null argument");
    discorl::arena::ArenaConfig ec =
        cfg->cfg.arena_for(discorl::arena::task_from_name(task));
    ec.validate();
    *out = new discorl_env(ec);
    return DISCORL_OK;
  });
}

discorl_status discorl_env_observation_len(const discorl_env* env,
                                           size_t* out) {
  return guarded([&] {
    require(env != nullptr && out != nullptr, "null argument");
    const int n = env->env.config().render_size;
    *out = static_cast<size_t>(n) * n * 3;
    return DISCORL_OK;
  });
}

namespace {

void copy_obs(const discorl::nn::Tensor& obs, double* out, size_t len) {
  require(out != nullptr, "obs_out is null");
  require(len == obs.data.size(), "obs buffer has the wrong length");
  std::memcpy(out, obs.data.data(), len * sizeof(double));
}

}  // namespace

discorl_status discorl_env_reset(discorl_env* env, uint64_t seed,
                                 double* obs_out, size_t obs_len) {
  return guarded([&] {
    require(env != nullptr, "env is null");
    discorl::nn::Tensor obs = env->env.reset(seed);
    copy_obs(obs, obs_out, obs_len);
    return DISCORL_OK;
  });
}

discorl_status discorl_env_step(discorl_env* env, int action, double* obs_out,
                                size_t obs_len, double* reward_out,
                                int* done_out) {
  return guarded([&] {
    require(env != nullptr, "env is null");
    require(action >= 0 && action < discorl::arena::kNumActions,
            "action out of range");
    discorl::arena::StepResult res = env->env.step(action);
    copy_obs(res.observation, obs_out, obs_len);
    if (reward_out) *reward_out = res.reward;
    if (done_out) *done_out = res.done ? 1 : 0;
    return DISCORL_OK;
  });
}

void discorl_env_free(discorl_env* env) { delete env; }

discorl_status discorl_policy_load(const char* policy_path,
                                   const char* encoder_path,
                                   discorl_policy** out) {
  return guarded([&] {
    require(policy_path != nullptr && out != nullptr, "null argument");
    discorl::io::Container c = discorl::io::Container::load(policy_path);
    auto p = std::make_unique<discorl_policy>();
    if (c.kind == "student") {
      p->student = discorl::distill::load_student(policy_path);
      p->render_size = p->student->render_size;
    } else if (c.kind == "policy") {
      discorl::rl::PolicyNets nets = discorl::rl::load_policy(policy_path);
      std::optional<discorl::srl::SrlModel> encoder;
      if (nets.mode == discorl::rl::InputMode::Encoded) {
        if (!encoder_path)
          throw discorl::nn::ConfigError(
              "policy uses encoded states; encoder_path is required");
        encoder = discorl::srl::load_srl_model(encoder_path);
      }
      p->render_size = nets.render_size > 0 ? nets.render_size : 32;
      p->teacher.emplace(std::move(encoder), std::move(nets));
    } else {
      throw discorl::nn::ConfigError("file is not a policy artifact");
    }
    *out = p.release();
    return DISCORL_OK;
  });
}

namespace {

discorl::nn::Tensor obs_tensor(const discorl_policy* policy,
                               const double* obs, size_t obs_len) {
  require(policy != nullptr && obs != nullptr, "null argument");
  const size_t n = static_cast<size_t>(policy->render_size);
  require(obs_len == n * n * 3, "obs buffer has the wrong length");
  discorl::nn::Tensor t;
  t.shape = {n, n, 3};
  t.data.assign(obs, obs + obs_len);
  return t;
}

}  // namespace

discorl_status discorl_policy_probs(const discorl_policy* policy,
                                    const double* obs, size_t obs_len,
                                    double* probs_out) {
  return guarded([&] {
    require(probs_out != nullptr, "probs_out is null");
    auto probs = policy->probs(obs_tensor(policy, obs, obs_len));
    for (int i = 0; i < discorl::arena::kNumActions; ++i)
      probs_out[i] = probs[i];
    return DISCORL_OK;
  });
}

discorl_status discorl_policy_greedy_action(const discorl_policy* policy,
                                            const double* obs, size_t obs_len,
                                            int* action_out) {
  return guarded([&] {
    require(action_out != nullptr, "action_out is null");
    auto probs = policy->probs(obs_tensor(policy, obs, obs_len));
    *action_out = discorl::rl::argmax_action(probs);
    return DISCORL_OK;
  });
}

void discorl_policy_free(discorl_policy* policy) { delete policy; }

}  // extern "C"
