/* C interface to the discorl continual-distillation library.
 *
 * All functions return a discorl_status. On failure, discorl_last_error()
 * describes the problem (thread-local, valid until the next call on the
 * same thread). Objects returned through out-parameters are owned by the
 * caller and released with the matching _free function.
 */
#ifndef DISCORL_H
#define DISCORL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum discorl_status {
  DISCORL_OK = 0,
  DISCORL_CONFIG_ERROR = 2, /* bad configuration or missing input artifact */
  DISCORL_STAGE_FAILURE = 3, /* a pipeline stage failed while running */
  DISCORL_USAGE_ERROR = 4,   /* API misuse (null handle, bad buffer size) */
  DISCORL_IO_ERROR = 5       /* file could not be read or written */
} discorl_status;

uint32_t discorl_abi_version(void);
const char* discorl_last_error(void);

/* ------------------------------------------------------------------ */
/* Configuration                                                       */

typedef struct discorl_config discorl_config;

/* A config with built-in defaults. */
discorl_status discorl_config_create(discorl_config** out);
/* Load a JSON config file. */
discorl_status discorl_config_load(const char* path, discorl_config** out);
discorl_status discorl_config_save(const discorl_config* cfg,
                                   const char* path);
discorl_status discorl_config_set_seed(discorl_config* cfg, uint64_t seed);
discorl_status discorl_config_set_out_dir(discorl_config* cfg,
                                          const char* out_dir);
/* Generic override: dotted key (e.g. "rl.budget_steps") and a JSON value
 * (e.g. "5000" or "\"mse\""). */
discorl_status discorl_config_set(discorl_config* cfg, const char* dotted_key,
                                  const char* json_value);
void discorl_config_free(discorl_config* cfg);

/* ------------------------------------------------------------------ */
/* Pipeline verbs. Artifacts are read from and written to the config's
 * output directory. `task` is one of "TR", "TC", "TE".                */

discorl_status discorl_srl_train(const discorl_config* cfg, const char* task);
discorl_status discorl_rl_train(const discorl_config* cfg, const char* task);
/* mode: "on_policy", "grid_walker" or "random_walker"; NULL uses the
 * configured default. */
discorl_status discorl_gen_distill(const discorl_config* cfg,
                                   const char* task, const char* mode);
/* dataset_paths may be NULL with n_paths 0 to use every dataset artifact in
 * the output directory. */
discorl_status discorl_distill(const discorl_config* cfg,
                               const char* const* dataset_paths,
                               size_t n_paths);
/* Evaluates a saved teacher or student on a task; writes a metrics CSV and
 * an episode trace. mean_norm_out may be NULL. */
discorl_status discorl_eval(const discorl_config* cfg,
                            const char* policy_path, const char* task,
                            double* mean_norm_out);
discorl_status discorl_pipeline(const discorl_config* cfg);
discorl_status discorl_finetune_baseline(const discorl_config* cfg);
discorl_status discorl_checkpoint_sweep(const discorl_config* cfg);
discorl_status discorl_compare_losses(const discorl_config* cfg);
/* Byte census of the artifacts in `dir` (NULL: the config's output
 * directory); writes memory_report.csv there. */
discorl_status discorl_memory_report(const discorl_config* cfg,
                                     const char* dir);

/* ------------------------------------------------------------------ */
/* Interactive environment access                                      */

typedef struct discorl_env discorl_env;

discorl_status discorl_env_create(const discorl_config* cfg, const char* task,
                                  discorl_env** out);
/* obs_len must equal render_size * render_size * 3 (row-major HWC). */
discorl_status discorl_env_observation_len(const discorl_env* env,
                                           size_t* out);
discorl_status discorl_env_reset(discorl_env* env, uint64_t seed,
                                 double* obs_out, size_t obs_len);
/* action: 0 left, 1 right, 2 up, 3 down. */
discorl_status discorl_env_step(discorl_env* env, int action, double* obs_out,
                                size_t obs_len, double* reward_out,
                                int* done_out);
void discorl_env_free(discorl_env* env);

/* ------------------------------------------------------------------ */
/* Policy inference                                                    */

typedef struct discorl_policy discorl_policy;

/* Loads a student or teacher weight file. Teachers trained on encoded
 * states need their encoder file as well; pass NULL for students and
 * raw-pixel policies. */
discorl_status discorl_policy_load(const char* policy_path,
                                   const char* encoder_path,
                                   discorl_policy** out);
/* Action distribution for an HWC observation buffer. probs_out holds 4
 * values. */
discorl_status discorl_policy_probs(const discorl_policy* policy,
                                    const double* obs, size_t obs_len,
                                    double* probs_out);
discorl_status discorl_policy_greedy_action(const discorl_policy* policy,
                                            const double* obs, size_t obs_len,
                                            int* action_out);
void discorl_policy_free(discorl_policy* policy);

#ifdef __cplusplus
}
#endif

#endif /* DISCORL_H */
