// Command-line front end for the discorl library. Talks to the core only
// through the C API in discorl.h.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "discorl.h"

namespace {

int status_to_exit_code(discorl_status s) {
  switch (s) {
    case DISCORL_OK: return 0;
    case DISCORL_CONFIG_ERROR:
    case DISCORL_USAGE_ERROR: return 2;
    default: return 3;
  }
}

int fail(discorl_status s) {
  std::fprintf(stderr, "error: %s\n", discorl_last_error());
  return status_to_exit_code(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual reinforcement learning via policy distillation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--out", out_dir, "output directory for artifacts");
  app.add_option("--seed", seed, "root random seed")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--set", overrides,
                 "config override as dotted.key=json_value (repeatable)");

  std::string task = "TR";
  std::string mode;
  std::string policy_path;
  std::vector<std::string> dataset_paths;
  std::string report_dir;

  CLI::App* c_srl = app.add_subcommand(
      "srl-train", "collect random data and train the state encoder");
  c_srl->add_option("--task", task, "task name: TR, TC or TE")->required();

  CLI::App* c_rl = app.add_subcommand(
      "rl-train", "train a PPO teacher on the encoded states");
  c_rl->add_option("--task", task, "task name: TR, TC or TE")->required();

  CLI::App* c_gen = app.add_subcommand(
      "gen-distill", "generate a soft-labelled dataset from a teacher");
  c_gen->add_option("--task", task, "task name: TR, TC or TE")->required();
  c_gen->add_option("--mode", mode,
                    "on_policy, grid_walker or random_walker "
                    "(default: configured mode)");

  CLI::App* c_distill = app.add_subcommand(
      "distill", "train the raw-pixel student from dataset files");
  c_distill->add_option("--dataset", dataset_paths,
                        "dataset file (repeatable; default: all datasets in "
                        "the output directory)");

  CLI::App* c_eval =
      app.add_subcommand("eval", "evaluate a saved policy on a task");
  c_eval->add_option("--policy", policy_path, "teacher or student weight file")
      ->required();
  c_eval->add_option("--task", task, "task name: TR, TC or TE")->required();

  app.add_subcommand("pipeline",
                     "run the full sequential multi-task pipeline");
  app.add_subcommand("finetune-baseline",
                     "catastrophic-forgetting baseline on the first two tasks");
  app.add_subcommand("checkpoint-sweep",
                     "distill students from successive teacher checkpoints");
  app.add_subcommand("compare-losses",
                     "compare distillation losses across seeds");
  CLI::App* c_mem =
      app.add_subcommand("memory-report", "byte census of stored artifacts");
  c_mem->add_option("--dir", report_dir,
                    "directory to scan (default: output directory)");

  CLI11_PARSE(app, argc, argv);

  discorl_config* cfg = nullptr;
  discorl_status s = config_path.empty()
                         ? discorl_config_create(&cfg)
                         : discorl_config_load(config_path.c_str(), &cfg);
  if (s != DISCORL_OK) return fail(s);
  if (seed_set) discorl_config_set_seed(cfg, seed);
  if (!out_dir.empty()) discorl_config_set_out_dir(cfg, out_dir.c_str());
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      discorl_config_free(cfg);
      return 2;
    }
    s = discorl_config_set(cfg, kv.substr(0, eq).c_str(),
                           kv.substr(eq + 1).c_str());
    if (s != DISCORL_OK) {
      int code = fail(s);
      discorl_config_free(cfg);
      return code;
    }
  }

  if (c_srl->parsed()) {
    s = discorl_srl_train(cfg, task.c_str());
  } else if (c_rl->parsed()) {
    s = discorl_rl_train(cfg, task.c_str());
  } else if (c_gen->parsed()) {
    s = discorl_gen_distill(cfg, task.c_str(),
                            mode.empty() ? nullptr : mode.c_str());
  } else if (c_distill->parsed()) {
    std::vector<const char*> paths;
    for (const std::string& p : dataset_paths) paths.push_back(p.c_str());
    s = discorl_distill(cfg, paths.empty() ? nullptr : paths.data(),
                        paths.size());
  } else if (c_eval->parsed()) {
    double mean_norm = 0.0;
    s = discorl_eval(cfg, policy_path.c_str(), task.c_str(), &mean_norm);
    if (s == DISCORL_OK)
      std::printf("task=%s policy=%s mean_normalized=%.4f\n", task.c_str(),
                  policy_path.c_str(), mean_norm);
  } else if (app.got_subcommand("pipeline")) {
    s = discorl_pipeline(cfg);
  } else if (app.got_subcommand("finetune-baseline")) {
    s = discorl_finetune_baseline(cfg);
  } else if (app.got_subcommand("checkpoint-sweep")) {
    s = discorl_checkpoint_sweep(cfg);
  } else if (app.got_subcommand("compare-losses")) {
    s = discorl_compare_losses(cfg);
  } else if (c_mem->parsed()) {
    s = discorl_memory_report(cfg,
                              report_dir.empty() ? nullptr
                                                 : report_dir.c_str());
  }

  int code = s == DISCORL_OK ? 0 : fail(s);
  discorl_config_free(cfg);
  return code;
}
