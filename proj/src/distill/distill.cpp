#include "distill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "io/container.hpp"
#include "nn/adam.hpp"
#include "nn/rng.hpp"
#include "srl/srl.hpp"

namespace discorl::distill {

using nn::Tensor;

std::string gen_mode_name(GenMode m) {
  switch (m) {
    case GenMode::OnPolicy: return "on_policy";
    case GenMode::GridWalker: return "grid_walker";
    case GenMode::RandomWalker: return "random_walker";
  }
  return "?";
}

GenMode gen_mode_from_name(const std::string& s) {
  if (s == "on_policy") return GenMode::OnPolicy;
  if (s == "grid_walker") return GenMode::GridWalker;
  if (s == "random_walker") return GenMode::RandomWalker;
  throw nn::ConfigError("unknown generation mode: " + s);
}

std::string LossChoice::name() const {
  if (kind == Kind::Mse) return "mse";
  std::ostringstream ss;
  ss << "kl_tau" << tau;
  return ss.str();
}

LossChoice LossChoice::from_name(const std::string& s) {
  LossChoice c;
  if (s == "mse") {
    c.kind = Kind::Mse;
  } else if (s == "kl") {
    c.kind = Kind::Kl;
  } else {
    throw nn::ConfigError("unknown distillation loss: " + s);
  }
  return c;
}

namespace {

struct Episode {
  std::vector<DistillItem> items;
  double reward = 0.0;
};

arena::ArenaConfig dataset_env_config(const arena::ArenaConfig& cfg) {
  arena::ArenaConfig out = cfg;
  if (out.task == arena::Task::TR) out.max_target_contacts = 10;
  return out;
}

DistillDataset keep_best_episodes(std::vector<Episode>&& episodes,
                                  size_t n_samples) {
  // Reward-per-step ranking; ties resolved by generation order.
  std::vector<size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double ra =
        episodes[a].reward / static_cast<double>(episodes[a].items.size());
    const double rb =
        episodes[b].reward / static_cast<double>(episodes[b].items.size());
    return ra > rb;
  });
  DistillDataset ds;
  uint32_t ep_id = 0;
  for (size_t idx : order) {
    if (ds.items.size() >= n_samples) break;
    for (DistillItem& item : episodes[idx].items) {
      if (ds.items.size() >= n_samples) break;
      item.episode = ep_id;
      ds.items.push_back(std::move(item));
    }
    ep_id += 1;
  }
  return ds;
}

}  // namespace

DistillDataset generate_onpolicy(const arena::ArenaConfig& cfg,
                                 const rl::TeacherPolicy& teacher,
                                 size_t n_samples, uint64_t seed) {
  if (n_samples < 1) throw nn::ConfigError("n_samples must be >= 1");
  arena::ArenaConfig env_cfg = dataset_env_config(cfg);
  arena::Arena env(env_cfg);
  nn::Rng rng(nn::derive_seed(seed, 31));
  std::vector<Episode> episodes;
  size_t total = 0;
  const size_t want = n_samples + std::max<size_t>(n_samples / 3, 1);
  uint64_t ep = 0;
  while (total < want) {
    Episode episode;
    Tensor obs = env.reset(nn::derive_seed(seed, 2000 + ep));
    while (true) {
      auto probs = teacher.action_probs(obs);
      episode.items.push_back(
          {std::make_shared<Tensor>(std::move(obs)), probs, 0});
      int action = 0;
      double u = rng.uniform(), acc = 0.0;
      for (int a = 0; a < arena::kNumActions; ++a) {
        acc += probs[a];
        if (u < acc) {
          action = a;
          break;
        }
        action = a;
      }
      arena::StepResult res = env.step(action);
      episode.reward += res.reward;
      obs = std::move(res.observation);
      if (res.done) break;
    }
    total += episode.items.size();
    episodes.push_back(std::move(episode));
    ep += 1;
  }
  DistillDataset ds = keep_best_episodes(std::move(episodes), n_samples);
  ds.task = cfg.task;
  ds.mode = GenMode::OnPolicy;
  ds.teacher_fingerprint = teacher.fingerprint();
  ds.seed = seed;
  return ds;
}

DistillDataset generate_gridwalker(const arena::ArenaConfig& cfg,
                                   const rl::TeacherPolicy& teacher,
                                   double stride, uint64_t seed) {
  std::vector<arena::Vec2> robots = arena::grid_positions(cfg, stride);
  std::vector<arena::Vec2> chasers{cfg.te.chaser_start};
  if (cfg.task == arena::Task::TE) {
    chasers.clear();
    const double c = 0.6 * cfg.half_width;
    for (double y : {-c, 0.0, c})
      for (double x : {-c, 0.0, c}) chasers.push_back({x, y});
  }
  if (robots.size() * chasers.size() > 1000000)
    throw nn::ConfigError("grid stride produces more than 1e6 samples");
  nn::Rng rng(nn::derive_seed(seed, 32));
  DistillDataset ds;
  ds.task = cfg.task;
  ds.mode = GenMode::GridWalker;
  ds.teacher_fingerprint = teacher.fingerprint();
  ds.seed = seed;
  uint32_t id = 0;
  for (const arena::Vec2& chaser : chasers) {
    for (const arena::Vec2& robot : robots) {
      arena::ArenaState st;
      st.robot = robot;
      st.position_history.push_back(robot);
      st.chaser = chaser;
      if (cfg.domain_randomization)
        st.background = {rng.uniform(), rng.uniform(), rng.uniform()};
      Tensor obs = arena::render(st, cfg);
      auto probs = teacher.action_probs(obs);
      ds.items.push_back({std::make_shared<Tensor>(std::move(obs)), probs, id});
      id += 1;
    }
  }
  return ds;
}

DistillDataset generate_randomwalker(const arena::ArenaConfig& cfg,
                                     const rl::TeacherPolicy& teacher,
                                     size_t n_samples, uint64_t seed) {
  if (n_samples < 1) throw nn::ConfigError("n_samples must be >= 1");
  arena::ArenaConfig env_cfg = dataset_env_config(cfg);
  arena::Arena env(env_cfg);
  nn::Rng rng(nn::derive_seed(seed, 33));
  rl::PolicyNets walker = rl::make_policy(rl::InputMode::RawPixels, 0,
                                          cfg.render_size,
                                          nn::derive_seed(seed, 34));
  DistillDataset ds;
  ds.task = cfg.task;
  ds.mode = GenMode::RandomWalker;
  ds.teacher_fingerprint = teacher.fingerprint();
  ds.seed = seed;
  uint64_t ep = 0;
  Tensor obs = env.reset(nn::derive_seed(seed, 3000 + ep));
  uint32_t ep_id = 0;
  while (ds.items.size() < n_samples) {
    auto teacher_probs = teacher.action_probs(obs);
    Tensor logits = walker.pi.forward(srl::obs_to_chw(obs));
    Tensor wprobs = nn::softmax(logits);
    int action = arena::kNumActions - 1;
    double u = rng.uniform(), acc = 0.0;
    for (int a = 0; a < arena::kNumActions; ++a) {
      acc += wprobs[a];
      if (u < acc) {
        action = a;
        break;
      }
    }
    ds.items.push_back(
        {std::make_shared<Tensor>(std::move(obs)), teacher_probs, ep_id});
    arena::StepResult res = env.step(action);
    obs = std::move(res.observation);
    if (res.done) {
      ep += 1;
      ep_id += 1;
      obs = env.reset(nn::derive_seed(seed, 3000 + ep));
    }
  }
  return ds;
}

std::pair<DistillDataset, DistillDataset> split_by_episode(
    const DistillDataset& ds, double val_frac, uint64_t seed) {
  std::vector<uint32_t> eps;
  for (const DistillItem& item : ds.items)
    if (eps.empty() || eps.back() != item.episode) eps.push_back(item.episode);
  std::sort(eps.begin(), eps.end());
  eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
  nn::Rng rng(nn::derive_seed(seed, 41));
  for (size_t i = eps.size(); i > 1; --i)
    std::swap(eps[i - 1], eps[rng.uniform_int(i)]);
  size_t n_val = static_cast<size_t>(
      std::llround(val_frac * static_cast<double>(eps.size())));
  if (eps.size() >= 2 && n_val == 0 && val_frac > 0.0) n_val = 1;
  std::vector<bool> is_val_ep;
  uint32_t max_ep = 0;
  for (uint32_t e : eps) max_ep = std::max(max_ep, e);
  is_val_ep.assign(max_ep + 1, false);
  for (size_t i = 0; i < n_val; ++i) is_val_ep[eps[i]] = true;

  DistillDataset train = ds, val = ds;
  train.items.clear();
  val.items.clear();
  train.split = SplitTag::Train;
  val.split = SplitTag::Val;
  for (const DistillItem& item : ds.items)
    (is_val_ep[item.episode] ? val : train).items.push_back(item);
  return {std::move(train), std::move(val)};
}

DistillLoss loss_mse(const std::array<double, arena::kNumActions>& student,
                     const std::array<double, arena::kNumActions>& teacher) {
  DistillLoss out;
  out.grad = Tensor({arena::kNumActions});
  for (int a = 0; a < arena::kNumActions; ++a) {
    const double d = student[a] - teacher[a];
    out.loss += d * d;
    out.grad[a] = 2.0 * d;
  }
  return out;
}

std::array<double, arena::kNumActions> temper_probs(
    const std::array<double, arena::kNumActions>& probs, double tau) {
  if (tau <= 0.0) throw nn::ConfigError("temperature must be positive");
  Tensor logits({arena::kNumActions});
  for (int a = 0; a < arena::kNumActions; ++a)
    logits[a] = std::log(probs[a] + 1e-12) / tau;
  Tensor p = nn::softmax(logits);
  std::array<double, arena::kNumActions> out{};
  for (int a = 0; a < arena::kNumActions; ++a) out[a] = p[a];
  return out;
}

DistillLoss loss_kl_tau(
    const std::array<double, arena::kNumActions>& teacher_probs,
    const Tensor& student_logits, double tau) {
  auto p = temper_probs(teacher_probs, tau);
  Tensor q = nn::softmax(student_logits);
  DistillLoss out;
  out.grad = Tensor({arena::kNumActions});
  for (int a = 0; a < arena::kNumActions; ++a) {
    if (p[a] > 0.0)
      out.loss += p[a] * (std::log(p[a]) - std::log(std::max(q[a], 1e-300)));
    out.grad[a] = q[a] - p[a];
  }
  return out;
}

StudentPolicy make_student(int render_size, uint64_t seed) {
  using L = nn::LayerSpec;
  auto conv_out = [](size_t n, size_t k, size_t s) { return (n - k) / s + 1; };
  size_t n1 = conv_out(static_cast<size_t>(render_size), 3, 2);
  size_t n2 = conv_out(n1, 3, 2);
  nn::NetworkSpec spec;
  spec.seed = nn::derive_seed(seed, 51);
  spec.layers = {L::conv(3, 8, 3, 2),  L::relu(),
                 L::conv(8, 16, 3, 2), L::relu(),
                 L::flatten(),         L::dense(16 * n2 * n2, 128),
                 L::relu(),            L::dense(128, arena::kNumActions)};
  StudentPolicy s;
  s.net = nn::Network(spec);
  s.render_size = render_size;
  return s;
}

std::array<double, arena::kNumActions> StudentPolicy::action_probs(
    const Tensor& obs_hwc) const {
  Tensor probs = nn::softmax(net.forward(srl::obs_to_chw(obs_hwc)));
  std::array<double, arena::kNumActions> out{};
  for (int a = 0; a < arena::kNumActions; ++a) out[a] = probs[a];
  return out;
}

int StudentPolicy::greedy_action(const Tensor& obs_hwc) const {
  return rl::argmax_action(action_probs(obs_hwc));
}

namespace {

double sample_loss_and_grad(const LossChoice& loss, const Tensor& logits,
                            const std::array<double, arena::kNumActions>& teacher,
                            Tensor* grad_logits) {
  if (loss.kind == LossChoice::Kind::Kl) {
    DistillLoss l = loss_kl_tau(teacher, logits, loss.tau);
    if (grad_logits) *grad_logits = std::move(l.grad);
    return l.loss;
  }
  Tensor probs = nn::softmax(logits);
  std::array<double, arena::kNumActions> sp{};
  for (int a = 0; a < arena::kNumActions; ++a) sp[a] = probs[a];
  DistillLoss l = loss_mse(sp, teacher);
  if (grad_logits) {
    // Pull the probability-space gradient back through the softmax.
    *grad_logits = Tensor({arena::kNumActions});
    double dot = 0.0;
    for (int a = 0; a < arena::kNumActions; ++a) dot += l.grad[a] * probs[a];
    for (int a = 0; a < arena::kNumActions; ++a)
      (*grad_logits)[a] = probs[a] * (l.grad[a] - dot);
  }
  return l.loss;
}

}  // namespace

StudentPolicy train_student(const std::vector<DistillDataset>& datasets,
                            const StudentTrainConfig& cfg,
                            StudentTrainStats* stats_out) {
  if (datasets.empty()) throw nn::ConfigError("no distillation datasets");
  size_t total_items = 0;
  for (const DistillDataset& ds : datasets) total_items += ds.items.size();
  if (total_items == 0) throw nn::ConfigError("empty merged distillation dataset");

  int render_size = 0;
  for (const DistillDataset& ds : datasets)
    if (!ds.items.empty())
      render_size = static_cast<int>(ds.items.front().obs->shape[0]);

  std::vector<const DistillItem*> train_items, val_items;
  std::vector<DistillDataset> holders;  // keep split copies alive
  holders.reserve(datasets.size() * 2);
  StudentPolicy student = make_student(render_size, cfg.seed);
  for (const DistillDataset& ds : datasets) {
    student.tasks.push_back(ds.task);
    auto [train, val] = split_by_episode(ds, cfg.val_frac, cfg.seed ^ ds.seed);
    holders.push_back(std::move(train));
    holders.push_back(std::move(val));
  }
  for (size_t i = 0; i < holders.size(); i += 2) {
    for (const DistillItem& item : holders[i].items) train_items.push_back(&item);
    for (const DistillItem& item : holders[i + 1].items) val_items.push_back(&item);
  }
  if (train_items.empty()) train_items.swap(val_items);

  nn::AdamState opt;
  opt.lr = cfg.lr;
  opt.init(student.net.params());
  nn::Rng rng(nn::derive_seed(cfg.seed, 61));
  std::vector<size_t> order(train_items.size());
  std::iota(order.begin(), order.end(), size_t{0});

  StudentTrainStats stats;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params = student.net.params();

  auto eval_loss = [&](const std::vector<const DistillItem*>& items) {
    double sum = 0.0;
    for (const DistillItem* item : items) {
      Tensor logits = student.net.forward(srl::obs_to_chw(*item->obs));
      sum += sample_loss_and_grad(cfg.loss, logits, item->probs, nullptr);
    }
    return sum / static_cast<double>(items.size());
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    double train_sum = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(),
                                  start + static_cast<size_t>(cfg.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      nn::GradStore grads = student.net.zero_grads();
      for (size_t i = start; i < end; ++i) {
        const DistillItem* item = train_items[order[i]];
        nn::Cache cache;
        Tensor logits = student.net.forward(srl::obs_to_chw(*item->obs), &cache);
        Tensor g;
        train_sum += sample_loss_and_grad(cfg.loss, logits, item->probs, &g);
        for (double& v : g.data) v *= inv_b;
        student.net.backward(cache, g, grads);
      }
      nn::adam_step(opt, student.net.params(), grads);
    }
    const double train_loss =
        train_sum / static_cast<double>(train_items.size());
    if (!std::isfinite(train_loss))
      throw nn::StageError("student training diverged (non-finite loss)");
    const double val_loss =
        val_items.empty() ? train_loss : eval_loss(val_items);
    stats.train_loss.push_back(train_loss);
    stats.val_loss.push_back(val_loss);
    const bool improved = val_loss < best_val;
    if (improved) {
      best_val = val_loss;
      best_params = student.net.params();
      stats.best_epoch = epoch;
    }
    // Plateau: stop when validation loss fails to improve for one epoch.
    if (!improved) break;
  }
  student.net.params() = best_params;
  if (stats_out) *stats_out = std::move(stats);
  return student;
}

void save_student(const std::filesystem::path& path, const StudentPolicy& s) {
  io::Container c;
  c.kind = "student";
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.net.spec().layers) layers.push_back(io::layer_to_json(l));
  nlohmann::json tasks = nlohmann::json::array();
  for (arena::Task t : s.tasks) tasks.push_back(arena::task_name(t));
  c.meta = {{"layers", layers},
            {"seed", s.net.spec().seed},
            {"render_size", s.render_size},
            {"tasks", tasks}};
  std::vector<double> flat;
  for (const Tensor& p : s.net.params())
    flat.insert(flat.end(), p.data.begin(), p.data.end());
  c.add_section("params", std::move(flat));
  c.save(path);
}

StudentPolicy load_student(const std::filesystem::path& path) {
  io::Container c = io::Container::load(path);
  if (c.kind != "student") throw nn::IoError("not a student file: " + path.string());
  nn::NetworkSpec spec;
  spec.seed = c.meta.at("seed");
  for (const auto& lj : c.meta.at("layers"))
    spec.layers.push_back(io::layer_from_json(lj));
  StudentPolicy s;
  s.net = nn::Network(spec);
  s.render_size = c.meta.at("render_size");
  for (const auto& t : c.meta.at("tasks"))
    s.tasks.push_back(arena::task_from_name(t));
  const std::vector<double>& flat = c.section("params");
  size_t off = 0;
  for (Tensor& p : s.net.params()) {
    std::copy(flat.begin() + off, flat.begin() + off + p.size(),
              p.data.begin());
    off += p.size();
  }
  return s;
}

void save_distill_dataset(const std::filesystem::path& path,
                          const DistillDataset& ds) {
  io::Container c;
  c.kind = "distill-dataset";
  std::vector<size_t> obs_shape =
      ds.items.empty() ? std::vector<size_t>{} : ds.items.front().obs->shape;
  c.meta = {{"task", arena::task_name(ds.task)},
            {"mode", gen_mode_name(ds.mode)},
            {"teacher_fingerprint", ds.teacher_fingerprint},
            {"seed", ds.seed},
            {"split", ds.split == SplitTag::All
                          ? "all"
                          : (ds.split == SplitTag::Train ? "train" : "val")},
            {"obs_shape", obs_shape},
            {"n_items", ds.items.size()}};
  std::vector<double> obs_flat, probs_flat, episodes;
  obs_flat.reserve(ds.items.size() *
                   (obs_shape.empty() ? 0 : Tensor::numel(obs_shape)));
  for (const DistillItem& item : ds.items) {
    obs_flat.insert(obs_flat.end(), item.obs->data.begin(),
                    item.obs->data.end());
    probs_flat.insert(probs_flat.end(), item.probs.begin(), item.probs.end());
    episodes.push_back(static_cast<double>(item.episode));
  }
  c.add_section("observations", std::move(obs_flat));
  c.add_section("probs", std::move(probs_flat));
  c.add_section("episodes", std::move(episodes));
  c.save(path);
}

DistillDataset load_distill_dataset(const std::filesystem::path& path) {
  io::Container c = io::Container::load(path);
  if (c.kind != "distill-dataset")
    throw nn::IoError("not a distillation dataset file: " + path.string());
  DistillDataset ds;
  ds.task = arena::task_from_name(c.meta.at("task"));
  ds.mode = gen_mode_from_name(c.meta.at("mode"));
  ds.teacher_fingerprint = c.meta.at("teacher_fingerprint");
  ds.seed = c.meta.at("seed");
  const std::string split = c.meta.at("split");
  ds.split = split == "all" ? SplitTag::All
                            : (split == "train" ? SplitTag::Train : SplitTag::Val);
  std::vector<size_t> shape = c.meta.at("obs_shape").get<std::vector<size_t>>();
  const size_t per = shape.empty() ? 0 : Tensor::numel(shape);
  const auto& obs_flat = c.section("observations");
  const auto& probs_flat = c.section("probs");
  const auto& episodes = c.section("episodes");
  const size_t n = c.meta.at("n_items");
  for (size_t i = 0; i < n; ++i) {
    DistillItem item;
    item.obs = std::make_shared<Tensor>(
        shape, std::vector<double>(obs_flat.begin() + i * per,
                                   obs_flat.begin() + (i + 1) * per));
    for (int a = 0; a < arena::kNumActions; ++a)
      item.probs[a] = probs_flat[i * arena::kNumActions + a];
    item.episode = static_cast<uint32_t>(episodes[i]);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

std::vector<LossComparisonRow> compare_losses(
    const std::function<DistillDataset(arena::Task, uint64_t seed)>& gen,
    const std::vector<arena::Task>& tasks,
    const std::vector<LossChoice>& losses, const std::vector<uint64_t>& seeds,
    const StudentTrainConfig& base_cfg, const StudentEvaluator& evaluate) {
  std::vector<std::vector<double>> scores(losses.size());
  for (uint64_t seed : seeds) {
    std::vector<DistillDataset> datasets;
    for (arena::Task t : tasks) datasets.push_back(gen(t, seed));
    for (size_t li = 0; li < losses.size(); ++li) {
      StudentTrainConfig cfg = base_cfg;
      cfg.loss = losses[li];
      cfg.seed = nn::derive_seed(seed, 70 + li);
      StudentPolicy student = train_student(datasets, cfg);
      double mean = 0.0;
      for (arena::Task t : tasks) mean += evaluate(student, t);
      scores[li].push_back(mean / static_cast<double>(tasks.size()));
    }
  }
  std::vector<LossComparisonRow> rows;
  for (size_t li = 0; li < losses.size(); ++li) {
    LossComparisonRow row;
    row.loss_name = losses[li].name();
    const auto& s = scores[li];
    for (double v : s) row.mean += v;
    row.mean /= static_cast<double>(s.size());
    for (double v : s) row.stddev += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(row.stddev / static_cast<double>(s.size()));
    if (row.loss_name == "mse") row.paper_reference = 0.71;
    else if (row.loss_name == "kl_tau1") row.paper_reference = 0.76;
    else if (row.loss_name == "kl_tau0.1") row.paper_reference = 0.68;
    else if (row.loss_name == "kl_tau0.01") row.paper_reference = 0.77;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_loss_table_csv(const std::filesystem::path& path,
                          const std::vector<LossComparisonRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw nn::IoError("cannot open: " + path.string());
  f << "loss,mean_normalized,stddev,paper_reference\n";
  for (const auto& r : rows)
    f << r.loss_name << ',' << r.mean << ',' << r.stddev << ','
      << r.paper_reference << '\n';
}

}  // namespace discorl::distill
