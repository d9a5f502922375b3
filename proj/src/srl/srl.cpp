#include "srl/srl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "io/container.hpp"
#include "nn/adam.hpp"
#include "nn/losses.hpp"
#include "nn/rng.hpp"

namespace discorl::srl {

using nn::Tensor;

SrlDataset collect_random_dataset(const arena::ArenaConfig& cfg,
                                  size_t n_samples, uint64_t seed) {
  if (n_samples < 1) throw nn::ConfigError("n_samples must be >= 1");
  SrlDataset ds;
  ds.task = cfg.task;
  ds.seed = seed;
  ds.transitions.reserve(n_samples);
  arena::Arena env(cfg);
  nn::Rng rng(nn::derive_seed(seed, 1));
  uint64_t episode = 0;
  auto obs = std::make_shared<Tensor>(env.reset(nn::derive_seed(seed, 1000 + episode)));
  while (ds.transitions.size() < n_samples) {
    int action = static_cast<int>(rng.uniform_int(arena::kNumActions));
    arena::StepResult res = env.step(action);
    auto next = std::make_shared<Tensor>(std::move(res.observation));
    ds.transitions.push_back({obs, next, action});
    if (res.done) {
      episode += 1;
      obs = std::make_shared<Tensor>(
          env.reset(nn::derive_seed(seed, 1000 + episode)));
    } else {
      obs = next;
    }
  }
  return ds;
}

Tensor obs_to_chw(const Tensor& obs_hwc) {
  if (obs_hwc.shape.size() != 3 || obs_hwc.shape[2] != 3)
    throw nn::UsageError("expected HWC observation with 3 channels");
  const size_t h = obs_hwc.shape[0], w = obs_hwc.shape[1];
  Tensor out({3, h, w});
  for (size_t r = 0; r < h; ++r)
    for (size_t c = 0; c < w; ++c)
      for (size_t ch = 0; ch < 3; ++ch)
        out.data[ch * h * w + r * w + c] = obs_hwc.data[(r * w + c) * 3 + ch];
  return out;
}

namespace {

size_t conv_out(size_t n, size_t k, size_t s) { return (n - k) / s + 1; }

size_t encoder_flat_dim(int render_size) {
  size_t n1 = conv_out(static_cast<size_t>(render_size), 3, 2);
  size_t n2 = conv_out(n1, 3, 2);
  return 16 * n2 * n2;
}

}  // namespace

SrlModel::SrlModel(const SrlSpec& spec) : spec_(spec) {
  using L = nn::LayerSpec;
  const size_t flat = encoder_flat_dim(spec.render_size);
  const size_t d = static_cast<size_t>(spec.state_dim);
  const size_t obs_flat = 3 * static_cast<size_t>(spec.render_size) *
                          static_cast<size_t>(spec.render_size);
  nn::NetworkSpec enc;
  enc.seed = nn::derive_seed(spec.seed, 1);
  enc.layers = {L::conv(3, 8, 3, 2), L::relu(), L::conv(8, 16, 3, 2), L::relu(),
                L::flatten(), L::dense(flat, d)};
  nn::NetworkSpec dec;
  dec.seed = nn::derive_seed(spec.seed, 2);
  dec.layers = {L::dense(d, 64), L::relu(), L::dense(64, obs_flat)};
  nn::NetworkSpec inv;
  inv.seed = nn::derive_seed(spec.seed, 3);
  inv.layers = {L::dense(2 * d, 32), L::relu(),
                L::dense(32, arena::kNumActions)};
  encoder_ = nn::Network(enc);
  decoder_ = nn::Network(dec);
  inverse_ = nn::Network(inv);
}

Tensor SrlModel::encode(const Tensor& obs_hwc) const {
  return encoder_.forward(obs_to_chw(obs_hwc));
}

SrlTrainResult train_srl(SrlModel& model,
                         const std::vector<SrlTransition>& transitions,
                         const SrlTrainConfig& cfg) {
  SrlTrainResult result;
  if (cfg.epochs == 0) return result;
  if (transitions.empty()) throw nn::ConfigError("empty SRL dataset");

  nn::AdamState opt_enc, opt_dec, opt_inv;
  opt_enc.lr = opt_dec.lr = opt_inv.lr = cfg.lr;
  opt_enc.init(model.encoder().params());
  opt_dec.init(model.decoder().params());
  opt_inv.init(model.inverse().params());

  nn::Rng rng(nn::derive_seed(cfg.seed, 7));
  std::vector<size_t> order(transitions.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t d = static_cast<size_t>(model.state_dim());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run RNG, deterministic.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    double sum_rec = 0.0, sum_inv = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(),
                                  start + static_cast<size_t>(cfg.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      nn::GradStore g_enc = model.encoder().zero_grads();
      nn::GradStore g_dec = model.decoder().zero_grads();
      nn::GradStore g_inv = model.inverse().zero_grads();
      for (size_t i = start; i < end; ++i) {
        const SrlTransition& tr = transitions[order[i]];
        Tensor chw_t = obs_to_chw(*tr.obs);
        Tensor chw_t1 = obs_to_chw(*tr.next_obs);
        nn::Cache c_enc_t, c_enc_t1, c_dec, c_inv;
        Tensor s_t = model.encoder().forward(chw_t, &c_enc_t);
        Tensor s_t1 = model.encoder().forward(chw_t1, &c_enc_t1);
        Tensor recon = model.decoder().forward(s_t, &c_dec);
        Tensor cat({2 * d});
        std::copy(s_t.data.begin(), s_t.data.end(), cat.data.begin());
        std::copy(s_t1.data.begin(), s_t1.data.end(), cat.data.begin() + d);
        Tensor logits = model.inverse().forward(cat, &c_inv);
        Tensor probs = nn::softmax(logits);

        Tensor target({recon.size()}, chw_t.data);
        nn::LossResult rec = nn::mse(recon, target);
        nn::LossResult inv =
            nn::cross_entropy(probs, static_cast<size_t>(tr.action));
        sum_rec += rec.loss;
        sum_inv += inv.loss;

        for (double& v : rec.grad.data) v *= cfg.w_rec * inv_b;
        Tensor g_s_dec = model.decoder().backward(c_dec, rec.grad, g_dec);
        for (double& v : inv.grad.data) v *= cfg.w_inv * inv_b;
        Tensor g_cat = model.inverse().backward(c_inv, inv.grad, g_inv);
        Tensor g_s_t({d}), g_s_t1({d});
        for (size_t k = 0; k < d; ++k) {
          g_s_t[k] = g_cat[k] + g_s_dec[k];
          g_s_t1[k] = g_cat[k + d];
        }
        model.encoder().backward(c_enc_t, g_s_t, g_enc);
        model.encoder().backward(c_enc_t1, g_s_t1, g_enc);
      }
      nn::adam_step(opt_enc, model.encoder().params(), g_enc);
      nn::adam_step(opt_dec, model.decoder().params(), g_dec);
      nn::adam_step(opt_inv, model.inverse().params(), g_inv);
    }
    const double n = static_cast<double>(transitions.size());
    const double rec = sum_rec / n, inv = sum_inv / n;
    const double total = cfg.w_rec * rec + cfg.w_inv * inv;
    if (!std::isfinite(total))
      throw nn::StageError("SRL training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
    result.epoch_rec.push_back(rec);
    result.epoch_inv.push_back(inv);
    result.epoch_total.push_back(total);
  }
  return result;
}

double inverse_accuracy(const SrlModel& model,
                        const std::vector<SrlTransition>& transitions) {
  if (transitions.empty()) return 0.0;
  const size_t d = static_cast<size_t>(model.state_dim());
  size_t correct = 0;
  for (const SrlTransition& tr : transitions) {
    Tensor s_t = model.encode(*tr.obs);
    Tensor s_t1 = model.encode(*tr.next_obs);
    Tensor cat({2 * d});
    std::copy(s_t.data.begin(), s_t.data.end(), cat.data.begin());
    std::copy(s_t1.data.begin(), s_t1.data.end(), cat.data.begin() + d);
    Tensor logits = model.inverse().forward(cat);
    size_t best = 0;
    for (size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[best]) best = k;
    if (static_cast<int>(best) == tr.action) correct += 1;
  }
  return static_cast<double>(correct) / static_cast<double>(transitions.size());
}

namespace {

nlohmann::json net_meta(const nn::Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.spec().layers)
    layers.push_back(io::layer_to_json(l));
  return {{"layers", layers}, {"seed", net.spec().seed}};
}

std::vector<double> flat_params(const nn::Network& net) {
  std::vector<double> flat;
  flat.reserve(net.param_count());
  for (const Tensor& p : net.params())
    flat.insert(flat.end(), p.data.begin(), p.data.end());
  return flat;
}

nn::Network net_from_meta(const nlohmann::json& meta,
                          const std::vector<double>& flat) {
  nn::NetworkSpec spec;
  spec.seed = meta.at("seed");
  for (const auto& lj : meta.at("layers"))
    spec.layers.push_back(io::layer_from_json(lj));
  nn::Network net(spec);
  size_t off = 0;
  for (Tensor& p : net.params()) {
    if (off + p.size() > flat.size())
      throw nn::IoError("srl model parameter count mismatch");
    std::copy(flat.begin() + off, flat.begin() + off + p.size(),
              p.data.begin());
    off += p.size();
  }
  return net;
}

}  // namespace

void save_srl_model(const std::filesystem::path& path, const SrlModel& model) {
  io::Container c;
  c.kind = "srl-model";
  c.meta = {{"state_dim", model.spec().state_dim},
            {"render_size", model.spec().render_size},
            {"seed", model.spec().seed},
            {"encoder", net_meta(model.encoder())},
            {"decoder", net_meta(model.decoder())},
            {"inverse", net_meta(model.inverse())}};
  c.add_section("encoder", flat_params(model.encoder()));
  c.add_section("decoder", flat_params(model.decoder()));
  c.add_section("inverse", flat_params(model.inverse()));
  c.save(path);
}

SrlModel load_srl_model(const std::filesystem::path& path) {
  io::Container c = io::Container::load(path);
  if (c.kind != "srl-model")
    throw nn::IoError("not an srl model file: " + path.string());
  SrlSpec spec;
  spec.state_dim = c.meta.at("state_dim");
  spec.render_size = c.meta.at("render_size");
  spec.seed = c.meta.at("seed");
  SrlModel model(spec);
  model.encoder() = net_from_meta(c.meta.at("encoder"), c.section("encoder"));
  model.decoder() = net_from_meta(c.meta.at("decoder"), c.section("decoder"));
  model.inverse() = net_from_meta(c.meta.at("inverse"), c.section("inverse"));
  return model;
}

void save_srl_dataset(const std::filesystem::path& path, const SrlDataset& ds) {
  io::Container c;
  c.kind = "srl-dataset";
  std::unordered_map<const Tensor*, size_t> index;
  std::vector<double> obs_flat;
  std::vector<double> obs_idx, next_idx, actions;
  std::vector<size_t> obs_shape;
  auto intern = [&](const std::shared_ptr<Tensor>& t) -> size_t {
    auto it = index.find(t.get());
    if (it != index.end()) return it->second;
    size_t id = index.size();
    index.emplace(t.get(), id);
    if (obs_shape.empty()) obs_shape = t->shape;
    obs_flat.insert(obs_flat.end(), t->data.begin(), t->data.end());
    return id;
  };
  for (const SrlTransition& tr : ds.transitions) {
    obs_idx.push_back(static_cast<double>(intern(tr.obs)));
    next_idx.push_back(static_cast<double>(intern(tr.next_obs)));
    actions.push_back(static_cast<double>(tr.action));
  }
  c.meta = {{"task", arena::task_name(ds.task)},
            {"seed", ds.seed},
            {"obs_shape", obs_shape},
            {"n_transitions", ds.transitions.size()}};
  c.add_section("observations", std::move(obs_flat));
  c.add_section("obs_index", std::move(obs_idx));
  c.add_section("next_index", std::move(next_idx));
  c.add_section("actions", std::move(actions));
  c.save(path);
}

SrlDataset load_srl_dataset(const std::filesystem::path& path) {
  io::Container c = io::Container::load(path);
  if (c.kind != "srl-dataset")
    throw nn::IoError("not an srl dataset file: " + path.string());
  SrlDataset ds;
  ds.task = arena::task_from_name(c.meta.at("task"));
  ds.seed = c.meta.at("seed");
  std::vector<size_t> shape = c.meta.at("obs_shape").get<std::vector<size_t>>();
  const size_t per = Tensor::numel(shape);
  const std::vector<double>& obs_flat = c.section("observations");
  std::vector<std::shared_ptr<Tensor>> pool;
  for (size_t off = 0; off + per <= obs_flat.size(); off += per)
    pool.push_back(std::make_shared<Tensor>(
        shape, std::vector<double>(obs_flat.begin() + off,
                                   obs_flat.begin() + off + per)));
  const auto& oi = c.section("obs_index");
  const auto& ni = c.section("next_index");
  const auto& ac = c.section("actions");
  for (size_t i = 0; i < oi.size(); ++i)
    ds.transitions.push_back({pool.at(static_cast<size_t>(oi[i])),
                              pool.at(static_cast<size_t>(ni[i])),
                              static_cast<int>(ac[i])});
  return ds;
}

}  // namespace discorl::srl
