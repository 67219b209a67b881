#include "topoaug/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "topoaug/error.hpp"
#include "topoaug/format.hpp"

namespace topoaug {

AgentState encode_state(const StepReport& report) {
  AgentState state;
  const std::size_t racks = report.traffic.racks;
  state.tm_plane = nn::Tensor<float>({1, racks, racks});
  for (std::size_t i = 0; i < racks * racks; ++i) {
    state.tm_plane[i] = static_cast<float>(report.traffic.cells[i]);
  }
  const std::size_t nodes = report.adjacency.size;
  state.adj_plane = nn::Tensor<float>({1, nodes, nodes});
  for (std::size_t i = 0; i < nodes * nodes; ++i) {
    state.adj_plane[i] = static_cast<float>(report.adjacency.cells[i]);
  }
  return state;
}

Architecture architecture_for(const Topology& topo, const Architecture& widths) {
  Architecture arch = widths;
  arch.tm_size = topo.rack_count();
  arch.adj_size = topo.node_count();
  arch.actions = topo.candidates().size();
  return arch;
}

// ---------------------------------------------------------------------------
// Policy network

template <typename T>
typename PolicyTape<T>::Block PolicyTape<T>::run_block(const nn::Tensor<T>& input,
                                                       std::size_t s) const {
  const auto& p = model_->params.tensors;
  Block b;
  b.input = input;
  b.conv1 = nn::relu_forward(nn::conv2d_forward(input, p[s], p[s + 1]));
  b.conv2 = nn::relu_forward(nn::conv2d_forward(b.conv1, p[s + 2], p[s + 3]));
  b.fc = nn::relu_forward(nn::dense_forward(b.conv2, p[s + 4], p[s + 5]));
  return b;
}

template <typename T>
PolicyOutput<T> PolicyTape<T>::forward(const ModelParams<T>& model, const AgentState& state) {
  const Architecture& arch = model.arch;
  if (model.params.tensors.size() != kSlotCount) throw ShapeError("model has wrong tensor count");
  if (state.tm_plane.shape() != nn::Shape{1, arch.tm_size, arch.tm_size} ||
      state.adj_plane.shape() != nn::Shape{1, arch.adj_size, arch.adj_size}) {
    throw ShapeError("state planes " + nn::shape_string(state.tm_plane.shape()) + " / " +
                     nn::shape_string(state.adj_plane.shape()) +
                     " do not match the architecture " + arch.fingerprint());
  }
  model_ = &model;
  const auto& p = model.params.tensors;
  tm_ = run_block(state.tm_plane.template cast<T>(), kConvA1W);
  adj_ = run_block(state.adj_plane.template cast<T>(), kConvB1W);

  joined_ = nn::Tensor<T>({2 * arch.block_fc});
  std::copy(tm_.fc.values().begin(), tm_.fc.values().end(), joined_.values().begin());
  std::copy(adj_.fc.values().begin(), adj_.fc.values().end(),
            joined_.values().begin() + static_cast<std::ptrdiff_t>(arch.block_fc));
  trunk1_ = nn::relu_forward(nn::dense_forward(joined_, p[kTrunk1W], p[kTrunk1B]));
  trunk2_ = nn::relu_forward(nn::dense_forward(trunk1_, p[kTrunk2W], p[kTrunk2B]));

  PolicyOutput<T> out;
  const nn::Tensor<T> logits = nn::dense_forward(trunk2_, p[kPolicyW], p[kPolicyB]);
  out.logits.assign(logits.values().begin(), logits.values().end());
  nn::require_finite<T>(out.logits, "policy logits");
  out.link_probs = nn::softmax<T>(out.logits);
  out.value = nn::dense_forward(trunk2_, p[kValueW], p[kValueB])[0];
  if (!std::isfinite(out.value)) throw NumericError("non-finite value estimate");
  return out;
}

template <typename T>
void PolicyTape<T>::back_block(const Block& b, std::size_t s, const nn::Tensor<T>& grad_fc,
                               nn::ParamSet<T>& grads) const {
  const auto& p = model_->params.tensors;
  auto& g = grads.tensors;
  nn::Tensor<T> grad_conv2, grad_conv1;
  nn::dense_backward(b.conv2, p[s + 4], nn::relu_backward(b.fc, grad_fc), &grad_conv2, g[s + 4],
                     g[s + 5]);
  nn::conv2d_backward(b.conv1, p[s + 2], nn::relu_backward(b.conv2, grad_conv2), &grad_conv1,
                      g[s + 2], g[s + 3]);
  nn::conv2d_backward(b.input, p[s], nn::relu_backward(b.conv1, grad_conv1),
                      static_cast<nn::Tensor<T>*>(nullptr), g[s], g[s + 1]);
}

template <typename T>
void PolicyTape<T>::backward(std::span<const T> grad_logits, T grad_value,
                             nn::ParamSet<T>& grads) const {
  if (!model_) throw StateError("backward() called before forward()");
  const Architecture& arch = model_->arch;
  if (grad_logits.size() != arch.actions) throw ShapeError("logit gradient has wrong length");
  nn::require_congruent(model_->params, grads);
  const auto& p = model_->params.tensors;
  auto& g = grads.tensors;

  nn::Tensor<T> grad_trunk2_a, grad_trunk2_b;
  nn::dense_backward(trunk2_, p[kPolicyW],
                     nn::Tensor<T>({arch.actions}, std::vector<T>(grad_logits.begin(), grad_logits.end())),
                     &grad_trunk2_a, g[kPolicyW], g[kPolicyB]);
  nn::dense_backward(trunk2_, p[kValueW], nn::Tensor<T>({1}, std::vector<T>{grad_value}),
                     &grad_trunk2_b, g[kValueW], g[kValueB]);
  for (std::size_t i = 0; i < grad_trunk2_a.size(); ++i) grad_trunk2_a[i] += grad_trunk2_b[i];

  nn::Tensor<T> grad_trunk1, grad_joined;
  nn::dense_backward(trunk1_, p[kTrunk2W], nn::relu_backward(trunk2_, grad_trunk2_a), &grad_trunk1,
                     g[kTrunk2W], g[kTrunk2B]);
  nn::dense_backward(joined_, p[kTrunk1W], nn::relu_backward(trunk1_, grad_trunk1), &grad_joined,
                     g[kTrunk1W], g[kTrunk1B]);

  nn::Tensor<T> grad_a({arch.block_fc}), grad_b({arch.block_fc});
  for (std::size_t i = 0; i < arch.block_fc; ++i) {
    grad_a[i] = grad_joined[i];
    grad_b[i] = grad_joined[arch.block_fc + i];
  }
  back_block(tm_, kConvA1W, grad_a, grads);
  back_block(adj_, kConvB1W, grad_b, grads);
}

template class PolicyTape<float>;
template class PolicyTape<double>;

// ---------------------------------------------------------------------------
// Action selection

namespace {

std::vector<int> select_impl(std::span<const float> probs, std::size_t k, SelectMode mode,
                             std::mt19937_64& rng, const Topology* topo) {
  const std::size_t n = probs.size();
  k = std::min(k, n);
  std::vector<int> chosen;
  auto allowed = [&](int c) { return topo == nullptr || matching_allows(*topo, chosen, c); };

  if (mode == SelectMode::exploit) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    });
    for (int c : order) {
      if (chosen.size() >= k) break;
      if (allowed(c)) chosen.push_back(c);
    }
  } else {
    std::vector<double> weight(probs.begin(), probs.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (chosen.size() < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (weight[i] > 0.0 && !allowed(static_cast<int>(i))) weight[i] = 0.0;
        total += weight[i];
      }
      int pick = -1;
      if (total > 0.0) {
        double u = unit(rng) * total;
        for (std::size_t i = 0; i < n; ++i) {
          if (weight[i] <= 0.0) continue;
          pick = static_cast<int>(i);
          if (u < weight[i]) break;
          u -= weight[i];
        }
      } else {
        // Remaining mass underflowed: fall back to the lowest admissible index.
        for (std::size_t i = 0; i < n && pick < 0; ++i) {
          const int c = static_cast<int>(i);
          if (std::find(chosen.begin(), chosen.end(), c) == chosen.end() && allowed(c)) pick = c;
        }
      }
      if (pick < 0) break;
      chosen.push_back(pick);
      weight[static_cast<std::size_t>(pick)] = 0.0;
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

std::vector<int> select_action(std::span<const float> probs, std::size_t k, SelectMode mode,
                               std::mt19937_64& rng) {
  return select_impl(probs, k, mode, rng, nullptr);
}

std::vector<int> select_action(std::span<const float> probs, const Topology& topo, SelectMode mode,
                               std::mt19937_64& rng) {
  if (probs.size() != topo.candidates().size()) {
    throw ShapeError("policy width does not match the candidate link count");
  }
  return select_impl(probs, static_cast<std::size_t>(topo.budget()), mode, rng,
                     topo.optical_matching() ? &topo : nullptr);
}

// ---------------------------------------------------------------------------
// Returns, advantages, loss

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("gamma must lie in (0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ParameterError("gae_lambda must lie in [0,1]");
  if (!(entropy_beta >= 0.0)) throw ParameterError("entropy_beta must be non-negative");
  if (!(value_coef >= 0.0)) throw ParameterError("value_coef must be non-negative");
  if (replay_n < 1) throw ParameterError("replay_n must be positive");
  if (!(lr0 > 0.0)) throw ParameterError("lr0 must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ParameterError("lr_decay must lie in (0,1]");
  if (workers < 1) throw ParameterError("workers must be positive");
  if (explore_episodes < 0) throw ParameterError("explore_episodes must be non-negative");
  if (!(explore_probability >= 0.0 && explore_probability <= 1.0)) {
    throw ParameterError("explore_probability must lie in [0,1]");
  }
  if (episodes < 0) throw ParameterError("episodes must be non-negative");
  if (max_steps < 1) throw ParameterError("max_steps must be positive");
  if (!(reward_scale > 0.0)) throw ParameterError("reward_scale must be positive");
  if (!(policy_init_scale >= 0.0)) throw ParameterError("policy_init_scale must be non-negative");
  if (checkpoint_every < 1) throw ParameterError("checkpoint_every must be positive");
}

ReturnsAndAdvantages compute_returns_and_advantages(std::span<const double> rewards,
                                                    std::span<const double> values,
                                                    double bootstrap_value, double gamma,
                                                    double lambda, AdvantageMode mode) {
  if (rewards.size() != values.size()) throw ShapeError("rewards and values differ in length");
  const std::size_t n = rewards.size();
  ReturnsAndAdvantages out;
  out.returns.assign(n, 0.0);
  out.advantages.assign(n, 0.0);
  double running = bootstrap_value;
  double gae = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    running = rewards[i] + gamma * running;
    out.returns[i] = running;
    const double next_value = i + 1 < n ? values[i + 1] : bootstrap_value;
    const double delta = rewards[i] + gamma * next_value - values[i];
    gae = delta + gamma * lambda * gae;
    out.advantages[i] = mode == AdvantageMode::gae ? gae : out.returns[i] - values[i];
  }
  return out;
}

ReturnsAndAdvantages compute_returns_and_advantages(std::span<const ExperienceEntry> log,
                                                    double bootstrap_value, const TrainConfig& cfg) {
  std::vector<double> rewards, values;
  for (const ExperienceEntry& e : log) {
    rewards.push_back(e.step_reward);
    values.push_back(e.value_estimate);
  }
  return compute_returns_and_advantages(rewards, values, bootstrap_value, cfg.gamma, cfg.gae_lambda,
                                        cfg.advantage);
}

template <typename T>
T compute_loss(std::span<const ExperienceEntry> log, std::span<const double> returns,
               std::span<const double> advantages, const ModelParams<T>& model,
               const TrainConfig& cfg, nn::ParamSet<T>* grads) {
  if (returns.size() != log.size() || advantages.size() != log.size()) {
    throw ShapeError("returns/advantages do not align with the experience log");
  }
  const T beta = static_cast<T>(cfg.entropy_beta);
  const T value_coef = static_cast<T>(cfg.value_coef);
  T total = 0;
  PolicyTape<T> tape;
  for (std::size_t t = 0; t < log.size(); ++t) {
    const PolicyOutput<T> out = tape.forward(model, log[t].state);
    const std::vector<T> logp = nn::log_softmax<T>(out.logits);
    const T advantage = static_cast<T>(advantages[t]);
    const T target = static_cast<T>(returns[t]);

    T chosen_logp = 0;
    for (int c : log[t].chosen_links) chosen_logp += logp.at(static_cast<std::size_t>(c));
    T entropy = 0;
    for (std::size_t i = 0; i < logp.size(); ++i) entropy -= out.link_probs[i] * logp[i];
    const T err = target - out.value;
    total += -chosen_logp * advantage - beta * entropy + value_coef * err * err;

    if (grads) {
      const T k = static_cast<T>(log[t].chosen_links.size());
      std::vector<T> g(logp.size());
      for (std::size_t j = 0; j < g.size(); ++j) {
        g[j] = advantage * k * out.link_probs[j] + beta * out.link_probs[j] * (logp[j] + entropy);
      }
      for (int c : log[t].chosen_links) g[static_cast<std::size_t>(c)] -= advantage;
      tape.backward(g, T(-2) * value_coef * err, *grads);
    }
  }
  if (!std::isfinite(total)) throw NumericError("non-finite loss");
  return total;
}

template float compute_loss<float>(std::span<const ExperienceEntry>, std::span<const double>,
                                   std::span<const double>, const ModelParams<float>&,
                                   const TrainConfig&, nn::ParamSet<float>*);
template double compute_loss<double>(std::span<const ExperienceEntry>, std::span<const double>,
                                     std::span<const double>, const ModelParams<double>&,
                                     const TrainConfig&, nn::ParamSet<double>*);

// ---------------------------------------------------------------------------
// Parameter store

ParamStore::ParamStore(ModelParams<float> model, nn::AdamConfig adam)
    : model_(std::move(model)), adam_(adam) {}

ModelParams<float> ParamStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return model_;
}

std::uint64_t ParamStore::apply(const Gradients& grads, double lr) {
  std::lock_guard lock(mutex_);
  adam_.update(model_.params, grads, lr);
  return ++model_.version;
}

std::uint64_t ParamStore::version() const {
  std::lock_guard lock(mutex_);
  return model_.version;
}

Checkpoint ParamStore::checkpoint() const {
  std::lock_guard lock(mutex_);
  Checkpoint ckpt;
  ckpt.model = model_;
  ckpt.adam_steps = adam_.steps();
  ckpt.adam_first = adam_.first_moment();
  ckpt.adam_second = adam_.second_moment();
  return ckpt;
}

void ParamStore::restore(const Checkpoint& ckpt) {
  std::lock_guard lock(mutex_);
  if (ckpt.model.arch.fingerprint() != model_.arch.fingerprint()) {
    throw ValidationError("checkpoint architecture does not match the topology");
  }
  model_ = ckpt.model;
  adam_.restore(ckpt.adam_steps, ckpt.adam_first, ckpt.adam_second);
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

struct TrainShared {
  TrainShared(const Topology& t, const EpisodeSource& s, const TrainConfig& c, const TrainIo& i,
              ModelParams<float> initial)
      : topo(t), source(s), cfg(c), io(i), store(std::move(initial)) {}

  const Topology& topo;
  const EpisodeSource& source;
  const TrainConfig& cfg;
  const TrainIo& io;
  ParamStore store;
  std::atomic<long long> next_episode{0};
  std::mutex mutex;  // guards everything below
  std::vector<EpisodeStats> stats;
  std::vector<std::string> rng_states;
  long long completed = 0;
  std::exception_ptr failure;
};

// Zero mean, unit variance; a single entry (or zero spread) only centers.
void normalize(std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  for (double& v : values) v = sd > 1e-12 ? (v - mean) / sd : v - mean;
}

void save_training_checkpoint(TrainShared& shared, const std::filesystem::path& path) {
  Checkpoint ckpt = shared.store.checkpoint();
  ckpt.meta["next_episode"] = std::to_string(shared.completed);
  for (std::size_t w = 0; w < shared.rng_states.size(); ++w) {
    ckpt.meta["rng." + std::to_string(w)] = shared.rng_states[w];
  }
  save_checkpoint(path, ckpt);
}

void run_worker(TrainShared& shared, int worker, std::mt19937_64 rng) {
  const TrainConfig& cfg = shared.cfg;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ModelParams<float> local = shared.store.snapshot();

  while (true) {
    const long long episode = shared.next_episode.fetch_add(1);
    if (episode >= cfg.episodes) break;
    const double lr = nn::decay_lr(cfg.lr0, episode, cfg.lr_decay);

    Simulator sim = shared.source(episode);
    StepReport report = sim.reset();
    std::vector<ExperienceEntry> log;
    double total_reward = 0.0;
    double loss_sum = 0.0;
    std::size_t loss_steps = 0;
    int steps = 0;

    while (!report.done && steps < cfg.max_steps) {
      AgentState state = encode_state(report);
      const PolicyOutput<float> out = forward_policy(local, state);
      SelectMode mode = SelectMode::explore;
      if (episode >= cfg.explore_episodes && !(unit(rng) < cfg.explore_probability)) {
        mode = SelectMode::exploit;
      }
      std::vector<int> action = select_action(out.link_probs, shared.topo, mode, rng);
      sim.apply_action(action);
      report = sim.step();
      ++steps;
      total_reward += report.reward;
      log.push_back({std::move(state), std::move(action), report.reward * cfg.reward_scale,
                     static_cast<double>(out.value), out.link_probs});

      const bool last = report.done || steps >= cfg.max_steps;
      if (static_cast<int>(log.size()) >= cfg.replay_n || last) {
        const double bootstrap =
            report.done ? 0.0 : static_cast<double>(forward_policy(local, encode_state(report)).value);
        ReturnsAndAdvantages ra = compute_returns_and_advantages(log, bootstrap, cfg);
        if (cfg.normalize_advantages) normalize(ra.advantages);
        Gradients grads = local.params.zeros_like();
        const float loss = compute_loss<float>(log, ra.returns, ra.advantages, local, cfg, &grads);
        nn::clip_global_norm(grads, cfg.grad_clip);
        shared.store.apply(grads, lr);
        local = shared.store.snapshot();
        loss_sum += static_cast<double>(loss);
        loss_steps += log.size();
        log.clear();
      }
    }

    EpisodeStats stats;
    stats.episode = episode;
    stats.worker = worker;
    stats.total_reward = total_reward;
    stats.loss = loss_steps ? loss_sum / static_cast<double>(loss_steps) : 0.0;
    stats.lr = lr;

    std::lock_guard lock(shared.mutex);
    shared.stats.push_back(stats);
    shared.rng_states[static_cast<std::size_t>(worker)] = rng_text(rng);
    ++shared.completed;
    if (shared.io.on_episode) shared.io.on_episode(stats);
    if (!shared.io.checkpoint_dir.empty() && shared.completed % cfg.checkpoint_every == 0) {
      save_training_checkpoint(shared, shared.io.checkpoint_dir / "latest.ckpt");
    }
  }
}

}  // namespace

TrainResult train(const Topology& topo, const EpisodeSource& source, const TrainConfig& cfg,
                  const TrainIo& io) {
  cfg.validate();
  const Architecture arch = architecture_for(topo, cfg.layers);
  ModelParams<float> initial = init_params(arch, cfg.seed);
  for (float& w : initial.params.tensors[kPolicyW].values()) {
    w *= static_cast<float>(cfg.policy_init_scale);
  }
  TrainShared shared(topo, source, cfg, io, std::move(initial));
  shared.rng_states.resize(static_cast<std::size_t>(cfg.workers));

  std::vector<std::mt19937_64> rngs;
  for (int w = 0; w < cfg.workers; ++w) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(w), 0x5eedu};
    rngs.emplace_back(seq);
  }
  if (io.resume) {
    shared.store.restore(*io.resume);
    const auto it = io.resume->meta.find("next_episode");
    if (it == io.resume->meta.end()) throw ValidationError("checkpoint lacks training progress");
    shared.completed = std::stoll(it->second);
    shared.next_episode = shared.completed;
    for (int w = 0; w < cfg.workers; ++w) {
      const auto rit = io.resume->meta.find("rng." + std::to_string(w));
      if (rit != io.resume->meta.end() && !rit->second.empty()) {
        std::istringstream in(rit->second);
        in >> rngs[static_cast<std::size_t>(w)];
      }
    }
  }
  for (int w = 0; w < cfg.workers; ++w) {
    shared.rng_states[static_cast<std::size_t>(w)] = rng_text(rngs[static_cast<std::size_t>(w)]);
  }

  auto guarded = [&shared](int w, std::mt19937_64 rng) {
    try {
      run_worker(shared, w, rng);
    } catch (...) {
      std::lock_guard lock(shared.mutex);
      if (!shared.failure) shared.failure = std::current_exception();
      shared.next_episode = shared.cfg.episodes;
    }
  };
  if (cfg.workers == 1) {
    guarded(0, rngs[0]);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < cfg.workers; ++w) threads.emplace_back(guarded, w, rngs[static_cast<std::size_t>(w)]);
    for (auto& t : threads) t.join();
  }
  if (shared.failure) std::rethrow_exception(shared.failure);

  if (!io.checkpoint_dir.empty()) {
    save_training_checkpoint(shared, io.checkpoint_dir / "latest.ckpt");
  }
  TrainResult result;
  result.model = shared.store.snapshot();
  result.log = std::move(shared.stats);
  std::sort(result.log.begin(), result.log.end(),
            [](const EpisodeStats& a, const EpisodeStats& b) { return a.episode < b.episode; });
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<int> AgentPolicy::choose(const Simulator& sim, const StepReport& last) {
  const PolicyOutput<float> out = forward_policy(model_, encode_state(last));
  return select_action(out.link_probs, sim.topology(), SelectMode::exploit, rng_);
}

EpisodeResult evaluate(const ModelParams<float>& model, const Simulator& sim, std::size_t max_steps) {
  AgentPolicy policy(model);
  return rollout(sim, policy, max_steps);
}

void write_training_log(std::ostream& out, std::span<const EpisodeStats> log, bool header) {
  if (header) out << "episode,worker,total_reward,loss,lr\n";
  for (const EpisodeStats& s : log) {
    out << s.episode << ',' << s.worker << ',' << format_double(s.total_reward) << ','
        << format_double(s.loss) << ',' << format_double(s.lr) << '\n';
  }
}

void write_action_trace(std::ostream& out, const EpisodeResult& result) {
  out << "step,link_indices\n";
  for (std::size_t i = 0; i < result.actions.size(); ++i) {
    out << i << ',';
    for (std::size_t j = 0; j < result.actions[i].size(); ++j) {
      if (j) out << ';';
      out << result.actions[i][j];
    }
    out << '\n';
  }
}

}  // namespace topoaug
