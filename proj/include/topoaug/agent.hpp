#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "topoaug/baselines.hpp"
#include "topoaug/model.hpp"
#include "topoaug/nn.hpp"
#include "topoaug/simulator.hpp"

namespace topoaug {

struct AgentState {
  nn::Tensor<float> tm_plane;   // [1,R,R]
  nn::Tensor<float> adj_plane;  // [1,N,N]
};

AgentState encode_state(const StepReport& report);

// Sizes the input and output layers for `topo`; hidden widths come from `widths`.
Architecture architecture_for(const Topology& topo, const Architecture& widths = {});

template <typename T>
struct PolicyOutput {
  std::vector<T> logits;
  std::vector<T> link_probs;
  T value = T(0);
};

// Records one forward pass so that gradients of any scalar function of the
// outputs can be back-propagated into a parameter-shaped accumulator.
template <typename T>
class PolicyTape {
 public:
  PolicyOutput<T> forward(const ModelParams<T>& model, const AgentState& state);

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits) and
  // d(loss)/d(value) for the recorded pass.
  void backward(std::span<const T> grad_logits, T grad_value, nn::ParamSet<T>& grads) const;

  bool recorded() const { return model_ != nullptr; }

 private:
  struct Block {
    nn::Tensor<T> input, conv1, conv2, fc;  // conv/fc hold post-ReLU activations
  };
  Block run_block(const nn::Tensor<T>& input, std::size_t first_slot) const;
  void back_block(const Block& block, std::size_t first_slot, const nn::Tensor<T>& grad_fc,
                  nn::ParamSet<T>& grads) const;

  const ModelParams<T>* model_ = nullptr;
  Block tm_, adj_;
  nn::Tensor<T> joined_, trunk1_, trunk2_;
};

template <typename T>
PolicyOutput<T> forward_policy(const ModelParams<T>& model, const AgentState& state) {
  PolicyTape<T> tape;
  return tape.forward(model, state);
}

enum class SelectMode { explore, exploit };

// Exploit: the k most probable links (ties to the lower index). Explore: k
// distinct links drawn without replacement in proportion to `probs`.
// Honors the topology's matching constraint when enabled.
std::vector<int> select_action(std::span<const float> probs, const Topology& topo, SelectMode mode,
                               std::mt19937_64& rng);
std::vector<int> select_action(std::span<const float> probs, std::size_t k, SelectMode mode,
                               std::mt19937_64& rng);

enum class AdvantageMode { nstep, gae };

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double entropy_beta = 0.01;
  double value_coef = 0.5;
  int replay_n = 8;
  double lr0 = 1e-4;
  double lr_decay = 0.95;
  int workers = 4;
  int explore_episodes = 50;
  double explore_probability = 0.1;  // chance of sampling per step after the explore phase
  double grad_clip = 40.0;           // global norm; <= 0 disables
  AdvantageMode advantage = AdvantageMode::gae;
  int episodes = 200;
  int max_steps = 200;
  double reward_scale = 1e-9;
  // Standardize advantages within each replay batch before the policy loss.
  bool normalize_advantages = true;
  // Multiplier on the policy head's Xavier init range.
  double policy_init_scale = 1.0;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;
  Architecture layers;  // hidden widths only

  void validate() const;
};

struct ExperienceEntry {
  AgentState state;
  std::vector<int> chosen_links;
  double step_reward = 0.0;
  double value_estimate = 0.0;
  std::vector<float> link_probs;
};

struct ReturnsAndAdvantages {
  std::vector<double> returns;
  std::vector<double> advantages;
};

ReturnsAndAdvantages compute_returns_and_advantages(std::span<const double> rewards,
                                                    std::span<const double> values,
                                                    double bootstrap_value, double gamma,
                                                    double lambda, AdvantageMode mode);
ReturnsAndAdvantages compute_returns_and_advantages(std::span<const ExperienceEntry> log,
                                                    double bootstrap_value, const TrainConfig& cfg);

// Sum over the log of the policy, entropy and value costs, evaluated at
// `model`. Returns and advantages are treated as constants. When `grads` is
// given, the gradient is accumulated into it.
template <typename T>
T compute_loss(std::span<const ExperienceEntry> log, std::span<const double> returns,
               std::span<const double> advantages, const ModelParams<T>& model,
               const TrainConfig& cfg, nn::ParamSet<T>* grads);

// Shared parameter server: atomic snapshots and whole-gradient Adam updates
// applied in arrival order.
class ParamStore {
 public:
  explicit ParamStore(ModelParams<float> model, nn::AdamConfig adam = {});

  ModelParams<float> snapshot() const;
  std::uint64_t apply(const Gradients& grads, double lr);
  std::uint64_t version() const;

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  mutable std::mutex mutex_;
  ModelParams<float> model_;
  nn::Adam<float> adam_;
};

struct EpisodeStats {
  long long episode = 0;
  int worker = 0;
  double total_reward = 0.0;  // raw simulator reward
  double loss = 0.0;          // mean per-step loss over the episode's updates
  double lr = 0.0;
};

// Builds the simulator for a given global episode index.
using EpisodeSource = std::function<Simulator(long long episode)>;

struct TrainIo {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::optional<Checkpoint> resume;
  std::function<void(const EpisodeStats&)> on_episode;
};

struct TrainResult {
  ModelParams<float> model;
  std::vector<EpisodeStats> log;  // ordered by episode index
};

TrainResult train(const Topology& topo, const EpisodeSource& source, const TrainConfig& cfg,
                  const TrainIo& io = {});

class AgentPolicy final : public LinkPolicy {
 public:
  explicit AgentPolicy(ModelParams<float> model) : model_(std::move(model)) {}
  std::string name() const override { return "agent"; }
  std::vector<int> choose(const Simulator& sim, const StepReport& last) override;

 private:
  ModelParams<float> model_;
  std::mt19937_64 rng_{0};
};

// Exploit-mode rollout with no learning.
EpisodeResult evaluate(const ModelParams<float>& model, const Simulator& sim,
                       std::size_t max_steps = 100000);

void write_training_log(std::ostream& out, std::span<const EpisodeStats> log, bool header = true);
void write_action_trace(std::ostream& out, const EpisodeResult& result);

}  // namespace topoaug
