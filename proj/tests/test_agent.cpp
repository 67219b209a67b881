#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "topoaug/agent.hpp"
#include "topoaug/error.hpp"

using namespace topoaug;

namespace {

std::vector<FlowRecord> small_trace(std::uint64_t seed) {
  SynthParams p;
  p.seed = seed;
  p.flow_count = 30;
  p.arrival_rate = 20.0;
  return synthesize_trace(p);
}

TrainConfig tiny_config(int episodes) {
  TrainConfig cfg;
  cfg.workers = 1;
  cfg.episodes = episodes;
  cfg.replay_n = 4;
  cfg.lr0 = 1e-3;
  cfg.layers.conv1_filters = 2;
  cfg.layers.conv2_filters = 2;
  cfg.layers.block_fc = 8;
  cfg.layers.trunk1 = 8;
  cfg.layers.trunk2 = 8;
  cfg.checkpoint_every = 2;
  return cfg;
}

EpisodeSource source_for(const Topology& topo) {
  return [topo](long long episode) { return Simulator(topo, small_trace(static_cast<std::uint64_t>(episode) + 1)); };
}

bool same_params(const ModelParams<float>& a, const ModelParams<float>& b) {
  if (a.params.tensors.size() != b.params.tensors.size()) return false;
  for (std::size_t k = 0; k < a.params.tensors.size(); ++k) {
    const auto x = a.params.tensors[k].values();
    const auto y = b.params.tensors[k].values();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

std::string log_text(const TrainResult& r) {
  std::ostringstream out;
  write_training_log(out, r.log);
  return out.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("GAE returns and advantages on a two-step example") {
  const std::vector<double> rewards{1.0, 0.0};
  const std::vector<double> values{0.5, 0.2};
  const auto gae = compute_returns_and_advantages(rewards, values, 0.1, 0.99, 0.95, AdvantageMode::gae);
  CHECK(gae.advantages[1] == doctest::Approx(-0.101).epsilon(1e-12));
  CHECK(gae.advantages[0] == doctest::Approx(0.6030095).epsilon(1e-12));
  CHECK(gae.returns[1] == doctest::Approx(0.099).epsilon(1e-12));
  CHECK(gae.returns[0] == doctest::Approx(1.09801).epsilon(1e-12));

  const auto nstep = compute_returns_and_advantages(rewards, values, 0.1, 0.99, 0.95, AdvantageMode::nstep);
  CHECK(nstep.advantages[0] == doctest::Approx(1.09801 - 0.5).epsilon(1e-12));
  CHECK(nstep.advantages[1] == doctest::Approx(0.099 - 0.2).epsilon(1e-12));

  CHECK_THROWS_AS(compute_returns_and_advantages(rewards, std::vector<double>{1.0}, 0.0, 0.9, 0.9,
                                                 AdvantageMode::gae),
                  ShapeError);
}

TEST_CASE("with gamma = lambda = 1 returns are suffix sums") {
  const std::vector<double> rewards{3.0, -1.0, 2.0, 0.5};
  const std::vector<double> values{0.4, 0.1, -0.2, 0.3};
  const auto r = compute_returns_and_advantages(rewards, values, 0.0, 1.0, 1.0, AdvantageMode::gae);
  double suffix = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    suffix += rewards[i];
    CHECK(r.returns[i] == doctest::Approx(suffix));
    CHECK(r.advantages[i] == doctest::Approx(suffix - values[i]));
  }
}

TEST_CASE("exploit selection picks the top-k and ignores monotone rescaling") {
  std::mt19937_64 rng(1);
  const std::vector<float> probs{0.05f, 0.3f, 0.1f, 0.3f, 0.25f};
  const auto top = select_action(probs, 3, SelectMode::exploit, rng);
  CHECK(top == std::vector<int>{1, 3, 4});
  std::vector<float> squashed;
  for (float p : probs) squashed.push_back(p * p * 7.0f + 0.01f);
  CHECK(select_action(squashed, 3, SelectMode::exploit, rng) == top);
  CHECK(select_action(probs, 0, SelectMode::exploit, rng).empty());
}

TEST_CASE("explore selection is uniform over subsets for uniform probabilities") {
  std::mt19937_64 rng(7);
  const std::vector<float> probs(5, 0.2f);
  std::map<std::vector<int>, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto s = select_action(probs, 2, SelectMode::explore, rng);
    REQUIRE(s.size() == 2);
    CHECK(s[0] != s[1]);
    std::sort(s.begin(), s.end());
    ++counts[s];
  }
  CHECK(counts.size() == 10);
  const double expected = draws / 10.0;
  const double sigma = std::sqrt(draws * 0.1 * 0.9);
  for (const auto& [subset, n] : counts) CHECK(std::abs(n - expected) < 3 * sigma);
}

TEST_CASE("selection on a topology honors budget and matching") {
  TopologyOptions opts;
  opts.optical_matching = true;
  const Topology topo = build_fattree(4, opts);
  std::mt19937_64 rng(3);
  std::vector<float> probs(28, 1.0f / 28);
  probs[0] = 0.5f;  // racks 0-1
  probs[1] = 0.4f;  // racks 0-2, clashes with 0-1
  for (int trial = 0; trial < 200; ++trial) {
    const auto mode = trial % 2 ? SelectMode::explore : SelectMode::exploit;
    const auto a = select_action(probs, topo, mode, rng);
    CHECK(a.size() == 4);
    std::set<int> racks;
    for (int c : a) {
      racks.insert(topo.candidates()[static_cast<std::size_t>(c)].first);
      racks.insert(topo.candidates()[static_cast<std::size_t>(c)].second);
    }
    CHECK(racks.size() == 8);
  }
  CHECK_THROWS_AS(select_action(std::vector<float>(5, 0.2f), topo, SelectMode::exploit, rng), ShapeError);
}

TEST_CASE("checkpoints round-trip exactly and reject other architectures") {
  const Topology topo = build_fattree(4);
  Architecture arch = architecture_for(topo, tiny_config(1).layers);
  Checkpoint ckpt;
  ckpt.model = init_params(arch, 11);
  ckpt.model.version = 42;
  ckpt.adam_steps = 5;
  ckpt.adam_first = ckpt.model.params;
  ckpt.adam_second = ckpt.model.params;
  ckpt.meta["note"] = "hello world";
  const auto dir = fresh_dir("topoaug_ckpt_test");
  save_checkpoint(dir / "a.ckpt", ckpt);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt", &arch);
  CHECK(same_params(back.model, ckpt.model));
  CHECK(back.model.version == 42);
  CHECK(back.adam_steps == 5);
  CHECK(back.meta.at("note") == "hello world");

  Architecture other = arch;
  other.trunk2 = 9;
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", &other), ValidationError);
  CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("single-worker training is deterministic") {
  const Topology topo = build_fattree(4);
  const TrainConfig cfg = tiny_config(3);
  const TrainResult a = train(topo, source_for(topo), cfg);
  const TrainResult b = train(topo, source_for(topo), cfg);
  CHECK(log_text(a) == log_text(b));
  CHECK(same_params(a.model, b.model));
  REQUIRE(a.log.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.log[i].episode == static_cast<long long>(i));
    CHECK(std::isfinite(a.log[i].loss));
  }
  CHECK(a.log[1].lr == doctest::Approx(1e-3 * 0.95));
}

TEST_CASE("resuming from a checkpoint continues the same run") {
  const Topology topo = build_fattree(4);
  const TrainResult whole = train(topo, source_for(topo), tiny_config(4));

  const auto dir = fresh_dir("topoaug_resume_test");
  TrainIo first;
  first.checkpoint_dir = dir;
  const TrainResult half = train(topo, source_for(topo), tiny_config(2), first);
  REQUIRE(std::filesystem::exists(dir / "latest.ckpt"));

  TrainIo second;
  second.resume = load_checkpoint(dir / "latest.ckpt");
  const TrainResult rest = train(topo, source_for(topo), tiny_config(4), second);
  REQUIRE(rest.log.size() == 2);
  CHECK(rest.log[0].episode == 2);
  CHECK(rest.log[1].total_reward == whole.log[3].total_reward);
  CHECK(rest.log[1].loss == whole.log[3].loss);
  CHECK(same_params(rest.model, whole.model));
  CHECK(half.log[1].total_reward == whole.log[1].total_reward);
  std::filesystem::remove_all(dir);
}

TEST_CASE("multi-worker training completes every episode once") {
  const Topology topo = build_fattree(4);
  TrainConfig cfg = tiny_config(6);
  cfg.workers = 3;
  int seen = 0;
  TrainIo io;
  io.on_episode = [&seen](const EpisodeStats&) { ++seen; };
  const TrainResult r = train(topo, source_for(topo), cfg, io);
  CHECK(seen == 6);
  REQUIRE(r.log.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(r.log[i].episode == static_cast<long long>(i));
  CHECK(r.model.version > 0);
}

TEST_CASE("invalid training configurations are rejected") {
  TrainConfig cfg;
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = {};
  cfg.replay_n = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = {};
  cfg.lr_decay = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = {};
  cfg.explore_probability = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("evaluation is exploit-only and reproducible") {
  const Topology topo = build_fattree(4);
  const ModelParams<float> model = init_params(architecture_for(topo), 5);
  const Simulator sim(topo, small_trace(9));
  const EpisodeResult a = evaluate(model, sim);
  const EpisodeResult b = evaluate(model, sim);
  CHECK(a.actions == b.actions);
  CHECK(a.fct.flows.size() == 30);
  for (const auto& act : a.actions) CHECK(act.size() == 4);
  std::ostringstream out;
  write_action_trace(out, a);
  CHECK(out.str().rfind("step,link_indices\n0,", 0) == 0);
}
