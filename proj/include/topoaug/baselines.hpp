#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "topoaug/simulator.hpp"
#include "topoaug/topology.hpp"
#include "topoaug/workload.hpp"

namespace topoaug {

// Chooses the optical links to activate before each simulator step.
class LinkPolicy {
 public:
  virtual ~LinkPolicy() = default;
  virtual std::string name() const = 0;
  // `last` is the report returned by the previous step (or by reset).
  virtual std::vector<int> choose(const Simulator& sim, const StepReport& last) = 0;
};

struct EpisodeResult {
  FctSummary fct;
  std::vector<std::vector<int>> actions;  // one entry per step
  std::vector<double> rewards;
  double total_reward = 0.0;
};

// Resets `sim` and plays it to completion (or `max_steps`) under `policy`.
EpisodeResult rollout(Simulator sim, LinkPolicy& policy, std::size_t max_steps = 100000);

// Candidate links that may be added to `chosen` without giving any rack a
// second active optical link.
bool matching_allows(const Topology& topo, std::span<const int> chosen, int candidate);

std::vector<int> static_policy();

std::vector<int> random_policy(const Topology& topo, std::mt19937_64& rng);

// Top-k rack pairs by symmetric demand tm[i][j] + tm[j][i]; ties go to the
// lower pair index.
std::vector<int> greedy_policy(const TrafficMatrix& tm, const Topology& topo);

struct OptimalChoice {
  std::vector<int> links;
  double reward = 0.0;
  std::size_t evaluated = 0;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 1000000;

// Number of k-subsets of n items, saturating at UINT64_MAX.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

// Simulates one step from a snapshot of `sim` for every k-subset of candidate
// links and returns the subset with the highest step reward (lexicographically
// smallest on ties).
OptimalChoice optimal_policy(const Simulator& sim, std::uint64_t cap = kDefaultEnumerationCap);

class StaticPolicy final : public LinkPolicy {
 public:
  std::string name() const override { return "static"; }
  std::vector<int> choose(const Simulator&, const StepReport&) override { return static_policy(); }
};

class RandomPolicy final : public LinkPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random"; }
  std::vector<int> choose(const Simulator& sim, const StepReport&) override {
    return random_policy(sim.topology(), rng_);
  }

 private:
  std::mt19937_64 rng_;
};

class GreedyPolicy final : public LinkPolicy {
 public:
  std::string name() const override { return "greedy"; }
  std::vector<int> choose(const Simulator& sim, const StepReport& last) override {
    return greedy_policy(last.traffic, sim.topology());
  }
};

class OptimalPolicy final : public LinkPolicy {
 public:
  explicit OptimalPolicy(std::uint64_t cap = kDefaultEnumerationCap) : cap_(cap) {}
  std::string name() const override { return "optimal"; }
  std::vector<int> choose(const Simulator& sim, const StepReport&) override {
    return optimal_policy(sim, cap_).links;
  }

 private:
  std::uint64_t cap_;
};

}  // namespace topoaug
