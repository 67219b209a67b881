#include "topoaug/baselines.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "topoaug/error.hpp"

namespace topoaug {

EpisodeResult rollout(Simulator sim, LinkPolicy& policy, std::size_t max_steps) {
  EpisodeResult result;
  StepReport report = sim.reset();
  while (!report.done && result.actions.size() < max_steps) {
    std::vector<int> action = policy.choose(sim, report);
    sim.apply_action(action);
    report = sim.step();
    result.actions.push_back(std::move(action));
    result.rewards.push_back(report.reward);
    result.total_reward += report.reward;
  }
  result.fct = sim.fct_summary();
  return result;
}

bool matching_allows(const Topology& topo, std::span<const int> chosen, int candidate) {
  if (!topo.optical_matching()) return true;
  const RackPair& p = topo.candidates()[static_cast<std::size_t>(candidate)];
  for (int c : chosen) {
    const RackPair& q = topo.candidates()[static_cast<std::size_t>(c)];
    if (p.first == q.first || p.first == q.second || p.second == q.first || p.second == q.second) {
      return false;
    }
  }
  return true;
}

std::vector<int> static_policy() { return {}; }

std::vector<int> random_policy(const Topology& topo, std::mt19937_64& rng) {
  std::vector<int> order(topo.candidates().size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> chosen;
  for (int c : order) {
    if (chosen.size() >= static_cast<std::size_t>(topo.budget())) break;
    if (matching_allows(topo, chosen, c)) chosen.push_back(c);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<int> greedy_policy(const TrafficMatrix& tm, const Topology& topo) {
  const auto& candidates = topo.candidates();
  if (!candidates.empty() && tm.racks != topo.rack_count()) {
    throw ShapeError("traffic matrix size does not match the topology's rack count");
  }
  std::vector<double> demand(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto i = static_cast<std::size_t>(candidates[c].first);
    const auto j = static_cast<std::size_t>(candidates[c].second);
    demand[c] = tm.at(i, j) + tm.at(j, i);
  }
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return demand[static_cast<std::size_t>(a)] > demand[static_cast<std::size_t>(b)];
  });
  std::vector<int> chosen;
  for (int c : order) {
    if (chosen.size() >= static_cast<std::size_t>(topo.budget())) break;
    if (matching_allows(topo, chosen, c)) chosen.push_back(c);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    const std::uint64_t num = n - k + i;
    if (result > std::numeric_limits<std::uint64_t>::max() / num) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result = result * num / i;
  }
  return result;
}

OptimalChoice optimal_policy(const Simulator& sim, std::uint64_t cap) {
  if (sim.done()) throw StateError("optimal_policy needs a simulation that is still running");
  const Topology& topo = sim.topology();
  const std::size_t n = topo.candidates().size();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(topo.budget()), n);
  const std::uint64_t total = binomial(n, k);
  if (total > cap) {
    throw ParameterError("optimal_policy would enumerate " + std::to_string(total) +
                         " subsets, above the cap of " + std::to_string(cap));
  }

  OptimalChoice best;
  best.reward = -std::numeric_limits<double>::infinity();
  std::vector<int> subset(k);
  std::iota(subset.begin(), subset.end(), 0);
  while (true) {
    bool admissible = true;
    if (topo.optical_matching()) {
      for (std::size_t i = 0; i < k && admissible; ++i) {
        admissible = matching_allows(topo, std::span<const int>(subset.data(), i), subset[i]);
      }
    }
    if (admissible) {
      Simulator trial = sim;
      trial.apply_action(subset);
      const double reward = trial.step().reward;
      ++best.evaluated;
      if (reward > best.reward) {
        best.reward = reward;
        best.links = subset;
      }
    }
    // Next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && static_cast<std::size_t>(subset[i - 1]) == n - k + i - 1) --i;
    if (i == 0) break;
    ++subset[i - 1];
    for (std::size_t j = i; j < k; ++j) subset[j] = subset[j - 1] + 1;
  }
  return best;
}

}  // namespace topoaug
