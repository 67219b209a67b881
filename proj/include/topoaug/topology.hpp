#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace topoaug {

enum class NodeKind { host, edge, aggregation, core, optical };

const char* to_string(NodeKind kind);

struct Node {
  int index = 0;
  NodeKind kind = NodeKind::host;
};

enum class LinkKind { ethernet, optical };

const char* to_string(LinkKind kind);

// Undirected link. `a < b` always holds.
struct Link {
  int a = 0;
  int b = 0;
  double capacity_bps = 0.0;
  LinkKind kind = LinkKind::ethernet;
  bool active = true;
};

// Unordered pair of rack indices (positions in Topology::racks()), first < second.
struct RackPair {
  int first = 0;
  int second = 0;

  friend bool operator==(const RackPair&, const RackPair&) = default;
  friend auto operator<=>(const RackPair&, const RackPair&) = default;
};

RackPair make_rack_pair(int a, int b);

struct TopologyOptions {
  double ethernet_bps = 1e9;
  double optical_bps = 1e10;
  int budget = 4;
  bool optical_overlay = true;
  bool optical_matching = false;
};

// Dense row-major N x N matrix of normalized active-link capacities.
struct AdjacencyState {
  std::size_t size = 0;
  std::vector<double> cells;

  double at(std::size_t i, std::size_t j) const { return cells[i * size + j]; }
};

using Path = std::vector<int>;

// Data-center fabric plus a reconfigurable optical overlay of direct
// ToR-to-ToR links. The overlay switch appears as a node for bookkeeping but
// carries no links; optical links join ToRs directly.
//
// Node order is hosts, edge, aggregation, core, optical.
class Topology {
 public:
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  // Node index of each ToR, in rack order.
  const std::vector<int>& racks() const { return racks_; }
  const std::vector<RackPair>& candidates() const { return candidates_; }
  int budget() const { return budget_; }
  bool optical_matching() const { return optical_matching_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t rack_count() const { return racks_.size(); }

  // Index into candidates() of `pair`, or -1.
  int candidate_index(RackPair pair) const;
  // Link index of candidate `c`.
  int optical_link(int c) const { return optical_links_.at(static_cast<std::size_t>(c)); }

  // Active candidate indices in ascending order.
  std::vector<int> active_optical() const;
  std::size_t active_optical_count() const;

  // Activates exactly `chosen` (candidate indices); returns whether the active
  // set changed. Validates everything before mutating.
  bool set_active_optical(std::span<const int> chosen);
  bool set_active_optical(std::span<const RackPair> chosen);

  // Active link between two nodes, or -1.
  int active_link_between(int u, int v) const;

  // All minimum-hop paths between two racks over active links, in
  // lexicographic node order.
  std::vector<Path> ecmp_paths(int src_rack, int dst_rack) const;

  // Link indices traversed by a node path.
  std::vector<int> path_links(const Path& path) const;

  AdjacencyState adjacency_state() const;

  // True when every host reaches every other host with the optical overlay
  // ignored.
  bool ethernet_connected() const;

  std::string to_json() const;

  friend Topology build_fattree(int k, const TopologyOptions& options);
  friend Topology build_vl2(int num_tor, int num_agg, int num_int, int hosts_per_tor,
                            const TopologyOptions& options);

 private:
  int add_node(NodeKind kind);
  void add_link(int u, int v, double capacity, LinkKind kind, bool active);
  void finish(const TopologyOptions& options);
  std::vector<int> hop_distances(int from) const;

  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<int> racks_;
  std::vector<RackPair> candidates_;
  std::vector<int> optical_links_;
  // Link indices incident on each node, ascending by neighbour index.
  std::vector<std::vector<int>> incident_;
  int budget_ = 0;
  bool optical_matching_ = false;
};

Topology build_fattree(int k, const TopologyOptions& options = {});
Topology build_vl2(int num_tor, int num_agg, int num_int, int hosts_per_tor,
                   const TopologyOptions& options = {});

}  // namespace topoaug
