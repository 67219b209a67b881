#include <doctest.h>

#include <algorithm>
#include <json.hpp>
#include <set>

#include "topoaug/error.hpp"
#include "topoaug/topology.hpp"

using namespace topoaug;

namespace {

std::size_t count_kind(const Topology& t, NodeKind kind) {
  return static_cast<std::size_t>(std::count_if(t.nodes().begin(), t.nodes().end(),
                                                [kind](const Node& n) { return n.kind == kind; }));
}

}  // namespace

TEST_CASE("fat-tree k=4 has the textbook element counts") {
  const Topology t = build_fattree(4);
  CHECK(count_kind(t, NodeKind::host) == 16);
  CHECK(count_kind(t, NodeKind::edge) == 8);
  CHECK(count_kind(t, NodeKind::aggregation) == 8);
  CHECK(count_kind(t, NodeKind::core) == 4);
  CHECK(count_kind(t, NodeKind::optical) == 1);
  CHECK(t.rack_count() == 8);
  CHECK(t.candidates().size() == 28);
  const auto ethernet = std::count_if(t.links().begin(), t.links().end(),
                                      [](const Link& l) { return l.kind == LinkKind::ethernet; });
  CHECK(ethernet == 48);
  CHECK(t.ethernet_connected());
}

TEST_CASE("fat-tree node order is hosts, edge, aggregation, core, optical") {
  const Topology t = build_fattree(4);
  NodeKind last = NodeKind::host;
  for (const Node& n : t.nodes()) {
    CHECK(static_cast<int>(n.kind) >= static_cast<int>(last));
    last = n.kind;
  }
  for (std::size_t i = 0; i < t.nodes().size(); ++i) CHECK(t.nodes()[i].index == static_cast<int>(i));
}

TEST_CASE("fat-tree rejects odd or tiny k") {
  CHECK_THROWS_AS(build_fattree(3), ParameterError);
  CHECK_THROWS_AS(build_fattree(0), ParameterError);
  CHECK_THROWS_AS(build_fattree(-2), ParameterError);
}

TEST_CASE("larger fat-trees scale as expected") {
  for (int k : {2, 6, 8}) {
    const Topology t = build_fattree(k);
    CHECK(count_kind(t, NodeKind::host) == static_cast<std::size_t>(k * k * k / 4));
    CHECK(count_kind(t, NodeKind::core) == static_cast<std::size_t>(k * k / 4));
    CHECK(t.rack_count() == static_cast<std::size_t>(k * k / 2));
    CHECK(t.ethernet_connected());
  }
}

TEST_CASE("VL2 wiring: every ToR dual-homes, every aggregation reaches every intermediate") {
  const Topology t = build_vl2(8, 4, 2, 2);
  CHECK(count_kind(t, NodeKind::host) == 16);
  CHECK(count_kind(t, NodeKind::edge) == 8);
  CHECK(count_kind(t, NodeKind::aggregation) == 4);
  CHECK(count_kind(t, NodeKind::core) == 2);
  for (int r : t.racks()) {
    int uplinks = 0;
    for (const Link& l : t.links()) {
      const int other = l.a == r ? l.b : (l.b == r ? l.a : -1);
      if (other >= 0 && t.nodes()[static_cast<std::size_t>(other)].kind == NodeKind::aggregation) ++uplinks;
    }
    CHECK(uplinks == 2);
  }
  for (const Node& n : t.nodes()) {
    if (n.kind != NodeKind::aggregation) continue;
    int to_int = 0;
    for (const Link& l : t.links()) {
      const int other = l.a == n.index ? l.b : (l.b == n.index ? l.a : -1);
      if (other >= 0 && t.nodes()[static_cast<std::size_t>(other)].kind == NodeKind::core) ++to_int;
    }
    CHECK(to_int == 2);
  }
  CHECK(t.ethernet_connected());
  CHECK_THROWS_AS(build_vl2(8, 3, 2, 2), ParameterError);
  CHECK_THROWS_AS(build_vl2(0, 4, 2, 2), ParameterError);
}

TEST_CASE("candidates are all rack pairs in lexicographic order") {
  const Topology t = build_fattree(4);
  std::size_t c = 0;
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) {
      REQUIRE(c < t.candidates().size());
      CHECK(t.candidates()[c] == RackPair{i, j});
      CHECK(t.candidate_index(make_rack_pair(j, i)) == static_cast<int>(c));
      ++c;
    }
  }
  CHECK(t.candidate_index({3, 3}) == -1);
}

TEST_CASE("optical links start inactive and activation respects budget and candidates") {
  Topology t = build_fattree(4);
  CHECK(t.active_optical_count() == 0);
  const std::vector<int> four{0, 5, 9, 27};
  CHECK(t.set_active_optical(four));
  CHECK(t.active_optical() == four);
  CHECK_FALSE(t.set_active_optical(four));
  const std::vector<int> five{0, 1, 2, 3, 4};
  CHECK_THROWS_AS(t.set_active_optical(five), BudgetError);
  CHECK(t.active_optical() == four);  // unchanged after a rejected request
  const std::vector<int> bogus{28};
  CHECK_THROWS_AS(t.set_active_optical(bogus), ParameterError);
  const std::vector<RackPair> pairs{{0, 4}, {1, 5}};
  CHECK(t.set_active_optical(pairs));
  CHECK(t.active_optical_count() == 2);
  const std::vector<RackPair> self{{2, 2}};
  CHECK_THROWS_AS(t.set_active_optical(self), ParameterError);
}

TEST_CASE("matching constraint forbids two links on one rack") {
  TopologyOptions opts;
  opts.optical_matching = true;
  Topology t = build_fattree(4, opts);
  const std::vector<RackPair> ok{{0, 4}, {1, 5}, {2, 6}, {3, 7}};
  CHECK(t.set_active_optical(ok));
  const std::vector<RackPair> clash{{0, 4}, {0, 5}};
  CHECK_THROWS_AS(t.set_active_optical(clash), ParameterError);
}

TEST_CASE("ECMP path counts on a k=4 fat-tree") {
  Topology t = build_fattree(4);
  // Racks 0 and 1 share pod 0; rack 4 lives in pod 2.
  const auto intra = t.ecmp_paths(0, 1);
  CHECK(intra.size() == 2);
  for (const Path& p : intra) CHECK(p.size() == 3);
  const auto inter = t.ecmp_paths(0, 4);
  CHECK(inter.size() == 4);
  for (const Path& p : inter) CHECK(p.size() == 5);
  CHECK(std::is_sorted(inter.begin(), inter.end()));

  const std::vector<RackPair> direct{{0, 4}};
  t.set_active_optical(direct);
  const auto shortcut = t.ecmp_paths(0, 4);
  REQUIRE(shortcut.size() == 1);
  CHECK(shortcut[0] == Path{t.racks()[0], t.racks()[4]});
  CHECK(t.links()[static_cast<std::size_t>(t.path_links(shortcut[0])[0])].kind == LinkKind::optical);
}

TEST_CASE("every ECMP path is a valid minimum-hop walk over active links") {
  Topology t = build_fattree(4);
  const std::vector<RackPair> some{{0, 2}, {2, 5}, {5, 7}};
  t.set_active_optical(some);
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      if (a == b) continue;
      const auto paths = t.ecmp_paths(a, b);
      REQUIRE_FALSE(paths.empty());
      const std::size_t len = paths[0].size();
      std::set<Path> unique(paths.begin(), paths.end());
      CHECK(unique.size() == paths.size());
      for (const Path& p : paths) {
        CHECK(p.size() == len);
        CHECK(p.front() == t.racks()[static_cast<std::size_t>(a)]);
        CHECK(p.back() == t.racks()[static_cast<std::size_t>(b)]);
        for (std::size_t i = 0; i + 1 < p.size(); ++i) CHECK(t.active_link_between(p[i], p[i + 1]) >= 0);
      }
    }
  }
  // Chained optical hops give rack 0 a three-hop route to rack 7.
  CHECK(t.ecmp_paths(0, 7)[0].size() == 4);
}

TEST_CASE("adjacency normalization") {
  TopologyOptions opts;
  opts.optical_overlay = false;
  const Topology plain = build_fattree(4, opts);
  const AdjacencyState a = plain.adjacency_state();
  CHECK(a.size == plain.node_count());
  for (const Link& l : plain.links()) {
    CHECK(a.at(static_cast<std::size_t>(l.a), static_cast<std::size_t>(l.b)) == 1.0);
    CHECK(a.at(static_cast<std::size_t>(l.b), static_cast<std::size_t>(l.a)) == 1.0);
  }

  Topology t = build_fattree(4);
  CHECK(t.adjacency_state().at(static_cast<std::size_t>(t.racks()[0]), static_cast<std::size_t>(t.racks()[1])) == 0.0);
  const std::vector<RackPair> one{{0, 1}};
  t.set_active_optical(one);
  const AdjacencyState b = t.adjacency_state();
  CHECK(b.at(static_cast<std::size_t>(t.racks()[0]), static_cast<std::size_t>(t.racks()[1])) == 1.0);
  const Link& eth = t.links()[0];
  CHECK(b.at(static_cast<std::size_t>(eth.a), static_cast<std::size_t>(eth.b)) == doctest::Approx(0.1));
  for (std::size_t i = 0; i < b.size; ++i) CHECK(b.at(i, i) == 0.0);
}

TEST_CASE("topology JSON lists nodes and links") {
  const Topology t = build_vl2(4, 2, 1, 1);
  const auto doc = nlohmann::json::parse(t.to_json());
  CHECK(doc.at("nodes").size() == t.node_count());
  CHECK(doc.at("links").size() == t.links().size());
}

TEST_CASE("routing rejects identical or out-of-range racks") {
  const Topology t = build_fattree(4);
  CHECK_THROWS_AS(t.ecmp_paths(0, 0), ParameterError);
  CHECK_THROWS_AS(t.ecmp_paths(0, 8), ParameterError);
}
