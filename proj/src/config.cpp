#include "topoaug/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "topoaug/error.hpp"
#include "topoaug/format.hpp"

namespace topoaug {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad(key, "expected a number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    bad(key, "expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::vector<RackPair> to_pairs(const std::string& key, const std::string& v) {
  std::vector<RackPair> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos) bad(key, "expected pairs like 0-4,1-5");
    const long long a = to_int(key, trim(item.substr(0, dash)));
    const long long b = to_int(key, trim(item.substr(dash + 1)));
    if (a < 0 || b < 0 || a == b) bad(key, "rack pair '" + item + "' is invalid");
    out.push_back(make_rack_pair(static_cast<int>(a), static_cast<int>(b)));
  }
  return out;
}

std::string pairs_text(const std::vector<RackPair>& pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(pairs[i].first) + "-" + std::to_string(pairs[i].second);
  }
  return out;
}

struct Key {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
Key real_key(Field field, double lo, double hi, bool lo_open = false) {
  return {[=](RunConfig& c, const std::string& name, const std::string& v) {
            const double x = to_double(name, v);
            if (x < lo || x > hi || (lo_open && x == lo)) {
              bad(name, "value " + v + " outside " + (lo_open ? "(" : "[") + format_double(lo) + ", " +
                            format_double(hi) + "]");
            }
            field(c) = x;
          },
          [=](const RunConfig& c) { return format_double(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
Key int_key(Field field, long long lo, long long hi) {
  return {[=](RunConfig& c, const std::string& name, const std::string& v) {
            const long long x = to_int(name, v);
            if (x < lo || x > hi) {
              bad(name, "value " + v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            }
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(x);
          },
          [=](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
Key bool_key(Field field) {
  return {[=](RunConfig& c, const std::string& name, const std::string& v) { field(c) = to_bool(name, v); },
          [=](const RunConfig& c) { return bool_text(field(const_cast<RunConfig&>(c))); }};
}

constexpr double kHuge = 1e300;
constexpr long long kMaxInt = 1000000000;

const std::map<std::string, Key>& registry() {
  static const std::map<std::string, Key> keys = [] {
    std::map<std::string, Key> k;
    // [topology]
    k["topology.kind"] = {
        [](RunConfig& c, const std::string& name, const std::string& v) {
          if (v == "fattree") c.topology.kind = TopologyKind::fattree;
          else if (v == "vl2") c.topology.kind = TopologyKind::vl2;
          else bad(name, "expected fattree or vl2");
        },
        [](const RunConfig& c) { return std::string(c.topology.kind == TopologyKind::fattree ? "fattree" : "vl2"); }};
    k["topology.k"] = int_key([](RunConfig& c) -> int& { return c.topology.k; }, 2, 64);
    k["topology.vl2_tor"] = int_key([](RunConfig& c) -> int& { return c.topology.vl2_tor; }, 1, 4096);
    k["topology.vl2_agg"] = int_key([](RunConfig& c) -> int& { return c.topology.vl2_agg; }, 2, 4096);
    k["topology.vl2_int"] = int_key([](RunConfig& c) -> int& { return c.topology.vl2_int; }, 1, 4096);
    k["topology.vl2_hosts_per_tor"] =
        int_key([](RunConfig& c) -> int& { return c.topology.vl2_hosts_per_tor; }, 1, 4096);
    k["topology.ethernet_bps"] =
        real_key([](RunConfig& c) -> double& { return c.topology.options.ethernet_bps; }, 0, kHuge, true);
    k["topology.optical_bps"] =
        real_key([](RunConfig& c) -> double& { return c.topology.options.optical_bps; }, 0, kHuge, true);
    k["topology.budget_k"] = int_key([](RunConfig& c) -> int& { return c.topology.options.budget; }, 1, 100000);
    k["topology.optical_matching"] =
        bool_key([](RunConfig& c) -> bool& { return c.topology.options.optical_matching; });
    k["topology.switch_delay"] =
        real_key([](RunConfig& c) -> double& { return c.topology.switch_delay; }, 0, kHuge);

    // [workload]
    k["workload.trace"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.workload.trace = v; },
                           [](const RunConfig& c) { return c.workload.trace; }};
    k["workload.seed"] = {[](RunConfig& c, const std::string& name, const std::string& v) {
                            const long long x = to_int(name, v);
                            if (x < 0) bad(name, "seed must be non-negative");
                            c.workload.seed = static_cast<std::uint64_t>(x);
                          },
                          [](const RunConfig& c) { return std::to_string(c.workload.seed); }};
    k["workload.flow_count"] = int_key([](RunConfig& c) -> int& { return c.workload.flow_count; }, 1, kMaxInt);
    k["workload.arrival_rate"] =
        real_key([](RunConfig& c) -> double& { return c.workload.arrival_rate; }, 0, kHuge, true);
    k["workload.size_lognormal_mu"] =
        real_key([](RunConfig& c) -> double& { return c.workload.sizes.lognormal_mu; }, -kHuge, kHuge);
    k["workload.size_lognormal_sigma"] =
        real_key([](RunConfig& c) -> double& { return c.workload.sizes.lognormal_sigma; }, 0, kHuge, true);
    k["workload.size_pareto_alpha"] =
        real_key([](RunConfig& c) -> double& { return c.workload.sizes.pareto_alpha; }, 1, kHuge, true);
    k["workload.size_pareto_min"] =
        real_key([](RunConfig& c) -> double& { return c.workload.sizes.pareto_min; }, 1, kHuge);
    k["workload.hotspot_fraction"] =
        real_key([](RunConfig& c) -> double& { return c.workload.hotspot_fraction; }, 0, 1);
    k["workload.hotspot_pairs"] = {
        [](RunConfig& c, const std::string& name, const std::string& v) { c.workload.hotspot_pairs = to_pairs(name, v); },
        [](const RunConfig& c) { return pairs_text(c.workload.hotspot_pairs); }};
    k["workload.eval_seeds"] = int_key([](RunConfig& c) -> int& { return c.workload.eval_seeds; }, 1, 100000);

    // [sim]
    k["sim.step_seconds"] = real_key([](RunConfig& c) -> double& { return c.sim.step_seconds; }, 0, kHuge, true);
    k["sim.reward_per_link"] = bool_key([](RunConfig& c) -> bool& { return c.sim.reward_per_link; });

    // [agent]
    auto& a = k;
    a["agent.gamma"] = real_key([](RunConfig& c) -> double& { return c.agent.gamma; }, 0, 1, true);
    a["agent.gae_lambda"] = real_key([](RunConfig& c) -> double& { return c.agent.gae_lambda; }, 0, 1);
    a["agent.entropy_beta"] = real_key([](RunConfig& c) -> double& { return c.agent.entropy_beta; }, 0, kHuge);
    a["agent.value_coef"] = real_key([](RunConfig& c) -> double& { return c.agent.value_coef; }, 0, kHuge);
    a["agent.replay_n"] = int_key([](RunConfig& c) -> int& { return c.agent.replay_n; }, 1, kMaxInt);
    a["agent.lr0"] = real_key([](RunConfig& c) -> double& { return c.agent.lr0; }, 0, 1, true);
    a["agent.lr_decay"] = real_key([](RunConfig& c) -> double& { return c.agent.lr_decay; }, 0, 1, true);
    a["agent.workers"] = int_key([](RunConfig& c) -> int& { return c.agent.workers; }, 1, 256);
    a["agent.explore_episodes"] =
        int_key([](RunConfig& c) -> int& { return c.agent.explore_episodes; }, 0, kMaxInt);
    a["agent.explore_probability"] =
        real_key([](RunConfig& c) -> double& { return c.agent.explore_probability; }, 0, 1);
    a["agent.grad_clip"] = real_key([](RunConfig& c) -> double& { return c.agent.grad_clip; }, 0, kHuge);
    a["agent.advantage"] = {
        [](RunConfig& c, const std::string& name, const std::string& v) {
          if (v == "gae") c.agent.advantage = AdvantageMode::gae;
          else if (v == "nstep") c.agent.advantage = AdvantageMode::nstep;
          else bad(name, "expected gae or nstep");
        },
        [](const RunConfig& c) { return std::string(c.agent.advantage == AdvantageMode::gae ? "gae" : "nstep"); }};
    a["agent.normalize_advantages"] =
        bool_key([](RunConfig& c) -> bool& { return c.agent.normalize_advantages; });
    a["agent.episodes"] = int_key([](RunConfig& c) -> int& { return c.agent.episodes; }, 0, kMaxInt);
    a["agent.max_steps"] = int_key([](RunConfig& c) -> int& { return c.agent.max_steps; }, 1, kMaxInt);
    a["agent.reward_scale"] = real_key([](RunConfig& c) -> double& { return c.agent.reward_scale; }, 0, kHuge, true);
    a["agent.seed"] = {[](RunConfig& c, const std::string& name, const std::string& v) {
                         const long long x = to_int(name, v);
                         if (x < 0) bad(name, "seed must be non-negative");
                         c.agent.seed = static_cast<std::uint64_t>(x);
                       },
                       [](const RunConfig& c) { return std::to_string(c.agent.seed); }};
    a["agent.policy_init_scale"] =
        real_key([](RunConfig& c) -> double& { return c.agent.policy_init_scale; }, 0, kHuge);
    auto width = [&a](const char* name, std::size_t Architecture::*member, long long lo) {
      a[std::string("agent.") + name] = {
          [member, lo](RunConfig& c, const std::string& key, const std::string& v) {
            const long long x = to_int(key, v);
            if (x < lo || x > 100000) bad(key, "layer width out of range");
            c.agent.layers.*member = static_cast<std::size_t>(x);
          },
          [member](const RunConfig& c) { return std::to_string(c.agent.layers.*member); }};
    };
    width("conv1_filters", &Architecture::conv1_filters, 1);
    width("conv2_filters", &Architecture::conv2_filters, 1);
    width("kernel", &Architecture::kernel, 1);
    width("block_fc", &Architecture::block_fc, 1);
    width("trunk1", &Architecture::trunk1, 1);
    width("trunk2", &Architecture::trunk2, 1);

    // [output]
    k["output.dir"] = {[](RunConfig& c, const std::string& name, const std::string& v) {
                         if (v.empty()) bad(name, "output directory must not be empty");
                         c.output.dir = v;
                       },
                       [](const RunConfig& c) { return c.output.dir; }};
    k["output.checkpoint_every"] =
        int_key([](RunConfig& c) -> int& { return c.output.checkpoint_every; }, 1, kMaxInt);
    return k;
  }();
  return keys;
}

}  // namespace

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const std::string full = section + "." + key;
  const auto& keys = registry();
  const auto it = keys.find(full);
  if (it == keys.end()) throw ConfigError("unknown config key '" + full + "'");
  it->second.set(*this, full, trim(value));
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
      assignment.substr(eq + 1));
}

RunConfig RunConfig::parse(std::istream& in) {
  RunConfig cfg;
  std::string line, section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Inline comments start at whitespace followed by '#' or ';'.
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && std::isspace(static_cast<unsigned char>(line[i - 1]))) {
        line.erase(i);
        break;
      }
    }
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#' || text[0] == ';') continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(text.substr(1, text.size() - 2));
      static const std::set<std::string> sections{"topology", "workload", "sim", "agent", "output"};
      if (!sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key = trim(text.substr(0, eq));
    if (!seen.insert(section + "." + key).second) {
      throw ConfigError(where + "duplicate key " + section + "." + key);
    }
    try {
      cfg.set(section, key, text.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in);
}

void RunConfig::validate() const {
  try {
    if (topology.kind == TopologyKind::fattree && topology.k % 2 != 0) {
      throw ConfigError("topology.k must be even");
    }
    if (topology.kind == TopologyKind::vl2 && topology.vl2_agg % 2 != 0) {
      throw ConfigError("topology.vl2_agg must be even");
    }
    sim.validate();
    agent.validate();
    const Topology topo = make_topology(*this);
    for (const RackPair& p : workload.hotspot_pairs) {
      if (static_cast<std::size_t>(p.second) >= topo.rack_count()) {
        throw ConfigError("workload.hotspot_pairs names a rack beyond the topology's " +
                          std::to_string(topo.rack_count()) + " racks");
      }
    }
    if (workload.trace.empty()) make_synth_params(*this, workload.seed).validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  std::string current;
  for (const auto& [name, key] : registry()) {
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out << '\n';
      out << '[' << section << "]\n";
      current = section;
    }
    out << name.substr(dot + 1) << " = " << key.get(*this) << '\n';
  }
  return out.str();
}

Topology make_topology(const RunConfig& cfg) {
  const TopologySection& t = cfg.topology;
  if (t.kind == TopologyKind::fattree) return build_fattree(t.k, t.options);
  return build_vl2(t.vl2_tor, t.vl2_agg, t.vl2_int, t.vl2_hosts_per_tor, t.options);
}

SimConfig make_sim_config(const RunConfig& cfg) {
  SimConfig sim = cfg.sim;
  sim.switch_delay = cfg.topology.switch_delay;
  return sim;
}

SynthParams make_synth_params(const RunConfig& cfg, std::uint64_t seed) {
  SynthParams p;
  p.seed = seed;
  p.rack_count = static_cast<int>(cfg.topology.kind == TopologyKind::fattree
                                      ? cfg.topology.k * cfg.topology.k / 2
                                      : cfg.topology.vl2_tor);
  p.flow_count = cfg.workload.flow_count;
  p.arrival_rate = cfg.workload.arrival_rate;
  p.sizes = cfg.workload.sizes;
  p.hotspot_fraction = cfg.workload.hotspot_fraction;
  p.hotspot_pairs = cfg.workload.hotspot_pairs;
  return p;
}

std::uint64_t training_trace_seed(std::uint64_t seed, long long episode) {
  return ecmp_hash(ecmp_hash(seed ^ 0x747261696e000000ULL) + static_cast<std::uint64_t>(episode));
}

}  // namespace topoaug
