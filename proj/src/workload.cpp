#include "topoaug/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>

#include "topoaug/error.hpp"
#include "topoaug/format.hpp"

namespace topoaug {

void SizeDistribution::validate() const {
  if (!std::isfinite(lognormal_mu)) throw ParameterError("size_lognormal_mu must be finite");
  if (!(lognormal_sigma > 0.0) || !std::isfinite(lognormal_sigma)) {
    throw ParameterError("size_lognormal_sigma must be positive");
  }
  if (!(pareto_alpha > 1.0) || !std::isfinite(pareto_alpha)) {
    throw ParameterError("size_pareto_alpha must exceed 1 (finite mean)");
  }
  if (!(pareto_min >= 1.0) || !std::isfinite(pareto_min)) {
    throw ParameterError("size_pareto_min must be at least one byte");
  }
}

double SizeDistribution::mean() const {
  const double mu = lognormal_mu;
  const double s = lognormal_sigma;
  const double z = (std::log(pareto_min) - mu) / s;
  const double body_mass = 0.5 * std::erfc(-z / std::sqrt(2.0));
  // E[L; L <= m] for L ~ LogNormal(mu, s).
  const double body = std::exp(mu + 0.5 * s * s) * 0.5 * std::erfc(-(z - s) / std::sqrt(2.0));
  const double tail = (1.0 - body_mass) * pareto_alpha * pareto_min / (pareto_alpha - 1.0);
  return body + tail;
}

void SynthParams::validate() const {
  if (rack_count < 2) throw ParameterError("rack_count must be at least 2");
  if (flow_count <= 0) throw ParameterError("flow_count must be positive");
  if (!(arrival_rate > 0.0) || !std::isfinite(arrival_rate)) {
    throw ParameterError("mean arrival rate must be positive");
  }
  sizes.validate();
  if (!(hotspot_fraction >= 0.0 && hotspot_fraction <= 1.0)) {
    throw ParameterError("hotspot_fraction must lie in [0,1]");
  }
  if (hotspot_fraction > 0.0 && hotspot_pairs.empty()) {
    throw ParameterError("hotspot_fraction > 0 requires hotspot_pairs");
  }
  for (const RackPair& p : hotspot_pairs) {
    if (p.first == p.second || p.first < 0 || p.second < 0 || p.first >= rack_count ||
        p.second >= rack_count) {
      throw ParameterError("hotspot pair out of range or degenerate");
    }
  }
}

std::vector<FlowRecord> synthesize_trace(const SynthParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::exponential_distribution<double> gap(params.arrival_rate);
  std::lognormal_distribution<double> body(params.sizes.lognormal_mu, params.sizes.lognormal_sigma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> rack(0, params.rack_count - 1);
  std::uniform_int_distribution<int> other(0, params.rack_count - 2);
  std::uniform_int_distribution<std::size_t> hot(
      0, params.hotspot_pairs.empty() ? 0 : params.hotspot_pairs.size() - 1);

  const double m = params.sizes.pareto_min;
  const double alpha = params.sizes.pareto_alpha;

  std::vector<FlowRecord> flows;
  flows.reserve(static_cast<std::size_t>(params.flow_count));
  double now = 0.0;
  for (int i = 0; i < params.flow_count; ++i) {
    now += gap(rng);
    double size = body(rng);
    if (size > m) {
      // Replace the log-normal tail by a Pareto draw above the splice point.
      size = m * std::pow(1.0 - unit(rng), -1.0 / alpha);
    }
    FlowRecord rec;
    rec.flow_id = static_cast<std::uint64_t>(i);
    rec.arrival_s = now;
    rec.bytes = static_cast<std::uint64_t>(std::max(1.0, std::round(size)));
    if (params.hotspot_fraction > 0.0 && unit(rng) < params.hotspot_fraction) {
      const RackPair& p = params.hotspot_pairs[hot(rng)];
      const bool flip = unit(rng) < 0.5;
      rec.src_rack = flip ? p.second : p.first;
      rec.dst_rack = flip ? p.first : p.second;
    } else {
      rec.src_rack = rack(rng);
      const int d = other(rng);
      rec.dst_rack = d >= rec.src_rack ? d + 1 : d;
    }
    flows.push_back(rec);
  }
  return flows;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_field(std::string_view text, T& out) {
  text = trim(text);
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && !text.empty();
}

}  // namespace

std::vector<FlowRecord> parse_trace(std::istream& in, int rack_count) {
  if (rack_count < 1) throw ParameterError("rack_count must be positive");
  std::vector<FlowRecord> flows;
  std::unordered_set<std::uint64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = view.find(',', start);
      fields.push_back(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    const auto where = "line " + std::to_string(line_no);
    if (!seen_data && !fields.empty() && trim(fields[0]) == "flow_id") {
      seen_data = true;
      continue;
    }
    seen_data = true;
    if (fields.size() != 5) throw ParseError(where + ": expected 5 comma-separated fields");
    FlowRecord rec;
    long long src = 0, dst = 0;
    if (!parse_field(fields[0], rec.flow_id) || !parse_field(fields[1], rec.arrival_s) ||
        !parse_field(fields[2], src) || !parse_field(fields[3], dst) ||
        !parse_field(fields[4], rec.bytes)) {
      throw ParseError(where + ": malformed field");
    }
    if (!std::isfinite(rec.arrival_s) || rec.arrival_s < 0.0) {
      throw ValidationError(where + ": arrival time must be a non-negative number");
    }
    if (src < 0 || dst < 0 || src >= rack_count || dst >= rack_count) {
      throw ValidationError(where + ": rack index out of range");
    }
    if (src == dst) throw ValidationError(where + ": source and destination rack are equal");
    if (rec.bytes == 0) throw ValidationError(where + ": flow size must be positive");
    if (!ids.insert(rec.flow_id).second) throw ValidationError(where + ": duplicate flow_id");
    rec.src_rack = static_cast<int>(src);
    rec.dst_rack = static_cast<int>(dst);
    flows.push_back(rec);
  }
  std::stable_sort(flows.begin(), flows.end(), [](const FlowRecord& a, const FlowRecord& b) {
    return a.arrival_s < b.arrival_s;
  });
  return flows;
}

std::vector<FlowRecord> load_trace(const std::filesystem::path& path, int rack_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open trace file " + path.string());
  return parse_trace(in, rack_count);
}

void write_trace(std::ostream& out, std::span<const FlowRecord> flows) {
  out << "flow_id,arrival_s,src_rack,dst_rack,bytes\n";
  for (const FlowRecord& f : flows) {
    out << f.flow_id << ',' << format_double(f.arrival_s) << ',' << f.src_rack << ','
        << f.dst_rack << ',' << f.bytes << '\n';
  }
}

void write_trace(const std::filesystem::path& path, std::span<const FlowRecord> flows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write trace file " + path.string());
  write_trace(out, flows);
}

TrafficMatrix traffic_matrix(std::span<const RackTransfer> transfers, double t0, double t1,
                             int rack_count) {
  if (!(t1 > t0)) throw ParameterError("traffic matrix window must satisfy t1 > t0");
  if (rack_count < 1) throw ParameterError("rack_count must be positive");
  TrafficMatrix tm;
  tm.window_start = t0;
  tm.window_end = t1;
  tm.racks = static_cast<std::size_t>(rack_count);
  tm.cells.assign(tm.racks * tm.racks, 0.0);
  // Summation order fixed by content so cells do not depend on flow order.
  std::vector<RackTransfer> ordered(transfers.begin(), transfers.end());
  std::sort(ordered.begin(), ordered.end(), [](const RackTransfer& a, const RackTransfer& b) {
    if (a.src_rack != b.src_rack) return a.src_rack < b.src_rack;
    if (a.dst_rack != b.dst_rack) return a.dst_rack < b.dst_rack;
    return a.bytes < b.bytes;
  });
  for (const RackTransfer& t : ordered) {
    if (t.src_rack == t.dst_rack) continue;
    tm.cells[static_cast<std::size_t>(t.src_rack) * tm.racks + static_cast<std::size_t>(t.dst_rack)] +=
        t.bytes;
  }
  for (double c : tm.cells) {
    tm.peak_bytes = std::max(tm.peak_bytes, c);
    tm.total_bytes += c;
  }
  if (tm.peak_bytes > 0.0) {
    for (double& c : tm.cells) c /= tm.peak_bytes;
  }
  return tm;
}

}  // namespace topoaug
