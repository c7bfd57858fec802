#include "amstack/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace amstack {

namespace {

struct Option {
  DeviceIndex device;
  std::string variant;
};

std::vector<std::vector<Option>> options_per_operator(const ComputationGraph& graph,
                                                      const SubstrateModel& model) {
  std::vector<std::vector<Option>> out;
  for (NodeId id : graph.operators()) {
    const Node& node = graph.node(id);
    std::vector<Option> opts;
    for (DeviceIndex d : compatible_devices(node, model)) {
      for (const auto& p : model.query(node.name, model.device(d).cls)) {
        opts.push_back(Option{d, p.variant});
      }
    }
    out.push_back(std::move(opts));
  }
  return out;
}

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t cutoff = max - max % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= cutoff);
  return x % n;
}

std::string digest(const Mapping& mapping, const ComputationGraph& graph,
                   const SubstrateModel& model) {
  std::string out;
  for (NodeId id : graph.operators()) {
    const auto& a = mapping.at(id);
    if (!out.empty()) out += '|';
    out += graph.node(id).name + "@" + model.device(a.device).id + ":" + a.variant;
  }
  return out;
}

}  // namespace

bool dominates(const ConfigPoint& a, const ConfigPoint& b) {
  bool no_worse = a.latency_ms <= b.latency_ms && a.variability_ms <= b.variability_ms &&
                  a.energy_w <= b.energy_w && a.throughput_hz >= b.throughput_hz;
  bool better = a.latency_ms < b.latency_ms || a.variability_ms < b.variability_ms ||
                a.energy_w < b.energy_w || a.throughput_hz > b.throughput_hz;
  return no_worse && better;
}

std::uint64_t assignment_space(const ComputationGraph& graph, const SubstrateModel& model) {
  const std::uint64_t cap = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 1;
  for (const auto& opts : options_per_operator(graph, model)) {
    if (opts.empty()) return 0;
    total = total > cap / opts.size() ? cap : total * opts.size();
  }
  return total;
}

ConfigPoint evaluate_config(const Mapping& mapping, const ComputationGraph& graph,
                            const SubstrateModel& model) {
  ConfigPoint point;
  point.mapping = mapping;
  auto critical = analytic_critical_path(mapping, graph, model);
  point.latency_ms = critical.latency_ms;
  point.variability_ms = std::sqrt(critical.variance);
  point.energy_w = energy_rate_w(mapping, graph, model);

  double scale = 1.0;
  for (const auto& u : utilization_check(mapping, graph, model)) {
    if (u.value > 0) scale = std::min(scale, 1.0 / u.value);
  }
  double throughput = std::numeric_limits<double>::infinity();
  for (NodeId s : graph.sinks()) {
    if (graph.node(s).is_operator()) throughput = std::min(throughput, graph.node(s).required_freq);
  }
  point.throughput_hz = std::isfinite(throughput) ? throughput * scale : 0.0;
  point.config = digest(mapping, graph, model);
  return point;
}

std::vector<ConfigPoint> enumerate_configs(const ComputationGraph& graph,
                                           const SubstrateModel& model, std::size_t limit,
                                           std::uint64_t seed) {
  auto options = options_per_operator(graph, model);
  const auto ops = graph.operators();
  std::uint64_t space = assignment_space(graph, model);
  if (space == 0 || limit == 0) throw Error("E-EMPTY", "no valid assignment exists");

  auto evaluate = [&](const std::vector<std::size_t>& choice) {
    std::vector<std::optional<Assignment>> assignment(graph.size());
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const auto& o = options[i][choice[i]];
      assignment[ops[i]] = Assignment{o.device, o.variant};
    }
    return evaluate_config(schedule_fixed(graph, model, std::move(assignment)), graph, model);
  };

  std::vector<ConfigPoint> points;
  std::vector<std::size_t> choice(ops.size(), 0);
  if (space <= limit) {
    points.reserve(space);
    for (std::uint64_t n = 0; n < space; ++n) {
      points.push_back(evaluate(choice));
      for (std::size_t i = ops.size(); i-- > 0;) {
        if (++choice[i] < options[i].size()) break;
        choice[i] = 0;
      }
    }
    return points;
  }

  std::mt19937_64 rng(seed);
  std::set<std::vector<std::size_t>> seen;
  points.reserve(limit);
  while (points.size() < limit) {
    for (std::size_t i = 0; i < ops.size(); ++i) choice[i] = uniform_index(rng, options[i].size());
    if (seen.insert(choice).second) points.push_back(evaluate(choice));
  }
  return points;
}

ParetoFrontier pareto_filter(const std::vector<ConfigPoint>& points) {
  ParetoFrontier frontier;
  for (const auto& p : points) {
    bool dominated = std::any_of(points.begin(), points.end(),
                                 [&](const ConfigPoint& q) { return dominates(q, p); });
    if (dominated) {
      ++frontier.dominated_count;
    } else {
      frontier.points.push_back(p);
    }
  }
  std::stable_sort(frontier.points.begin(), frontier.points.end(),
                   [](const ConfigPoint& a, const ConfigPoint& b) {
                     if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
                     return a.throughput_hz > b.throughput_hz;
                   });
  return frontier;
}

std::string envelope_to_csv(const ParetoFrontier& frontier) {
  std::ostringstream out;
  out << "latency_ms,throughput_hz,variability_ms,energy_w,config\n";
  for (const auto& p : frontier.points) {
    out << format_number(p.latency_ms) << ',' << format_number(p.throughput_hz) << ','
        << format_number(p.variability_ms) << ',' << format_number(p.energy_w) << ',' << p.config
        << '\n';
  }
  return out.str();
}

nlohmann::ordered_json envelope_to_json(const ParetoFrontier& frontier) {
  nlohmann::ordered_json j;
  auto points = nlohmann::ordered_json::array();
  for (const auto& p : frontier.points) {
    points.push_back({{"latency_ms", p.latency_ms},
                      {"throughput_hz", p.throughput_hz},
                      {"variability_ms", p.variability_ms},
                      {"energy_w", p.energy_w},
                      {"config", p.config}});
  }
  j["points"] = std::move(points);
  j["dominated_count"] = frontier.dominated_count;
  return j;
}

ParetoFrontier envelope_from_json(const nlohmann::ordered_json& j) {
  ParetoFrontier frontier;
  try {
    for (const auto& p : j.at("points")) {
      ConfigPoint point;
      point.latency_ms = p.at("latency_ms").get<double>();
      point.throughput_hz = p.at("throughput_hz").get<double>();
      point.variability_ms = p.at("variability_ms").get<double>();
      point.energy_w = p.at("energy_w").get<double>();
      point.config = p.at("config").get<std::string>();
      frontier.points.push_back(std::move(point));
    }
    frontier.dominated_count = j.at("dominated_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("E-SCHEMA", std::string("envelope: ") + e.what());
  }
  return frontier;
}

}  // namespace amstack
