#include "amstack/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace amstack {

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::utilization: return "UTILIZATION";
    case ViolationKind::latency: return "LATENCY";
    case ViolationKind::frequency: return "FREQUENCY";
    case ViolationKind::variance: return "VARIANCE";
    case ViolationKind::energy: return "ENERGY";
    case ViolationKind::coverage: return "COVERAGE";
  }
  return "COVERAGE";
}

namespace {

// Device classes an operator may run on: present in the substrate, profiled,
// and allowed by require_map.
std::vector<DeviceClass> candidate_classes(const Node& node, const SubstrateModel& model) {
  std::vector<DeviceClass> out;
  for (auto cls : kAllDeviceClasses) {
    if (node.required_class && *node.required_class != cls) continue;
    if (model.has_class(cls) && model.best(node.name, cls)) out.push_back(cls);
  }
  return out;
}

double mean_comm_ms(const Node& producer, const SubstrateModel& model) {
  if (!producer.is_operator() || !producer.message_size || *producer.message_size == 0) return 0.0;
  const auto n = model.devices().size();
  if (n < 2) return 0.0;
  double total = 0;
  std::size_t pairs = 0;
  for (DeviceIndex a = 0; a < n; ++a) {
    for (DeviceIndex b = a + 1; b < n; ++b) {
      total += model.comm_cost_ms(static_cast<double>(*producer.message_size), a, b);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

// Busy intervals of one lane, kept sorted by start time.
using Lane = std::vector<std::pair<double, double>>;

double earliest_slot(const Lane& lane, double ready, double duration) {
  double start = ready;
  for (const auto& [s, f] : lane) {
    if (start + duration <= s) return start;
    start = std::max(start, f);
  }
  return start;
}

void occupy(Lane& lane, double start, double finish) {
  auto it = std::lower_bound(lane.begin(), lane.end(), std::make_pair(start, finish));
  lane.insert(it, {start, finish});
}

struct Candidate {
  DeviceIndex device = 0;
  const VariantProfile* profile = nullptr;
  std::uint32_t lane = 0;
  double start = 0;
  double finish = 0;
};

class ListScheduler {
 public:
  ListScheduler(const ComputationGraph& graph, const SubstrateModel& model)
      : graph_(graph), model_(model) {
    for (const auto& d : model.devices()) lanes_.emplace_back(d.cores);
    mapping_.assignment.assign(graph.size(), std::nullopt);
    mapping_.slots.assign(graph.size(), std::nullopt);
  }

  std::vector<NodeId> priority_order() const {
    auto ranks = upward_ranks(graph_, model_);
    std::vector<NodeId> order = graph_.operators();
    std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
      if (ranks[a] != ranks[b]) return ranks[a] > ranks[b];
      return a < b;
    });
    return order;
  }

  // Earliest placement of `node` with the given variant on `device`.
  Candidate place(NodeId node, DeviceIndex device, const VariantProfile& profile) const {
    double ready = 0;
    for (auto e : graph_.in_edges(node)) {
      const Edge& edge = graph_.edges()[e];
      const auto& pred_slot = mapping_.slots[edge.producer];
      if (!pred_slot) continue;  // sources are available at t = 0
      const auto& pred = *mapping_.assignment[edge.producer];
      double bytes = static_cast<double>(graph_.node(edge.producer).message_size.value_or(0));
      ready = std::max(ready, pred_slot->finish_ms + model_.comm_cost_ms(bytes, pred.device, device));
    }
    Candidate best{device, &profile, 0, 0, 0};
    bool have = false;
    const auto& lanes = lanes_[device];
    for (std::uint32_t l = 0; l < lanes.size(); ++l) {
      double start = earliest_slot(lanes[l], ready, profile.lat_ms_mean);
      double finish = start + profile.lat_ms_mean;
      if (!have || finish < best.finish) {
        best = Candidate{device, &profile, l, start, finish};
        have = true;
      }
    }
    return best;
  }

  void commit(NodeId node, const Candidate& c) {
    occupy(lanes_[c.device][c.lane], c.start, c.finish);
    mapping_.assignment[node] = Assignment{c.device, c.profile->variant};
    mapping_.slots[node] = Slot{c.lane, c.start, c.finish};
    mapping_.makespan_ms = std::max(mapping_.makespan_ms, c.finish);
  }

  Mapping finish() {
    mapping_.utilization.clear();
    for (const auto& u : utilization_check(mapping_, graph_, model_)) {
      mapping_.utilization.push_back(u.value);
    }
    return std::move(mapping_);
  }

 private:
  const ComputationGraph& graph_;
  const SubstrateModel& model_;
  std::vector<std::vector<Lane>> lanes_;
  Mapping mapping_;
};

}  // namespace

std::vector<DeviceIndex> compatible_devices(const Node& node, const SubstrateModel& model) {
  std::vector<DeviceIndex> out;
  for (auto cls : candidate_classes(node, model)) {
    for (auto d : model.devices_of_class(cls)) out.push_back(d);
  }
  std::sort(out.begin(), out.end(), [&](DeviceIndex a, DeviceIndex b) {
    return model.device(a).id < model.device(b).id;
  });
  return out;
}

std::vector<double> upward_ranks(const ComputationGraph& graph, const SubstrateModel& model) {
  std::vector<double> rank(graph.size(), 0.0);
  const auto& topo = graph.topological_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const Node& node = graph.node(*it);
    double work = 0;
    if (node.is_operator()) {
      auto classes = candidate_classes(node, model);
      for (auto cls : classes) work += model.best(node.name, cls)->lat_ms_mean;
      if (!classes.empty()) work /= static_cast<double>(classes.size());
    }
    double tail = 0;
    double comm = mean_comm_ms(node, model);
    for (auto e : graph.out_edges(node.id)) {
      tail = std::max(tail, comm + rank[graph.edges()[e].consumer]);
    }
    rank[node.id] = work + tail;
  }
  return rank;
}

Mapping heft_schedule(const ComputationGraph& graph, const SubstrateModel& model,
                      const HeftOptions& options) {
  for (NodeId id : graph.operators()) {
    if (compatible_devices(graph.node(id), model).empty()) {
      throw Error("E-UNSCHEDULABLE", "operator '" + graph.node(id).name +
                                         "' has no compatible device in the substrate");
    }
  }
  ListScheduler sched(graph, model);
  for (NodeId id : sched.priority_order()) {
    const Node& node = graph.node(id);
    std::vector<Candidate> candidates;
    for (DeviceIndex d : compatible_devices(node, model)) {
      for (const auto& profile : model.query(node.name, model.device(d).cls)) {
        candidates.push_back(sched.place(id, d, *model.find(node.name, profile.variant, profile.cls)));
      }
    }
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.finish != b.finish) return a.finish < b.finish;
      if (a.device != b.device) return model.device(a.device).id < model.device(b.device).id;
      return a.profile->variant < b.profile->variant;
    };
    const Candidate* best = &candidates.front();
    for (const auto& c : candidates) {
      if (better(c, *best)) best = &c;
    }
    if (node.hinted_class && options.hint_window > 0) {
      double window = best->finish * (1.0 + options.hint_window);
      const Candidate* hinted = nullptr;
      for (const auto& c : candidates) {
        if (model.device(c.device).cls != *node.hinted_class || c.finish > window) continue;
        if (hinted == nullptr || better(c, *hinted)) hinted = &c;
      }
      if (hinted != nullptr) best = hinted;
    }
    sched.commit(id, *best);
  }
  return sched.finish();
}

Mapping schedule_fixed(const ComputationGraph& graph, const SubstrateModel& model,
                       std::vector<std::optional<Assignment>> assignment) {
  ListScheduler sched(graph, model);
  for (NodeId id : sched.priority_order()) {
    const Node& node = graph.node(id);
    if (!assignment.at(id)) throw Error("E-UNSCHEDULABLE", "no assignment for '" + node.name + "'");
    const auto& a = *assignment[id];
    const auto* profile = model.find(node.name, a.variant, model.device(a.device).cls);
    if (profile == nullptr) {
      throw Error("E-UNSCHEDULABLE", "variant '" + a.variant + "' of '" + node.name +
                                         "' is not profiled on " + model.device(a.device).id);
    }
    sched.commit(id, sched.place(id, a.device, *profile));
  }
  return sched.finish();
}

const VariantProfile& assigned_profile(const Mapping& mapping, const ComputationGraph& graph,
                                       const SubstrateModel& model, NodeId node) {
  const auto& a = mapping.at(node);
  const auto* p = model.find(graph.node(node).name, a.variant, model.device(a.device).cls);
  if (p == nullptr) {
    throw Error("E-UNSCHEDULABLE", "mapping references an unprofiled variant of '" +
                                       graph.node(node).name + "'");
  }
  return *p;
}

std::vector<DeviceUtilization> utilization_check(const Mapping& mapping,
                                                 const ComputationGraph& graph,
                                                 const SubstrateModel& model) {
  std::vector<double> load(model.devices().size(), 0.0);
  for (NodeId id : graph.operators()) {
    const auto& p = assigned_profile(mapping, graph, model, id);
    load[mapping.at(id).device] += p.lat_ms_mean / 1000.0 * graph.node(id).required_freq;
  }
  std::vector<DeviceUtilization> out;
  for (DeviceIndex d = 0; d < load.size(); ++d) {
    double u = load[d] / static_cast<double>(model.device(d).cores);
    out.push_back(DeviceUtilization{d, u, u > 1.0});
  }
  return out;
}

double edge_comm_ms(const Mapping& mapping, const ComputationGraph& graph,
                    const SubstrateModel& model, const Edge& edge) {
  const Node& producer = graph.node(edge.producer);
  if (!producer.is_operator()) return 0.0;
  double bytes = static_cast<double>(producer.message_size.value_or(0));
  return model.comm_cost_ms(bytes, mapping.at(edge.producer).device, mapping.at(edge.consumer).device);
}

double path_latency_ms(const Mapping& mapping, const ComputationGraph& graph,
                       const SubstrateModel& model, const Path& path) {
  double total = 0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (graph.node(path[i]).is_operator()) {
      total += assigned_profile(mapping, graph, model, path[i]).lat_ms_mean;
    }
    if (i + 1 < path.size()) {
      for (auto e : graph.out_edges(path[i])) {
        const Edge& edge = graph.edges()[e];
        if (edge.consumer == path[i + 1]) {
          total += edge_comm_ms(mapping, graph, model, edge);
          break;
        }
      }
    }
  }
  return total;
}

PathLatency analytic_critical_path(const Mapping& mapping, const ComputationGraph& graph,
                                   const SubstrateModel& model) {
  PathLatency best;
  bool have = false;
  for (const auto& path : critical_paths(graph)) {
    double lat = path_latency_ms(mapping, graph, model, path);
    if (!have || lat > best.latency_ms) {
      best.path = path;
      best.latency_ms = lat;
      have = true;
    }
  }
  for (NodeId id : best.path) {
    if (!graph.node(id).is_operator()) continue;
    double s = assigned_profile(mapping, graph, model, id).lat_ms_std;
    best.variance += s * s;
  }
  return best;
}

double energy_rate_w(const Mapping& mapping, const ComputationGraph& graph,
                     const SubstrateModel& model) {
  double watts = 0;
  for (NodeId id : graph.operators()) {
    watts += graph.node(id).required_freq * assigned_profile(mapping, graph, model, id).energy_mj /
             1000.0;
  }
  for (const auto& d : model.devices()) watts += d.idle_w;
  return watts;
}

namespace {

void check_upper(std::vector<Violation>& out, ViolationKind kind, const std::string& subject,
                 const std::string& what, double observed, double bound) {
  if (observed > bound) {
    out.push_back(Violation{kind, subject,
                            what + " " + format_number(observed) + " exceeds " + format_number(bound),
                            observed, bound, observed - bound});
  }
}

void check_lower(std::vector<Violation>& out, ViolationKind kind, const std::string& subject,
                 const std::string& what, double observed, double bound) {
  if (observed < bound) {
    out.push_back(Violation{kind, subject,
                            what + " " + format_number(observed) + " is below " + format_number(bound),
                            observed, bound, bound - observed});
  }
}

}  // namespace

FeasibilityReport admit(const ComputationGraph& graph, const SubstrateModel& model,
                        const std::vector<dsl::ContractDecl>& contracts,
                        const HeftOptions& options) {
  FeasibilityReport report;
  for (const auto& d : validate_coverage(model, graph)) {
    report.violations.push_back(Violation{ViolationKind::coverage, d.code, d.message, 0, 1, 1});
  }
  if (!report.violations.empty()) return report;

  Mapping mapping;
  try {
    mapping = heft_schedule(graph, model, options);
  } catch (const Error& e) {
    report.violations.push_back(Violation{ViolationKind::coverage, e.code(), e.what(), 0, 1, 1});
    return report;
  }

  auto& v = report.violations;
  for (const auto& u : utilization_check(mapping, graph, model)) {
    check_upper(v, ViolationKind::utilization, model.device(u.device).id, "utilization", u.value, 1.0);
  }
  for (NodeId id : graph.operators()) {
    const Node& node = graph.node(id);
    check_upper(v, ViolationKind::frequency, node.name, "latency (ms) against period",
                assigned_profile(mapping, graph, model, id).lat_ms_mean, node.period_ms());
  }

  auto critical = analytic_critical_path(mapping, graph, model);
  report.analytic_latency_ms = critical.latency_ms;
  for (const auto& c : contracts) {
    if (c.end_to_end()) {
      if (c.latency_ms) {
        check_upper(v, ViolationKind::latency, c.scope, "end-to-end latency (ms)",
                    critical.latency_ms, *c.latency_ms);
      }
      if (c.min_frequency_hz) {
        double slowest = std::numeric_limits<double>::infinity();
        for (NodeId s : graph.sinks()) {
          if (graph.node(s).is_operator()) slowest = std::min(slowest, graph.node(s).required_freq);
        }
        check_lower(v, ViolationKind::frequency, c.scope, "sink frequency (Hz)", slowest,
                    *c.min_frequency_hz);
      }
      if (c.max_latency_std_ms) {
        check_upper(v, ViolationKind::variance, c.scope, "end-to-end latency std (ms)",
                    std::sqrt(critical.variance), *c.max_latency_std_ms);
      }
      if (c.energy_w) {
        check_upper(v, ViolationKind::energy, c.scope, "energy rate (W)",
                    energy_rate_w(mapping, graph, model), *c.energy_w);
      }
      continue;
    }
    auto id = graph.find(c.scope);
    if (!id || !graph.node(*id).is_operator()) {
      v.push_back(Violation{ViolationKind::coverage, c.scope,
                            "contract scope '" + c.scope + "' is not an operator of the graph", 0,
                            1, 1});
      continue;
    }
    const Node& node = graph.node(*id);
    const auto& p = assigned_profile(mapping, graph, model, *id);
    if (c.latency_ms) {
      check_upper(v, ViolationKind::latency, c.scope, "latency (ms)", p.lat_ms_mean, *c.latency_ms);
    }
    if (c.min_frequency_hz) {
      check_lower(v, ViolationKind::frequency, c.scope, "frequency (Hz)", node.required_freq,
                  *c.min_frequency_hz);
    }
    if (c.max_latency_std_ms) {
      check_upper(v, ViolationKind::variance, c.scope, "latency std (ms)", p.lat_ms_std,
                  *c.max_latency_std_ms);
    }
    if (c.energy_w) {
      check_upper(v, ViolationKind::energy, c.scope, "energy rate (W)",
                  node.required_freq * p.energy_mj / 1000.0, *c.energy_w);
    }
  }

  report.feasible = v.empty();
  report.candidate = mapping;
  if (report.feasible) report.mapping = std::move(mapping);
  return report;
}

std::vector<Micros> proportional_split(Micros total_us, std::span<const double> weights) {
  std::vector<Micros> parts(weights.size(), 0);
  if (weights.empty()) return parts;
  long double sum = 0;
  for (double w : weights) sum += w;
  std::vector<long double> frac(weights.size(), 0);
  Micros assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    long double share = sum > 0 ? static_cast<long double>(total_us) * weights[i] / sum
                                : static_cast<long double>(total_us) / weights.size();
    long double whole = std::floor(share);
    parts[i] = static_cast<Micros>(whole);
    frac[i] = share - whole;
    assigned += parts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  Micros remainder = total_us - assigned;
  for (std::size_t k = 0; remainder > 0; k = (k + 1) % order.size(), --remainder) {
    ++parts[order[k]];
  }
  return parts;
}

std::vector<SubContract> decompose_contract(double latency_bound_ms, const Path& path,
                                            const ComputationGraph& graph,
                                            const SubstrateModel& model, const Mapping& mapping,
                                            std::string derived_from) {
  std::vector<NodeId> ops;
  std::vector<double> latencies;
  for (NodeId id : path) {
    if (!graph.node(id).is_operator()) continue;
    ops.push_back(id);
    latencies.push_back(assigned_profile(mapping, graph, model, id).lat_ms_mean);
  }
  if (ops.empty()) throw Error("E-EMPTYPATH", "contract path has no operator nodes");
  auto total = static_cast<Micros>(std::llround(latency_bound_ms * 1000.0));
  auto parts = proportional_split(total, latencies);
  std::vector<SubContract> out;
  for (std::size_t i = 0; i < ops.size(); ++i) out.push_back(SubContract{ops[i], parts[i], derived_from});
  return out;
}

std::vector<std::optional<Micros>> node_budgets(const ComputationGraph& graph,
                                                const SubstrateModel& model,
                                                const Mapping& mapping,
                                                const std::vector<dsl::ContractDecl>& contracts) {
  std::vector<std::optional<Micros>> budget(graph.size());
  auto tighten = [&](NodeId id, Micros value) {
    if (!budget[id] || value < *budget[id]) budget[id] = value;
  };
  for (const auto& c : contracts) {
    if (!c.latency_ms) continue;
    if (c.end_to_end()) {
      for (const auto& path : critical_paths(graph)) {
        bool has_op = std::any_of(path.begin(), path.end(),
                                  [&](NodeId id) { return graph.node(id).is_operator(); });
        if (!has_op) continue;
        for (const auto& sc : decompose_contract(*c.latency_ms, path, graph, model, mapping, c.scope)) {
          tighten(sc.node, sc.budget_us);
        }
      }
    } else if (auto id = graph.find(c.scope)) {
      tighten(*id, static_cast<Micros>(std::llround(*c.latency_ms * 1000.0)));
    }
  }
  return budget;
}

nlohmann::ordered_json mapping_to_json(const Mapping& mapping, const ComputationGraph& graph,
                                       const SubstrateModel& model) {
  nlohmann::ordered_json j;
  auto assignment = nlohmann::ordered_json::array();
  for (NodeId id : graph.operators()) {
    const auto& a = mapping.at(id);
    assignment.push_back(
        {{"node", graph.node(id).name}, {"device", model.device(a.device).id}, {"variant", a.variant}});
  }
  j["assignment"] = std::move(assignment);
  j["makespan_ms"] = mapping.makespan_ms;
  auto util = nlohmann::ordered_json::array();
  for (DeviceIndex d = 0; d < mapping.utilization.size(); ++d) {
    util.push_back({{"device", model.device(d).id}, {"value", mapping.utilization[d]}});
  }
  j["utilization"] = std::move(util);
  return j;
}

nlohmann::ordered_json report_to_json(const FeasibilityReport& report,
                                      const ComputationGraph& graph, const SubstrateModel& model) {
  nlohmann::ordered_json j;
  j["verdict"] = report.feasible ? "feasible" : "infeasible";
  auto violations = nlohmann::ordered_json::array();
  for (const auto& v : report.violations) {
    violations.push_back({{"kind", to_string(v.kind)},
                          {"subject", v.subject},
                          {"detail", v.detail},
                          {"observed", v.observed},
                          {"bound", v.bound},
                          {"margin", v.margin}});
  }
  j["violations"] = std::move(violations);
  j["analytic_latency_ms"] = report.analytic_latency_ms;
  if (report.mapping) j["mapping"] = mapping_to_json(*report.mapping, graph, model);
  return j;
}

}  // namespace amstack
