#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amstack/dsl.hpp"
#include "amstack/graph.hpp"
#include "amstack/substrate.hpp"

namespace amstack {

struct Assignment {
  DeviceIndex device = 0;
  std::string variant;
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Where and when a node runs in the single-activation list schedule.
struct Slot {
  std::uint32_t lane = 0;
  double start_ms = 0;
  double finish_ms = 0;
  friend bool operator==(const Slot&, const Slot&) = default;
};

struct Mapping {
  std::vector<std::optional<Assignment>> assignment;  // by node id; empty for sources
  std::vector<std::optional<Slot>> slots;             // by node id
  double makespan_ms = 0;
  std::vector<double> utilization;                    // by device index

  const Assignment& at(NodeId id) const { return assignment.at(id).value(); }
  friend bool operator==(const Mapping&, const Mapping&) = default;
};

/// Relative earliest-finish-time window inside which a `hint` can steer the choice.
inline constexpr double kHintWindow = 0.05;

struct HeftOptions {
  double hint_window = kHintWindow;
};

/// Devices that can run `node` (profiled class, honoring require_map), by device id.
std::vector<DeviceIndex> compatible_devices(const Node& node, const SubstrateModel& model);

/// Upward rank of every node (sources included) for the HEFT priority order.
std::vector<double> upward_ranks(const ComputationGraph& graph, const SubstrateModel& model);

/// Heterogeneous Earliest Finish Time list scheduling with insertion.
/// Throws Error("E-UNSCHEDULABLE") when an operator has no candidate device.
Mapping heft_schedule(const ComputationGraph& graph, const SubstrateModel& model,
                      const HeftOptions& options = {});

/// List-schedules a fixed assignment (HEFT priority order, insertion slots)
/// to obtain its makespan and utilization.
Mapping schedule_fixed(const ComputationGraph& graph, const SubstrateModel& model,
                       std::vector<std::optional<Assignment>> assignment);

struct DeviceUtilization {
  DeviceIndex device = 0;
  double value = 0;
  bool overloaded = false;  // value > 1
};

/// utilization(d) = sum over nodes on d of latency_mean * required_freq / cores.
std::vector<DeviceUtilization> utilization_check(const Mapping& mapping,
                                                 const ComputationGraph& graph,
                                                 const SubstrateModel& model);

/// Profile of the variant assigned to `node`.
const VariantProfile& assigned_profile(const Mapping& mapping, const ComputationGraph& graph,
                                       const SubstrateModel& model, NodeId node);

/// Transfer time along an edge under the mapping (0 from sources and on one device).
double edge_comm_ms(const Mapping& mapping, const ComputationGraph& graph,
                    const SubstrateModel& model, const Edge& edge);

struct PathLatency {
  Path path;
  double latency_ms = 0;   // sum of node means plus transfers
  double variance = 0;     // sum of node variances (ms^2)
};

/// The source-to-sink path with the largest analytic latency (first in
/// critical_paths order on ties).
PathLatency analytic_critical_path(const Mapping& mapping, const ComputationGraph& graph,
                                   const SubstrateModel& model);

double path_latency_ms(const Mapping& mapping, const ComputationGraph& graph,
                       const SubstrateModel& model, const Path& path);

/// Sum of freq * energy per invocation over operators, plus idle power of every device.
double energy_rate_w(const Mapping& mapping, const ComputationGraph& graph,
                     const SubstrateModel& model);

// ---------------------------------------------------------------------------
// Admission

enum class ViolationKind { utilization, latency, frequency, variance, energy, coverage };

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind = ViolationKind::coverage;
  std::string subject;   // device id, node name, or "end_to_end"
  std::string detail;
  double observed = 0;
  double bound = 0;
  double margin = 0;     // observed - bound for upper bounds, bound - observed for lower bounds
};

struct FeasibilityReport {
  bool feasible = false;
  std::vector<Violation> violations;
  std::optional<Mapping> mapping;  // present iff feasible
  /// Mapping that was analysed, kept for diagnostics even when infeasible.
  std::optional<Mapping> candidate;
  double analytic_latency_ms = 0;
};

FeasibilityReport admit(const ComputationGraph& graph, const SubstrateModel& model,
                        const std::vector<dsl::ContractDecl>& contracts,
                        const HeftOptions& options = {});

// ---------------------------------------------------------------------------
// Contract decomposition

struct SubContract {
  NodeId node = 0;
  Micros budget_us = 0;
  std::string derived_from;  // contract scope

  double budget_ms() const { return static_cast<double>(budget_us) / 1000.0; }
};

/// Splits `total_us` proportionally to `weights` with largest-remainder
/// rounding; the parts sum to `total_us` exactly.
std::vector<Micros> proportional_split(Micros total_us, std::span<const double> weights);

/// Throws Error("E-EMPTYPATH") if the path has no operator nodes.
std::vector<SubContract> decompose_contract(double latency_bound_ms, const Path& path,
                                            const ComputationGraph& graph,
                                            const SubstrateModel& model, const Mapping& mapping,
                                            std::string derived_from = std::string(dsl::kEndToEnd));

/// Per-node latency budgets used by runtime adaptation: the tightest budget
/// over every path of each end-to-end latency contract, and operator-scope
/// latency bounds directly.
std::vector<std::optional<Micros>> node_budgets(const ComputationGraph& graph,
                                                const SubstrateModel& model,
                                                const Mapping& mapping,
                                                const std::vector<dsl::ContractDecl>& contracts);

nlohmann::ordered_json mapping_to_json(const Mapping& mapping, const ComputationGraph& graph,
                                       const SubstrateModel& model);
nlohmann::ordered_json report_to_json(const FeasibilityReport& report,
                                      const ComputationGraph& graph, const SubstrateModel& model);

}  // namespace amstack
