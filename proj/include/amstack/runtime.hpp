#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amstack/dsl.hpp"
#include "amstack/graph.hpp"
#include "amstack/scheduler.hpp"
#include "amstack/substrate.hpp"

namespace amstack {

enum class SimMode { deterministic, stochastic };

std::string_view to_string(SimMode mode);
std::optional<SimMode> parse_sim_mode(std::string_view text);

struct AdaptationParams {
  std::size_t window = 20;        // W, observed executions
  double threshold = 0.10;        // theta, fraction over budget
  std::size_t confirm = 2;        // k consecutive violating evaluations
  double cooldown_periods = 50;   // C, in periods of the adapted node
};

struct SimConfig {
  double duration_s = 1.0;
  std::uint64_t seed = 0;
  SimMode mode = SimMode::deterministic;
  bool adaptation = false;
  AdaptationParams params;
};

/// Multiplies the execution time of jobs of `op` that start inside [t0, t1).
/// With `cls` set, only jobs running on that device class are affected.
struct Disturbance {
  std::string op;
  double factor = 1.0;
  double t0 = 0;
  double t1 = 0;
  std::optional<DeviceClass> cls;
};

/// Throws Error("E-IO") or Error("E-SCHEMA").
std::vector<Disturbance> load_disturbances(const std::filesystem::path& path);
std::vector<Disturbance> parse_disturbances(std::string_view json_text);

enum class EventKind { activate, start, finish, miss, emit, remap, variant_switch };

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct TraceEvent {
  Nanos t = 0;
  std::string node;
  EventKind kind = EventKind::activate;
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

struct TraceNode {
  std::string name;
  NodeKind kind = NodeKind::source;
  double freq_hz = 0;
  bool sink = false;
};

struct TraceDevice {
  std::string id;
  std::uint32_t cores = 1;
  double idle_w = 0;
};

struct SimTrace {
  double duration_s = 0;
  std::uint64_t seed = 0;
  SimMode mode = SimMode::deterministic;
  std::vector<TraceNode> nodes;
  std::vector<TraceDevice> devices;
  std::vector<dsl::ContractDecl> contracts;
  std::vector<TraceEvent> events;
};

/// Integer-nanosecond period used for activations and deadlines.
Nanos period_nanos(double freq_hz);
/// Time of the k-th activation of a node running at `freq_hz`.
Nanos activation_time(std::uint64_t k, double freq_hz);

struct Percentiles {
  double p50 = 0;
  double p95 = 0;
  double p99 = 0;
};

/// Nearest-rank percentile of unsorted values; 0 for an empty set.
double percentile(std::vector<double> values, double p);

struct NodeMetrics {
  std::string name;
  double achieved_hz = 0;
  Percentiles latency_ms;          // response time, activation to finish
  std::size_t activations = 0;
  std::size_t misses = 0;
  std::size_t deadlines = 0;       // activations whose deadline fell inside the run
  double max_staleness_ms = 0;
  std::size_t stale_reads = 0;     // activations that consumed a stale sample
  std::size_t missing_reads = 0;   // activations with an input never produced
};

struct DeviceMetrics {
  std::string id;
  double busy_ms = 0;
  double utilization = 0;          // busy / (cores * duration)
};

struct SinkMetrics {
  std::string name;
  std::size_t emits = 0;
  std::size_t stale_emits = 0;
  double jitter_ms = 0;            // std of inter-emit intervals
};

struct ContractVerdict {
  std::string scope;
  std::string metric;
  double observed = 0;
  double bound = 0;
  bool held = true;
};

struct MetricsReport {
  double duration_s = 0;
  std::vector<NodeMetrics> nodes;
  std::vector<DeviceMetrics> devices;
  std::vector<SinkMetrics> sinks;
  Percentiles e2e_ms;
  double e2e_std_ms = 0;
  std::size_t e2e_samples = 0;
  double energy_w = 0;
  std::size_t remaps = 0;
  std::size_t variant_switches = 0;
  std::size_t unresolved = 0;
  std::vector<ContractVerdict> verdicts;

  bool contracts_held() const;
  const NodeMetrics* node(std::string_view name) const;
  const SinkMetrics* sink(std::string_view name) const;
  const DeviceMetrics* device(std::string_view id) const;
};

struct SimResult {
  SimTrace trace;
  MetricsReport metrics;
};

/// Throws Error("E-NOMAPPING") when an operator has no assignment.
SimResult simulate(const ComputationGraph& graph, const SubstrateModel& model,
                   const Mapping& mapping, const std::vector<dsl::ContractDecl>& contracts,
                   const SimConfig& config, const std::vector<Disturbance>& disturbances = {});

/// Recomputes the metrics from the trace alone. Throws Error("E-MALFORMED").
MetricsReport replay(const SimTrace& trace);

/// JSON-lines: a header object followed by one {t, node, kind, detail} per event.
std::string trace_to_jsonl(const SimTrace& trace);
SimTrace trace_from_jsonl(std::string_view text);

nlohmann::ordered_json metrics_to_json(const MetricsReport& report);

}  // namespace amstack
