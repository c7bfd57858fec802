#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amstack/graph.hpp"
#include "amstack/scheduler.hpp"
#include "amstack/substrate.hpp"

namespace amstack {

struct ConfigPoint {
  Mapping mapping;
  double latency_ms = 0;
  double throughput_hz = 0;
  double variability_ms = 0;
  double energy_w = 0;
  std::string config;  // "node@device:variant|..." in operator id order
};

struct ParetoFrontier {
  std::vector<ConfigPoint> points;
  std::size_t dominated_count = 0;
};

inline constexpr std::size_t kDefaultConfigLimit = 10'000;

/// True when `a` is no worse than `b` on every axis and better on one.
bool dominates(const ConfigPoint& a, const ConfigPoint& b);

/// Number of complete assignments (device x variant per operator), saturating.
std::uint64_t assignment_space(const ComputationGraph& graph, const SubstrateModel& model);

ConfigPoint evaluate_config(const Mapping& mapping, const ComputationGraph& graph,
                            const SubstrateModel& model);

/// Exhaustive when the space fits in `limit`, otherwise `limit` distinct
/// seeded samples. Throws Error("E-EMPTY") when no assignment exists.
std::vector<ConfigPoint> enumerate_configs(const ComputationGraph& graph,
                                           const SubstrateModel& model,
                                           std::size_t limit = kDefaultConfigLimit,
                                           std::uint64_t seed = 0);

ParetoFrontier pareto_filter(const std::vector<ConfigPoint>& points);

std::string envelope_to_csv(const ParetoFrontier& frontier);
nlohmann::ordered_json envelope_to_json(const ParetoFrontier& frontier);
/// Reads the metric columns and config digest back (mappings are not restored).
ParetoFrontier envelope_from_json(const nlohmann::ordered_json& j);

}  // namespace amstack
