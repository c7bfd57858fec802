#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amstack/diagnostic.hpp"
#include "amstack/dsl.hpp"
#include "amstack/types.hpp"

namespace amstack {

enum class NodeKind { source, op };

std::string_view to_string(NodeKind kind);

struct Node {
  NodeId id = 0;
  std::string name;
  NodeKind kind = NodeKind::source;
  double required_freq = 0;  // Hz
  std::optional<std::uint64_t> message_size;  // bytes per output sample
  std::optional<DeviceClass> required_class;  // require_map
  std::optional<DeviceClass> hinted_class;    // hint
  std::string binding;  // name of the binding result, empty for sources

  double period_ms() const { return 1000.0 / required_freq; }
  bool is_operator() const { return kind == NodeKind::op; }
};

struct Edge {
  NodeId producer = 0;
  NodeId consumer = 0;
  std::uint32_t port = 0;
  std::uint32_t buffer_capacity = 0;  // samples; 0 until sized
  double bandwidth = 0;               // bytes/s
};

/// Validated dataflow DAG. Immutable once built; all analyses are free
/// functions returning new values.
class ComputationGraph {
 public:
  ComputationGraph() = default;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  const std::vector<NodeId>& sources() const { return sources_; }
  const std::vector<NodeId>& sinks() const { return sinks_; }
  std::vector<NodeId> operators() const;

  /// Edge indices into edges(), ordered by port.
  const std::vector<std::size_t>& in_edges(NodeId id) const { return in_.at(id); }
  const std::vector<std::size_t>& out_edges(NodeId id) const { return out_.at(id); }

  std::optional<NodeId> find(std::string_view name) const;
  const std::vector<NodeId>& topological_order() const { return topo_; }

  /// Longest hop distance from any source (sources are level 0).
  const std::vector<std::uint32_t>& levels() const { return levels_; }

  /// Copy with every hint annotation removed.
  ComputationGraph without_hints() const;
  /// Copy with replaced edge attributes (capacity / bandwidth); structure is unchanged.
  ComputationGraph with_edges(std::vector<Edge> edges) const;

 private:
  friend class GraphBuilder;
  void finalize();

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<NodeId> sources_;
  std::vector<NodeId> sinks_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<NodeId> topo_;
  std::vector<std::uint32_t> levels_;
};

/// Programmatic graph construction. Sources and operators are added by name;
/// connect() appends the next input port of the consumer.
class GraphBuilder {
 public:
  NodeId add_source(std::string name, double freq_hz,
                    std::optional<std::uint64_t> message_size = std::nullopt);
  NodeId add_operator(std::string name, double freq_hz,
                      std::optional<std::uint64_t> message_size = std::nullopt);
  void connect(NodeId producer, NodeId consumer);
  void require_class(NodeId id, DeviceClass cls);
  void hint_class(NodeId id, DeviceClass cls);
  void set_binding(NodeId id, std::string result);

  /// Validates structure; throws Error("E-CYCLE") or Error("E-GRAPH").
  ComputationGraph build() const;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

struct LowerResult {
  ComputationGraph graph;
  Diagnostics diagnostics;  // E-ORPHAN warnings
};

/// Throws Error("E-CYCLE") if the bindings are cyclic.
LowerResult lower(const dsl::ResolvedProgram& program);

// ---------------------------------------------------------------------------
// Rate, bandwidth and buffer analyses

struct RateWarning {
  std::string code;  // W-OVERSAMPLE
  std::size_t edge = 0;
  std::string message;
};

struct RateReport {
  std::vector<double> node_rate;        // Hz, indexed by node id
  std::vector<double> oversampling;     // consumer / producer, indexed by edge
  std::vector<RateWarning> warnings;
};

RateReport rate_analysis(const ComputationGraph& graph);

struct StageBandwidth {
  std::uint32_t level = 0;          // cut between level and level + 1
  std::vector<std::string> nodes;   // nodes at this level
  double bytes_per_second = 0;      // sum over edges crossing the cut
};

struct BandwidthTable {
  std::vector<double> edge_bandwidth;  // bytes/s, indexed by edge
  std::vector<StageBandwidth> stages;  // one per cut, in level order
  double sink_output = 0;              // bytes/s emitted by sinks
};

/// Throws Error("E-NOSIZE") if any producer whose output crosses a cut (or any
/// sink) lacks a message size.
BandwidthTable aggregate_bandwidth(const ComputationGraph& graph);

/// Bandwidth across the cut separating levels <= `level` from the rest.
double cut_bandwidth(const ComputationGraph& graph, std::uint32_t level);

/// Graph copy with bandwidth filled in for every edge whose producer has a
/// message size (edges without one stay 0).
ComputationGraph annotate_bandwidth(const ComputationGraph& graph);

/// ceil(max(rate) / min(rate)) + 1 for a producer/consumer rate pair.
std::uint32_t buffer_capacity(double producer_hz, double consumer_hz);

struct BufferPlan {
  ComputationGraph graph;
  std::uint64_t total_bytes = 0;
};

BufferPlan buffer_sizing(const ComputationGraph& graph, const RateReport& rates);

using Path = std::vector<NodeId>;

inline constexpr std::size_t kPathBound = 10'000;

/// All simple source-to-sink paths, longest (by hops) first, then
/// lexicographic by node id. Throws Error("E-PATHBOUND") past `bound` paths.
std::vector<Path> critical_paths(const ComputationGraph& graph, std::size_t bound = kPathBound);

nlohmann::ordered_json graph_to_json(const ComputationGraph& graph);
std::string graph_to_dot(const ComputationGraph& graph);

}  // namespace amstack
