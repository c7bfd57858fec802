#include "amstack/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

namespace amstack {

std::string_view to_string(NodeKind kind) { return kind == NodeKind::source ? "source" : "operator"; }

std::vector<NodeId> ComputationGraph::operators() const {
  std::vector<NodeId> ops;
  for (const auto& n : nodes_) {
    if (n.is_operator()) ops.push_back(n.id);
  }
  return ops;
}

std::optional<NodeId> ComputationGraph::find(std::string_view name) const {
  for (const auto& n : nodes_) {
    if (n.name == name) return n.id;
  }
  return std::nullopt;
}

ComputationGraph ComputationGraph::without_hints() const {
  ComputationGraph g = *this;
  for (auto& n : g.nodes_) n.hinted_class.reset();
  return g;
}

ComputationGraph ComputationGraph::with_edges(std::vector<Edge> edges) const {
  if (edges.size() != edges_.size()) throw Error("E-GRAPH", "edge count mismatch");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].producer != edges_[i].producer || edges[i].consumer != edges_[i].consumer ||
        edges[i].port != edges_[i].port) {
      throw Error("E-GRAPH", "with_edges may not change graph structure");
    }
  }
  ComputationGraph g = *this;
  g.edges_ = std::move(edges);
  return g;
}

void ComputationGraph::finalize() {
  const std::size_t n = nodes_.size();
  in_.assign(n, {});
  out_.assign(n, {});
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    in_[edges_[e].consumer].push_back(e);
    out_[edges_[e].producer].push_back(e);
  }
  for (auto& list : in_) {
    std::sort(list.begin(), list.end(),
              [&](std::size_t a, std::size_t b) { return edges_[a].port < edges_[b].port; });
  }
  sources_.clear();
  sinks_.clear();
  for (const auto& node : nodes_) {
    if (node.kind == NodeKind::source) sources_.push_back(node.id);
    if (out_[node.id].empty()) sinks_.push_back(node.id);
  }

  // Kahn's algorithm, smallest id first for a deterministic order.
  std::vector<std::size_t> indegree(n);
  for (NodeId v = 0; v < n; ++v) indegree[v] = in_[v].size();
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (NodeId v = 0; v < n; ++v) {
    if (indegree[v] == 0) ready.push(v);
  }
  topo_.clear();
  while (!ready.empty()) {
    NodeId v = ready.top();
    ready.pop();
    topo_.push_back(v);
    for (auto e : out_[v]) {
      if (--indegree[edges_[e].consumer] == 0) ready.push(edges_[e].consumer);
    }
  }
  if (topo_.size() != n) throw Error("E-CYCLE", "computation graph contains a cycle");

  levels_.assign(n, 0);
  for (NodeId v : topo_) {
    for (auto e : out_[v]) {
      levels_[edges_[e].consumer] = std::max(levels_[edges_[e].consumer], levels_[v] + 1);
    }
  }
}

NodeId GraphBuilder::add_source(std::string name, double freq_hz,
                                std::optional<std::uint64_t> message_size) {
  Node node;
  node.id = static_cast<NodeId>(nodes_.size());
  node.name = std::move(name);
  node.kind = NodeKind::source;
  node.required_freq = freq_hz;
  node.message_size = message_size;
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

NodeId GraphBuilder::add_operator(std::string name, double freq_hz,
                                  std::optional<std::uint64_t> message_size) {
  NodeId id = add_source(std::move(name), freq_hz, message_size);
  nodes_[id].kind = NodeKind::op;
  nodes_[id].binding = nodes_[id].name;
  return id;
}

void GraphBuilder::connect(NodeId producer, NodeId consumer) {
  std::uint32_t port = 0;
  for (const auto& e : edges_) {
    if (e.consumer == consumer) ++port;
  }
  edges_.push_back(Edge{producer, consumer, port, 0, 0});
}

void GraphBuilder::require_class(NodeId id, DeviceClass cls) { nodes_.at(id).required_class = cls; }

void GraphBuilder::hint_class(NodeId id, DeviceClass cls) { nodes_.at(id).hinted_class = cls; }

void GraphBuilder::set_binding(NodeId id, std::string result) {
  nodes_.at(id).binding = std::move(result);
}

ComputationGraph GraphBuilder::build() const {
  std::set<std::string> names;
  for (const auto& node : nodes_) {
    if (!names.insert(node.name).second) {
      throw Error("E-GRAPH", "duplicate node name '" + node.name + "'");
    }
    if (!(node.required_freq > 0) || !std::isfinite(node.required_freq)) {
      throw Error("E-GRAPH", "node '" + node.name + "' needs a positive frequency");
    }
  }
  std::vector<std::size_t> fan_in(nodes_.size(), 0);
  for (const auto& e : edges_) {
    if (e.producer >= nodes_.size() || e.consumer >= nodes_.size()) {
      throw Error("E-GRAPH", "edge references an unknown node");
    }
    if (e.producer == e.consumer) {
      throw Error("E-CYCLE", "node '" + nodes_[e.producer].name + "' consumes its own output");
    }
    ++fan_in[e.consumer];
  }
  for (const auto& node : nodes_) {
    if (node.kind == NodeKind::source && fan_in[node.id] != 0) {
      throw Error("E-GRAPH", "source '" + node.name + "' cannot have inputs");
    }
    if (node.kind == NodeKind::op && fan_in[node.id] == 0) {
      throw Error("E-GRAPH", "operator '" + node.name + "' has no inputs");
    }
  }
  ComputationGraph g;
  g.nodes_ = nodes_;
  g.edges_ = edges_;
  g.finalize();
  return g;
}

LowerResult lower(const dsl::ResolvedProgram& program) {
  LowerResult result;
  std::set<std::string> consumed;
  std::map<std::string, std::string> result_to_op;
  for (const auto& b : program.bindings) {
    result_to_op[b.result] = b.op;
    for (const auto& in : b.inputs) consumed.insert(in);
  }

  GraphBuilder builder;
  std::map<std::string, NodeId> by_name;
  for (const auto& s : program.sources) {
    if (!consumed.count(s.name)) {
      result.diagnostics.push_back(Diagnostic{Severity::warning, {}, "E-ORPHAN",
                                              "'" + s.name + "' is not reachable from any binding"});
      continue;
    }
    by_name[s.name] = builder.add_source(s.name, s.frequency.hz, s.message_size);
  }
  std::vector<NodeId> op_nodes;
  for (const auto& b : program.bindings) {
    const auto* decl = program.find_operator(b.op);
    if (decl == nullptr) throw Error("E-UNDEF", "operator '" + b.op + "' is not declared");
    NodeId id = builder.add_operator(b.op, decl->frequency.hz, decl->output_message_size);
    by_name[b.op] = id;
    op_nodes.push_back(id);
  }
  for (std::size_t i = 0; i < program.bindings.size(); ++i) {
    const auto& b = program.bindings[i];
    for (const auto& in : b.inputs) {
      auto alias = result_to_op.find(in);
      const std::string& producer = alias != result_to_op.end() ? alias->second : in;
      auto it = by_name.find(producer);
      if (it == by_name.end()) throw Error("E-UNDEF", "unknown input '" + in + "'");
      builder.connect(it->second, op_nodes[i]);
    }
  }
  for (const auto& a : program.annotations) {
    auto it = by_name.find(a.op);
    if (it == by_name.end()) continue;
    if (a.strength == Strength::requirement) {
      builder.require_class(it->second, a.device_class);
    } else {
      builder.hint_class(it->second, a.device_class);
    }
  }
  for (std::size_t i = 0; i < program.bindings.size(); ++i) {
    builder.set_binding(op_nodes[i], program.bindings[i].result);
  }
  result.graph = builder.build();
  return result;
}

RateReport rate_analysis(const ComputationGraph& graph) {
  RateReport report;
  for (const auto& n : graph.nodes()) report.node_rate.push_back(n.required_freq);
  for (std::size_t e = 0; e < graph.edges().size(); ++e) {
    const Edge& edge = graph.edges()[e];
    double factor = report.node_rate[edge.consumer] / report.node_rate[edge.producer];
    report.oversampling.push_back(factor);
    if (factor > 1.0 + 1e-12) {
      const auto& p = graph.node(edge.producer);
      const auto& c = graph.node(edge.consumer);
      report.warnings.push_back(RateWarning{
          "W-OVERSAMPLE", e,
          "'" + c.name + "' (" + format_number(c.required_freq) + " Hz) oversamples '" + p.name +
              "' (" + format_number(p.required_freq) + " Hz) by a factor of " +
              format_number(factor)});
    }
  }
  return report;
}

namespace {

double edge_bandwidth_or_throw(const ComputationGraph& graph, const Edge& e) {
  const Node& p = graph.node(e.producer);
  if (!p.message_size) {
    throw Error("E-NOSIZE", "node '" + p.name + "' has no message size");
  }
  return p.required_freq * static_cast<double>(*p.message_size);
}

}  // namespace

double cut_bandwidth(const ComputationGraph& graph, std::uint32_t level) {
  const auto& lv = graph.levels();
  double total = 0;
  for (const auto& e : graph.edges()) {
    if (lv[e.producer] <= level && lv[e.consumer] > level) {
      total += edge_bandwidth_or_throw(graph, e);
    }
  }
  return total;
}

BandwidthTable aggregate_bandwidth(const ComputationGraph& graph) {
  BandwidthTable table;
  for (const auto& e : graph.edges()) {
    const Node& p = graph.node(e.producer);
    table.edge_bandwidth.push_back(
        p.message_size ? p.required_freq * static_cast<double>(*p.message_size) : 0.0);
  }
  std::uint32_t max_level = 0;
  for (auto l : graph.levels()) max_level = std::max(max_level, l);
  for (std::uint32_t level = 0; level < max_level; ++level) {
    StageBandwidth stage;
    stage.level = level;
    for (const auto& n : graph.nodes()) {
      if (graph.levels()[n.id] == level) stage.nodes.push_back(n.name);
    }
    stage.bytes_per_second = cut_bandwidth(graph, level);
    table.stages.push_back(std::move(stage));
  }
  for (NodeId s : graph.sinks()) {
    const Node& n = graph.node(s);
    if (!n.message_size) throw Error("E-NOSIZE", "sink '" + n.name + "' has no message size");
    table.sink_output += n.required_freq * static_cast<double>(*n.message_size);
  }
  return table;
}

ComputationGraph annotate_bandwidth(const ComputationGraph& graph) {
  auto edges = graph.edges();
  for (auto& e : edges) {
    const Node& p = graph.node(e.producer);
    e.bandwidth = p.message_size ? p.required_freq * static_cast<double>(*p.message_size) : 0.0;
  }
  return graph.with_edges(std::move(edges));
}

std::uint32_t buffer_capacity(double producer_hz, double consumer_hz) {
  double hi = std::max(producer_hz, consumer_hz);
  double lo = std::min(producer_hz, consumer_hz);
  double ratio = hi / lo;
  // Guard against 10.000000000000002 style noise pushing ceil up a slot.
  double rounded = std::round(ratio);
  double ceiled = std::abs(ratio - rounded) < 1e-9 ? rounded : std::ceil(ratio);
  return static_cast<std::uint32_t>(ceiled) + 1;
}

BufferPlan buffer_sizing(const ComputationGraph& graph, const RateReport& rates) {
  auto edges = graph.edges();
  std::uint64_t total = 0;
  for (auto& e : edges) {
    e.buffer_capacity = buffer_capacity(rates.node_rate[e.producer], rates.node_rate[e.consumer]);
    const auto& size = graph.node(e.producer).message_size;
    total += static_cast<std::uint64_t>(e.buffer_capacity) * size.value_or(0);
  }
  return BufferPlan{graph.with_edges(std::move(edges)), total};
}

std::vector<Path> critical_paths(const ComputationGraph& graph, std::size_t bound) {
  std::vector<Path> paths;
  Path current;
  auto dfs = [&](auto&& self, NodeId v) -> void {
    current.push_back(v);
    const auto& outs = graph.out_edges(v);
    if (outs.empty()) {
      if (current.size() > 1) {
        if (paths.size() >= bound) {
          throw Error("E-PATHBOUND",
                      "more than " + std::to_string(bound) + " source-to-sink paths");
        }
        paths.push_back(current);
      }
    } else {
      std::vector<NodeId> next;
      for (auto e : outs) next.push_back(graph.edges()[e].consumer);
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      for (NodeId w : next) self(self, w);
    }
    current.pop_back();
  };
  for (NodeId s : graph.sources()) dfs(dfs, s);
  std::stable_sort(paths.begin(), paths.end(), [](const Path& a, const Path& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a < b;
  });
  return paths;
}

nlohmann::ordered_json graph_to_json(const ComputationGraph& graph) {
  nlohmann::ordered_json j;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : graph.nodes()) {
    nodes.push_back({{"id", n.id},
                     {"name", n.name},
                     {"kind", to_string(n.kind)},
                     {"freq_hz", n.required_freq},
                     {"msg_bytes", n.message_size ? nlohmann::ordered_json(*n.message_size)
                                                  : nlohmann::ordered_json(nullptr)}});
  }
  auto edges = nlohmann::ordered_json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back({{"from", e.producer},
                     {"to", e.consumer},
                     {"port", e.port},
                     {"capacity", e.buffer_capacity},
                     {"bw_bps", e.bandwidth}});
  }
  j["nodes"] = std::move(nodes);
  j["edges"] = std::move(edges);
  return j;
}

std::string graph_to_dot(const ComputationGraph& graph) {
  std::string dot = "digraph amstack {\n  rankdir=LR;\n";
  for (const auto& n : graph.nodes()) {
    dot += "  n" + std::to_string(n.id) + " [label=\"" + n.name + "\\n" +
           format_number(n.required_freq) + " Hz\", shape=" +
           (n.kind == NodeKind::source ? "box" : "ellipse") + "];\n";
  }
  for (const auto& e : graph.edges()) {
    dot += "  n" + std::to_string(e.producer) + " -> n" + std::to_string(e.consumer);
    if (e.buffer_capacity) dot += " [label=\"cap " + std::to_string(e.buffer_capacity) + "\"]";
    dot += ";\n";
  }
  dot += "}\n";
  return dot;
}

}  // namespace amstack
