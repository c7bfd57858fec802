#include "amstack/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

namespace amstack {

using ojson = nlohmann::ordered_json;

std::string_view to_string(SimMode mode) {
  return mode == SimMode::deterministic ? "deterministic" : "stochastic";
}

std::optional<SimMode> parse_sim_mode(std::string_view text) {
  if (text == "deterministic") return SimMode::deterministic;
  if (text == "stochastic") return SimMode::stochastic;
  return std::nullopt;
}

namespace {

constexpr std::string_view kEventNames[] = {"activate", "start",  "finish",        "miss",
                                            "emit",     "remap", "variant_switch"};

}  // namespace

std::string_view to_string(EventKind kind) { return kEventNames[static_cast<int>(kind)]; }

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (int i = 0; i < 7; ++i) {
    if (kEventNames[i] == text) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

Nanos period_nanos(double freq_hz) { return static_cast<Nanos>(std::llround(1e9 / freq_hz)); }

Nanos activation_time(std::uint64_t k, double freq_hz) {
  return static_cast<Nanos>(std::llround(static_cast<double>(k) * 1e9 / freq_hz));
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

// ---------------------------------------------------------------------------
// Disturbances

std::vector<Disturbance> parse_disturbances(std::string_view json_text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("E-SCHEMA", std::string("/: invalid JSON: ") + e.what());
  }
  if (!root.is_array()) throw Error("E-SCHEMA", "/: expected an array of disturbances");
  std::vector<Disturbance> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& d = root[i];
    std::string where = "/" + std::to_string(i);
    if (!d.is_object()) throw Error("E-SCHEMA", where + ": expected an object");
    for (const auto& [k, v] : d.items()) {
      if (k != "op" && k != "factor" && k != "t0" && k != "t1" && k != "class") {
        throw Error("E-SCHEMA", where + "/" + k + ": unknown field");
      }
    }
    for (const char* k : {"op", "factor", "t0", "t1"}) {
      if (!d.contains(k)) throw Error("E-SCHEMA", where + ": missing field '" + k + "'");
    }
    if (!d["op"].is_string()) throw Error("E-SCHEMA", where + "/op: expected a string");
    for (const char* k : {"factor", "t0", "t1"}) {
      if (!d[k].is_number()) throw Error("E-SCHEMA", where + "/" + k + ": expected a number");
    }
    Disturbance dist;
    dist.op = d["op"].get<std::string>();
    dist.factor = d["factor"].get<double>();
    dist.t0 = d["t0"].get<double>();
    dist.t1 = d["t1"].get<double>();
    if (!(dist.factor > 0)) throw Error("E-SCHEMA", where + "/factor: must be > 0");
    if (!(dist.t0 >= 0) || !(dist.t0 < dist.t1)) {
      throw Error("E-SCHEMA", where + ": requires 0 <= t0 < t1");
    }
    if (d.contains("class")) {
      auto cls = d["class"].is_string() ? parse_device_class(d["class"].get<std::string>())
                                        : std::nullopt;
      if (!cls) throw Error("E-SCHEMA", where + "/class: unknown device class");
      dist.cls = cls;
    }
    out.push_back(std::move(dist));
  }
  return out;
}

std::vector<Disturbance> load_disturbances(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("E-IO", "cannot read disturbance file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_disturbances(buf.str());
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

enum Priority : int { kFinish = 0, kDeliver = 1, kDeadline = 2, kSourceEmit = 3, kActivate = 4 };

struct Sample {
  Nanos produced = 0;
  double latency_ms = 0;  // pipeline latency accumulated up to delivery
  bool complete = false;
};

struct Event {
  Nanos t = 0;
  int priority = 0;
  NodeId node = 0;
  std::uint64_t seq = 0;
  std::uint64_t index = 0;  // k for periodic events, job index otherwise
  std::size_t edge = 0;
  Sample sample;

  bool operator>(const Event& o) const {
    if (t != o.t) return t > o.t;
    if (priority != o.priority) return priority > o.priority;
    if (node != o.node) return node > o.node;
    return seq > o.seq;
  }
};

struct Job {
  NodeId node = 0;
  std::uint64_t k = 0;
  Nanos activation = 0;
  DeviceIndex device = 0;
  const VariantProfile* profile = nullptr;
  double input_ms = 0;
  bool complete = true;
  double staleness_ms = 0;
  bool stale = false;
  Nanos start = -1;
  std::uint32_t lane = 0;
  double exec_ms = 0;
  bool done = false;
};

struct DeviceState {
  std::deque<std::size_t> queue;
  std::vector<std::optional<std::size_t>> lanes;  // running job per lane
  Nanos busy_done = 0;
};

struct AdaptState {
  std::optional<double> budget_ms;
  std::deque<double> window;
  std::size_t streak = 0;
  Nanos cooldown_until = 0;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double unit_open(std::mt19937_64& rng) {
  double u;
  do {
    u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  } while (u <= 0.0);
  return u;
}

double standard_normal(std::mt19937_64& rng) {
  double u1 = unit_open(rng);
  double u2 = unit_open(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double truncated_normal(std::mt19937_64& rng, double mean, double std) {
  const double floor = 0.1 * mean;
  if (std <= 0) return mean;
  for (int i = 0; i < 64; ++i) {
    double x = mean + std * standard_normal(rng);
    if (x >= floor) return x;
  }
  return floor;
}

ojson contract_to_json(const dsl::ContractDecl& c) {
  ojson j;
  j["scope"] = c.scope;
  if (c.latency_ms) j["latency_ms"] = *c.latency_ms;
  if (c.min_frequency_hz) j["min_frequency_hz"] = *c.min_frequency_hz;
  if (c.max_latency_std_ms) j["max_latency_std_ms"] = *c.max_latency_std_ms;
  if (c.energy_w) j["energy_w"] = *c.energy_w;
  return j;
}

dsl::ContractDecl contract_from_json(const ojson& j) {
  dsl::ContractDecl c;
  c.scope = j.at("scope").get<std::string>();
  if (j.contains("latency_ms")) c.latency_ms = j["latency_ms"].get<double>();
  if (j.contains("min_frequency_hz")) c.min_frequency_hz = j["min_frequency_hz"].get<double>();
  if (j.contains("max_latency_std_ms")) c.max_latency_std_ms = j["max_latency_std_ms"].get<double>();
  if (j.contains("energy_w")) c.energy_w = j["energy_w"].get<double>();
  return c;
}

class Simulator {
 public:
  Simulator(const ComputationGraph& graph, const SubstrateModel& model, const Mapping& mapping,
            const std::vector<dsl::ContractDecl>& contracts, const SimConfig& config,
            const std::vector<Disturbance>& disturbances)
      : graph_(graph),
        model_(model),
        config_(config),
        disturbances_(disturbances),
        duration_(static_cast<Nanos>(std::llround(config.duration_s * 1e9))),
        buffers_(graph.edges().size()),
        devices_(model.devices().size()),
        adapt_(graph.size()) {
    if (!(config.duration_s > 0)) throw Error("E-CONFIG", "duration must be > 0");
    if (config.params.window < 1 || !(config.params.threshold > 0) || config.params.confirm < 1) {
      throw Error("E-CONFIG", "adaptation requires W >= 1, theta > 0 and k >= 1");
    }
    assignment_.resize(graph.size());
    for (NodeId id : graph.operators()) {
      if (id >= mapping.assignment.size() || !mapping.assignment[id]) {
        throw Error("E-NOMAPPING", "operator '" + graph.node(id).name + "' has no assignment");
      }
      const auto& a = *mapping.assignment[id];
      if (a.device >= model.devices().size() ||
          !model.find(graph.node(id).name, a.variant, model.device(a.device).cls)) {
        throw Error("E-NOMAPPING", "assignment of '" + graph.node(id).name + "' is not profiled");
      }
      assignment_[id] = a;
    }
    for (DeviceIndex d = 0; d < devices_.size(); ++d) devices_[d].lanes.resize(model.device(d).cores);
    for (const auto& node : graph.nodes()) {
      rngs_.emplace_back(splitmix64(config.seed ^ fnv1a(node.name)));
    }
    if (config.adaptation) {
      auto budgets = node_budgets(graph, model, mapping, contracts);
      for (NodeId id = 0; id < graph.size(); ++id) {
        if (budgets[id]) adapt_[id].budget_ms = static_cast<double>(*budgets[id]) / 1000.0;
      }
    }

    trace_.duration_s = config.duration_s;
    trace_.seed = config.seed;
    trace_.mode = config.mode;
    for (const auto& node : graph.nodes()) {
      bool sink = node.is_operator() && graph.out_edges(node.id).empty();
      trace_.nodes.push_back(TraceNode{node.name, node.kind, node.required_freq, sink});
    }
    for (const auto& d : model.devices()) trace_.devices.push_back(TraceDevice{d.id, d.cores, d.idle_w});
    trace_.contracts = contracts;
  }

  SimTrace run() {
    for (const auto& node : graph_.nodes()) {
      push(Event{0, node.is_operator() ? kActivate : kSourceEmit, node.id, 0, 0, 0, {}});
    }
    while (!queue_.empty()) {
      Nanos now = queue_.top().t;
      if (now >= duration_) break;
      while (!queue_.empty() && queue_.top().t == now) {
        Event ev = queue_.top();
        queue_.pop();
        handle(ev);
      }
      dispatch(now);
    }
    return std::move(trace_);
  }

 private:
  void push(Event ev) {
    ev.seq = seq_++;
    queue_.push(ev);
  }

  void log(Nanos t, NodeId node, EventKind kind, ojson detail) {
    trace_.events.push_back(TraceEvent{t, graph_.node(node).name, kind, std::move(detail)});
  }

  void schedule_next(const Event& ev) {
    Nanos next = activation_time(ev.index + 1, graph_.node(ev.node).required_freq);
    if (next < duration_) push(Event{next, ev.priority, ev.node, 0, ev.index + 1, 0, {}});
  }

  void handle(const Event& ev) {
    switch (ev.priority) {
      case kFinish: on_finish(ev.t, ev.index); break;
      case kDeliver: buffers_[ev.edge] = ev.sample; break;
      case kDeadline: on_deadline(ev.t, ev.index); break;
      case kSourceEmit: on_source(ev); break;
      case kActivate: on_activate(ev); break;
      default: break;
    }
  }

  void on_source(const Event& ev) {
    for (auto e : graph_.out_edges(ev.node)) buffers_[e] = Sample{ev.t, 0.0, true};
    log(ev.t, ev.node, EventKind::emit, ojson{{"k", ev.index}});
    schedule_next(ev);
  }

  void on_activate(const Event& ev) {
    const Node& node = graph_.node(ev.node);
    const auto& a = *assignment_[ev.node];
    Job job;
    job.node = ev.node;
    job.k = ev.index;
    job.activation = ev.t;
    job.device = a.device;
    job.profile = model_.find(node.name, a.variant, model_.device(a.device).cls);
    std::size_t missing = 0;
    for (auto e : graph_.in_edges(ev.node)) {
      const auto& sample = buffers_[e];
      if (!sample) {
        ++missing;
        job.complete = false;
        continue;
      }
      double age = nanos_to_ms(ev.t - sample->produced);
      job.staleness_ms = std::max(job.staleness_ms, age);
      double producer_period = graph_.node(graph_.edges()[e].producer).period_ms();
      if (age > 2.0 * producer_period) job.stale = true;
      job.input_ms = std::max(job.input_ms, sample->latency_ms);
      job.complete = job.complete && sample->complete;
    }
    log(ev.t, ev.node, EventKind::activate,
        ojson{{"k", job.k},
              {"device", model_.device(job.device).id},
              {"variant", a.variant},
              {"staleness_ms", job.staleness_ms},
              {"stale", job.stale},
              {"missing", missing}});
    std::size_t index = jobs_.size();
    jobs_.push_back(std::move(job));
    devices_[a.device].queue.push_back(index);
    push(Event{ev.t + period_nanos(node.required_freq), kDeadline, ev.node, 0, index, 0, {}});
    schedule_next(ev);
  }

  void on_deadline(Nanos t, std::size_t index) {
    const Job& job = jobs_[index];
    if (!job.done) log(t, job.node, EventKind::miss, ojson{{"k", job.k}});
  }

  double factor(const Job& job, Nanos start) const {
    double f = 1.0;
    double t = static_cast<double>(start) / 1e9;
    DeviceClass cls = model_.device(job.device).cls;
    for (const auto& d : disturbances_) {
      if (d.op != graph_.node(job.node).name || t < d.t0 || t >= d.t1) continue;
      if (d.cls && *d.cls != cls) continue;
      f *= d.factor;
    }
    return f;
  }

  void dispatch(Nanos now) {
    for (DeviceIndex d = 0; d < devices_.size(); ++d) {
      auto& dev = devices_[d];
      for (std::uint32_t lane = 0; lane < dev.lanes.size() && !dev.queue.empty(); ++lane) {
        if (dev.lanes[lane]) continue;
        std::size_t index = dev.queue.front();
        dev.queue.pop_front();
        Job& job = jobs_[index];
        double base = config_.mode == SimMode::deterministic
                          ? job.profile->lat_ms_mean
                          : truncated_normal(rngs_[job.node], job.profile->lat_ms_mean,
                                             job.profile->lat_ms_std);
        job.exec_ms = base * factor(job, now);
        Nanos exec = std::max<Nanos>(1, ms_to_nanos(job.exec_ms));
        job.exec_ms = nanos_to_ms(exec);
        job.start = now;
        job.lane = lane;
        dev.lanes[lane] = index;
        log(now, job.node, EventKind::start,
            ojson{{"k", job.k},
                  {"device", model_.device(d).id},
                  {"variant", job.profile->variant},
                  {"lane", lane}});
        push(Event{now + exec, kFinish, job.node, 0, index, 0, {}});
      }
    }
  }

  void on_finish(Nanos t, std::size_t index) {
    Job& job = jobs_[index];
    job.done = true;
    auto& dev = devices_[job.device];
    dev.lanes[job.lane].reset();
    dev.busy_done += t - job.start;

    const Node& node = graph_.node(job.node);
    double response_ms = nanos_to_ms(t - job.activation);
    double latency_ms = job.input_ms + response_ms;
    log(t, job.node, EventKind::finish,
        ojson{{"k", job.k},
              {"device", model_.device(job.device).id},
              {"variant", job.profile->variant},
              {"exec_ms", job.exec_ms},
              {"response_ms", response_ms},
              {"latency_ms", latency_ms},
              {"complete", job.complete},
              {"energy_mj", job.profile->energy_mj}});

    for (auto e : graph_.out_edges(job.node)) {
      NodeId consumer = graph_.edges()[e].consumer;
      double bytes = static_cast<double>(node.message_size.value_or(0));
      double comm_ms = model_.comm_cost_ms(bytes, job.device, assignment_[consumer]->device);
      Sample sample{t, latency_ms + comm_ms, job.complete};
      Nanos comm = ms_to_nanos(comm_ms);
      if (comm <= 0) {
        buffers_[e] = sample;
      } else {
        push(Event{t + comm, kDeliver, consumer, 0, 0, e, sample});
      }
    }
    if (graph_.out_edges(job.node).empty()) {
      log(t, job.node, EventKind::emit,
          ojson{{"k", job.k},
                {"e2e_ms", latency_ms},
                {"staleness_ms", job.staleness_ms},
                {"stale", job.stale},
                {"complete", job.complete}});
    }
    if (config_.adaptation) adapt(t, job);
  }

  double busy_utilization(DeviceIndex d, Nanos now) const {
    if (now <= 0) return 0.0;
    const auto& dev = devices_[d];
    Nanos busy = dev.busy_done;
    for (const auto& lane : dev.lanes) {
      if (lane) busy += now - jobs_[*lane].start;
    }
    return static_cast<double>(busy) /
           (static_cast<double>(model_.device(d).cores) * static_cast<double>(now));
  }

  void adapt(Nanos now, const Job& job) {
    auto& st = adapt_[job.node];
    auto& current = *assignment_[job.node];
    if (!st.budget_ms || job.device != current.device || job.profile->variant != current.variant) {
      return;
    }
    const auto& params = config_.params;
    st.window.push_back(job.exec_ms);
    if (st.window.size() > params.window) st.window.pop_front();
    if (now < st.cooldown_until || st.window.size() < params.window) return;

    double p95 = percentile({st.window.begin(), st.window.end()}, 0.95);
    double limit = *st.budget_ms * (1.0 + params.threshold);
    st.streak = p95 > limit ? st.streak + 1 : 0;
    if (st.streak < params.confirm) return;

    const Node& node = graph_.node(job.node);
    DeviceClass cls = model_.device(current.device).cls;
    auto fastest = model_.best(node.name, cls);
    ojson detail;
    if (fastest && fastest->variant != current.variant) {
      detail = ojson{{"device", model_.device(current.device).id},
                     {"from", current.variant},
                     {"to", fastest->variant},
                     {"p95_ms", p95},
                     {"budget_ms", *st.budget_ms}};
      current.variant = fastest->variant;
      log(now, job.node, EventKind::variant_switch, std::move(detail));
    } else {
      std::optional<DeviceIndex> target;
      double best_util = 0;
      for (DeviceIndex d : compatible_devices(node, model_)) {
        if (d == current.device) continue;
        double u = busy_utilization(d, now);
        if (!target || u < best_util) {
          target = d;
          best_util = u;
        }
      }
      if (target) {
        auto variant = model_.best(node.name, model_.device(*target).cls)->variant;
        detail = ojson{{"from", model_.device(current.device).id},
                       {"to", model_.device(*target).id},
                       {"variant", variant},
                       {"p95_ms", p95},
                       {"budget_ms", *st.budget_ms}};
        current = Assignment{*target, variant};
      } else {
        detail = ojson{{"unresolved", true}, {"p95_ms", p95}, {"budget_ms", *st.budget_ms}};
      }
      log(now, job.node, EventKind::remap, std::move(detail));
    }
    st.window.clear();
    st.streak = 0;
    st.cooldown_until =
        now + static_cast<Nanos>(std::llround(params.cooldown_periods * 1e9 / node.required_freq));
  }

  const ComputationGraph& graph_;
  const SubstrateModel& model_;
  const SimConfig& config_;
  const std::vector<Disturbance>& disturbances_;
  Nanos duration_;
  std::vector<std::optional<Sample>> buffers_;
  std::vector<DeviceState> devices_;
  std::vector<AdaptState> adapt_;
  std::vector<std::optional<Assignment>> assignment_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<Job> jobs_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  SimTrace trace_;
};

}  // namespace

SimResult simulate(const ComputationGraph& graph, const SubstrateModel& model,
                   const Mapping& mapping, const std::vector<dsl::ContractDecl>& contracts,
                   const SimConfig& config, const std::vector<Disturbance>& disturbances) {
  Simulator sim(graph, model, mapping, contracts, config, disturbances);
  SimResult result;
  result.trace = sim.run();
  result.metrics = replay(result.trace);
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

bool MetricsReport::contracts_held() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.held; });
}

const NodeMetrics* MetricsReport::node(std::string_view name) const {
  for (const auto& n : nodes) {
    if (n.name == name) return &n;
  }
  return nullptr;
}

const SinkMetrics* MetricsReport::sink(std::string_view name) const {
  for (const auto& s : sinks) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const DeviceMetrics* MetricsReport::device(std::string_view id) const {
  for (const auto& d : devices) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

Percentiles percentiles_of(const std::vector<double>& v) {
  return Percentiles{percentile(v, 0.50), percentile(v, 0.95), percentile(v, 0.99)};
}

[[noreturn]] void malformed(const std::string& what) { throw Error("E-MALFORMED", what); }

}  // namespace

MetricsReport replay(const SimTrace& trace) {
  MetricsReport report;
  report.duration_s = trace.duration_s;
  const Nanos duration = static_cast<Nanos>(std::llround(trace.duration_s * 1e9));
  const double secs = trace.duration_s;
  auto rate = [&](std::size_t count) { return secs > 0 ? static_cast<double>(count) / secs : 0.0; };

  std::map<std::string, std::size_t, std::less<>> node_index;
  for (std::size_t i = 0; i < trace.nodes.size(); ++i) {
    if (!node_index.emplace(trace.nodes[i].name, i).second) {
      malformed("duplicate node '" + trace.nodes[i].name + "' in trace header");
    }
  }
  std::map<std::string, std::size_t, std::less<>> device_index;
  for (std::size_t i = 0; i < trace.devices.size(); ++i) device_index.emplace(trace.devices[i].id, i);

  const std::size_t n = trace.nodes.size();
  std::vector<std::size_t> activations(n), finishes(n), misses(n), deadlines(n), emits(n);
  std::vector<std::size_t> stale_reads(n), missing_reads(n), stale_emits(n);
  std::vector<double> max_stale(n, 0.0), node_energy(n, 0.0);
  std::vector<std::vector<double>> responses(n), emit_times(n);
  std::vector<double> e2e;
  std::vector<Nanos> busy(trace.devices.size(), 0);
  std::map<std::pair<std::size_t, std::uint64_t>, std::pair<std::size_t, Nanos>> running;
  double energy_mj = 0;

  Nanos last = 0;
  try {
    for (const auto& ev : trace.events) {
      if (ev.t < last) malformed("event times decrease at t=" + std::to_string(ev.t) + " ns");
      last = ev.t;
      auto it = node_index.find(ev.node);
      if (it == node_index.end()) malformed("event for unknown node '" + ev.node + "'");
      const std::size_t i = it->second;
      const TraceNode& node = trace.nodes[i];
      const auto& d = ev.detail;
      switch (ev.kind) {
        case EventKind::activate: {
          ++activations[i];
          if (node.freq_hz > 0 && ev.t + period_nanos(node.freq_hz) < duration) ++deadlines[i];
          max_stale[i] = std::max(max_stale[i], d.at("staleness_ms").get<double>());
          if (d.at("stale").get<bool>()) ++stale_reads[i];
          if (d.at("missing").get<std::size_t>() > 0) ++missing_reads[i];
          break;
        }
        case EventKind::start: {
          auto dev = device_index.find(d.at("device").get<std::string>());
          if (dev == device_index.end()) malformed("start on unknown device");
          running[{i, d.at("k").get<std::uint64_t>()}] = {dev->second, ev.t};
          break;
        }
        case EventKind::finish: {
          auto key = std::make_pair(i, d.at("k").get<std::uint64_t>());
          auto run = running.find(key);
          if (run == running.end()) malformed("finish without start for '" + ev.node + "'");
          busy[run->second.first] += ev.t - run->second.second;
          running.erase(run);
          ++finishes[i];
          responses[i].push_back(d.at("response_ms").get<double>());
          double mj = d.at("energy_mj").get<double>();
          energy_mj += mj;
          node_energy[i] += mj;
          break;
        }
        case EventKind::miss: ++misses[i]; break;
        case EventKind::emit: {
          ++emits[i];
          if (node.sink) {
            emit_times[i].push_back(nanos_to_ms(ev.t));
            if (d.at("stale").get<bool>()) ++stale_emits[i];
            if (d.at("complete").get<bool>()) e2e.push_back(d.at("e2e_ms").get<double>());
          }
          break;
        }
        case EventKind::remap:
          if (d.contains("unresolved") && d["unresolved"].get<bool>()) {
            ++report.unresolved;
          } else {
            ++report.remaps;
          }
          break;
        case EventKind::variant_switch: ++report.variant_switches; break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("bad event detail: ") + e.what());
  }
  for (const auto& [key, run] : running) {
    busy[run.first] += std::max<Nanos>(0, duration - run.second);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = trace.nodes[i];
    NodeMetrics m;
    m.name = node.name;
    m.achieved_hz = rate(node.kind == NodeKind::source ? emits[i] : finishes[i]);
    m.latency_ms = percentiles_of(responses[i]);
    m.activations = activations[i];
    m.misses = misses[i];
    m.deadlines = deadlines[i];
    m.max_staleness_ms = max_stale[i];
    m.stale_reads = stale_reads[i];
    m.missing_reads = missing_reads[i];
    report.nodes.push_back(std::move(m));
    if (node.sink) {
      std::vector<double> gaps;
      for (std::size_t j = 1; j < emit_times[i].size(); ++j) {
        gaps.push_back(emit_times[i][j] - emit_times[i][j - 1]);
      }
      report.sinks.push_back(SinkMetrics{node.name, emits[i], stale_emits[i], std_of(gaps)});
    }
  }
  double idle_w = 0;
  for (std::size_t d = 0; d < trace.devices.size(); ++d) {
    const auto& dev = trace.devices[d];
    idle_w += dev.idle_w;
    double busy_ms = nanos_to_ms(busy[d]);
    double capacity_ms = static_cast<double>(dev.cores) * secs * 1000.0;
    report.devices.push_back(DeviceMetrics{dev.id, busy_ms, capacity_ms > 0 ? busy_ms / capacity_ms : 0.0});
  }
  report.e2e_ms = percentiles_of(e2e);
  report.e2e_std_ms = std_of(e2e);
  report.e2e_samples = e2e.size();
  report.energy_w = secs > 0 ? energy_mj / 1000.0 / secs + idle_w : 0.0;

  auto verdict = [&](std::string scope, std::string metric, double observed, double bound, bool held) {
    report.verdicts.push_back(ContractVerdict{std::move(scope), std::move(metric), observed, bound, held});
  };
  const double slack_hz = secs > 0 ? 1.0 / secs : 0.0;
  for (const auto& c : trace.contracts) {
    if (c.end_to_end()) {
      bool have = !e2e.empty();
      if (c.latency_ms) verdict(c.scope, "latency_p95_ms", report.e2e_ms.p95, *c.latency_ms, have && report.e2e_ms.p95 <= *c.latency_ms);
      if (c.min_frequency_hz) {
        double slowest = report.sinks.empty() ? 0.0 : std::numeric_limits<double>::infinity();
        for (const auto& s : report.sinks) slowest = std::min(slowest, rate(s.emits));
        verdict(c.scope, "frequency_hz", slowest, *c.min_frequency_hz, slowest >= *c.min_frequency_hz - slack_hz);
      }
      if (c.max_latency_std_ms) verdict(c.scope, "latency_std_ms", report.e2e_std_ms, *c.max_latency_std_ms, have && report.e2e_std_ms <= *c.max_latency_std_ms);
      if (c.energy_w) verdict(c.scope, "energy_w", report.energy_w, *c.energy_w, report.energy_w <= *c.energy_w);
      continue;
    }
    auto it = node_index.find(c.scope);
    if (it == node_index.end()) {
      verdict(c.scope, "scope", 0, 0, false);
      continue;
    }
    const std::size_t i = it->second;
    const auto& m = report.nodes[i];
    bool have = !responses[i].empty();
    if (c.latency_ms) verdict(c.scope, "latency_p95_ms", m.latency_ms.p95, *c.latency_ms, have && m.latency_ms.p95 <= *c.latency_ms);
    if (c.min_frequency_hz) verdict(c.scope, "frequency_hz", m.achieved_hz, *c.min_frequency_hz, m.achieved_hz >= *c.min_frequency_hz - slack_hz);
    if (c.max_latency_std_ms) {
      double s = std_of(responses[i]);
      verdict(c.scope, "latency_std_ms", s, *c.max_latency_std_ms, have && s <= *c.max_latency_std_ms);
    }
    if (c.energy_w) {
      double w = secs > 0 ? node_energy[i] / 1000.0 / secs : 0.0;
      verdict(c.scope, "energy_w", w, *c.energy_w, w <= *c.energy_w);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (trace.nodes[i].kind != NodeKind::op) continue;
    const auto& m = report.nodes[i];
    double ratio = m.deadlines > 0 ? static_cast<double>(m.misses) / static_cast<double>(m.deadlines) : 0.0;
    verdict(m.name, "deadline_miss_ratio", ratio, 0.05,
            static_cast<double>(m.misses) <= 0.05 * static_cast<double>(m.deadlines));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

std::string trace_to_jsonl(const SimTrace& trace) {
  ojson header;
  header["duration_s"] = trace.duration_s;
  header["seed"] = trace.seed;
  header["mode"] = to_string(trace.mode);
  auto nodes = ojson::array();
  for (const auto& nd : trace.nodes) {
    nodes.push_back({{"name", nd.name}, {"kind", to_string(nd.kind)}, {"freq_hz", nd.freq_hz}, {"sink", nd.sink}});
  }
  header["nodes"] = std::move(nodes);
  auto devices = ojson::array();
  for (const auto& d : trace.devices) {
    devices.push_back({{"id", d.id}, {"cores", d.cores}, {"idle_w", d.idle_w}});
  }
  header["devices"] = std::move(devices);
  auto contracts = ojson::array();
  for (const auto& c : trace.contracts) contracts.push_back(contract_to_json(c));
  header["contracts"] = std::move(contracts);

  std::string out = ojson{{"header", std::move(header)}}.dump() + "\n";
  for (const auto& ev : trace.events) {
    ojson line;
    line["t"] = static_cast<double>(ev.t) / 1e9;
    line["node"] = ev.node;
    line["kind"] = to_string(ev.kind);
    line["detail"] = ev.detail;
    out += line.dump();
    out += '\n';
  }
  return out;
}

SimTrace trace_from_jsonl(std::string_view text) {
  SimTrace trace;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = ojson::parse(line);
      if (!have_header) {
        const auto& h = j.at("header");
        trace.duration_s = h.at("duration_s").get<double>();
        trace.seed = h.at("seed").get<std::uint64_t>();
        auto mode = parse_sim_mode(h.at("mode").get<std::string>());
        if (!mode) malformed("line 1: unknown mode");
        trace.mode = *mode;
        for (const auto& nd : h.at("nodes")) {
          auto kind = nd.at("kind").get<std::string>();
          if (kind != "source" && kind != "operator") malformed("line 1: unknown node kind '" + kind + "'");
          trace.nodes.push_back(TraceNode{nd.at("name").get<std::string>(),
                                          kind == "source" ? NodeKind::source : NodeKind::op,
                                          nd.at("freq_hz").get<double>(), nd.at("sink").get<bool>()});
        }
        for (const auto& d : h.at("devices")) {
          trace.devices.push_back(TraceDevice{d.at("id").get<std::string>(),
                                              d.at("cores").get<std::uint32_t>(),
                                              d.at("idle_w").get<double>()});
        }
        for (const auto& c : h.at("contracts")) trace.contracts.push_back(contract_from_json(c));
        have_header = true;
        continue;
      }
      auto kind = parse_event_kind(j.at("kind").get<std::string>());
      if (!kind) malformed("line " + std::to_string(lineno) + ": unknown event kind");
      TraceEvent ev;
      ev.t = static_cast<Nanos>(std::llround(j.at("t").get<double>() * 1e9));
      ev.node = j.at("node").get<std::string>();
      ev.kind = *kind;
      ev.detail = j.at("detail");
      trace.events.push_back(std::move(ev));
    } catch (const nlohmann::json::exception& e) {
      malformed("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trace;
}

ojson metrics_to_json(const MetricsReport& report) {
  auto pct = [](const Percentiles& p) { return ojson{{"p50", p.p50}, {"p95", p.p95}, {"p99", p.p99}}; };
  ojson j;
  j["duration_s"] = report.duration_s;
  auto nodes = ojson::array();
  for (const auto& m : report.nodes) {
    nodes.push_back({{"name", m.name},
                     {"achieved_hz", m.achieved_hz},
                     {"latency_ms", pct(m.latency_ms)},
                     {"activations", m.activations},
                     {"misses", m.misses},
                     {"deadlines", m.deadlines},
                     {"max_staleness_ms", m.max_staleness_ms},
                     {"stale_reads", m.stale_reads},
                     {"missing_reads", m.missing_reads}});
  }
  j["nodes"] = std::move(nodes);
  auto devices = ojson::array();
  for (const auto& d : report.devices) {
    devices.push_back({{"id", d.id}, {"busy_ms", d.busy_ms}, {"utilization", d.utilization}});
  }
  j["devices"] = std::move(devices);
  auto sinks = ojson::array();
  for (const auto& s : report.sinks) {
    sinks.push_back({{"name", s.name}, {"emits", s.emits}, {"stale_emits", s.stale_emits}, {"jitter_ms", s.jitter_ms}});
  }
  j["sinks"] = std::move(sinks);
  ojson e2e = pct(report.e2e_ms);
  e2e["std_ms"] = report.e2e_std_ms;
  e2e["samples"] = report.e2e_samples;
  j["end_to_end_ms"] = std::move(e2e);
  j["energy_w"] = report.energy_w;
  j["adaptation"] = {{"remaps", report.remaps},
                     {"variant_switches", report.variant_switches},
                     {"unresolved", report.unresolved}};
  auto verdicts = ojson::array();
  for (const auto& v : report.verdicts) {
    verdicts.push_back({{"scope", v.scope}, {"metric", v.metric}, {"observed", v.observed}, {"bound", v.bound}, {"held", v.held}});
  }
  j["verdicts"] = std::move(verdicts);
  j["contracts_held"] = report.contracts_held();
  return j;
}

}  // namespace amstack
