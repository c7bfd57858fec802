#include <doctest.h>

#include <map>

#include "amstack/runtime.hpp"
#include "support.hpp"

using namespace amstack;

namespace {

struct Scenario {
  testing::Loaded l;
  Mapping mapping;
};

Scenario scenario(const std::string& amg, const std::string& substrate) {
  Scenario s{testing::load(amg, substrate), {}};
  s.mapping = heft_schedule(s.l.graph, s.l.model);
  return s;
}

SimResult run(const Scenario& s, SimConfig config, const std::vector<Disturbance>& disturbances = {}) {
  return simulate(s.l.graph, s.l.model, s.mapping, s.l.program.contracts, config, disturbances);
}

SimConfig seconds(double d, bool adapt = false) {
  SimConfig c;
  c.duration_s = d;
  c.adaptation = adapt;
  return c;
}

std::vector<const TraceEvent*> events_of(const SimTrace& trace, EventKind kind, const std::string& node = "") {
  std::vector<const TraceEvent*> out;
  for (const auto& e : trace.events) {
    if (e.kind == kind && (node.empty() || e.node == node)) out.push_back(&e);
  }
  return out;
}

}  // namespace

TEST_CASE("activation times are exact integer nanoseconds") {
  CHECK(period_nanos(100) == 10'000'000);
  CHECK(activation_time(3, 30) == 100'000'000);
  CHECK(activation_time(1, 30) == 33'333'333);
  CHECK(activation_time(2, 30) == 66'666'667);
}

TEST_CASE("nearest-rank percentile") {
  CHECK(percentile({}, 0.95) == 0);
  CHECK(percentile({5}, 0.5) == 5);
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(21 - i);
  CHECK(percentile(v, 0.95) == 19);
  CHECK(percentile(v, 0.5) == 10);
  CHECK(percentile(v, 1.0) == 20);
}

TEST_CASE("robot vacuum meets its rate") {
  auto s = scenario("robot_vacuum.amg", "rv_substrate.json");
  auto r = run(s, seconds(1));
  const auto* control = r.metrics.sink("Control");
  REQUIRE(control);
  CHECK(control->emits == 50);
  for (const auto& n : r.metrics.nodes) CHECK(n.misses == 0);
  CHECK(r.metrics.contracts_held());
}

TEST_CASE("vehicle control emits every period") {
  auto s = scenario("av.amg", "av_substrate.json");
  auto r = run(s, seconds(1));
  REQUIRE(r.metrics.sink("Control"));
  CHECK(r.metrics.sink("Control")->emits == 100);
  CHECK(r.metrics.sink("Control")->stale_emits == 0);
  CHECK(r.metrics.contracts_held());
}

TEST_CASE("planning stall keeps control running on stale input") {
  auto s = scenario("av.amg", "av_substrate.json");
  auto stall = load_disturbances(testing::fixture("av_planning_stall.json"));
  auto r = run(s, seconds(1), stall);
  REQUIRE(r.metrics.sink("Control"));
  CHECK(r.metrics.sink("Control")->emits == 100);
  CHECK(r.metrics.sink("Control")->stale_emits > 0);
  CHECK(r.metrics.node("Planning")->misses > 0);
  for (const auto* e : events_of(r.trace, EventKind::emit, "Control")) {
    double t = static_cast<double>(e->t) / 1e9;
    if (e->detail["stale"].get<bool>()) CHECK(t > 0.3);
  }
}

TEST_CASE("no disturbance means no adaptation") {
  auto s = scenario("orb.amg", "orb_substrate.json");
  auto r = run(s, seconds(5, true));
  CHECK(r.metrics.remaps == 0);
  CHECK(r.metrics.variant_switches == 0);
  CHECK(r.metrics.unresolved == 0);
}

TEST_CASE("adaptation restores the ORB pipeline under slowdown") {
  auto s = scenario("orb.amg", "orb_substrate.json");
  auto slowdown = load_disturbances(testing::fixture("orb_matching_slowdown.json"));
  auto off = run(s, seconds(5), slowdown);
  auto on = run(s, seconds(5, true), slowdown);
  CHECK(on.metrics.e2e_ms.p95 < off.metrics.e2e_ms.p95);
  CHECK(on.metrics.remaps + on.metrics.variant_switches >= 1);

  AdaptationParams p;
  double period_ns = 1e9 / 30;
  auto remaps = events_of(on.trace, EventKind::remap, "ORB_matching");
  REQUIRE_FALSE(remaps.empty());
  double onset = slowdown[0].t0 * 1e9;
  CHECK(static_cast<double>(remaps.front()->t) - onset <= (p.window * p.confirm + p.cooldown_periods) * period_ns);
  for (std::size_t i = 1; i < remaps.size(); ++i) {
    CHECK(static_cast<double>(remaps[i]->t - remaps[i - 1]->t) >= p.cooldown_periods * period_ns);
  }
}

TEST_CASE("a node with one option is reported unresolved without thrashing") {
  GraphBuilder b;
  NodeId src = b.add_source("S", 50, 10);
  NodeId f = b.add_operator("F", 50, 10);
  b.connect(src, f);
  auto g = b.build();
  SubstrateModel m({Device{"cpu0", "c", DeviceClass::cpu, 1, 1e9, 0}}, {{"F", "v", DeviceClass::cpu, 5, 0, 1}});
  dsl::ContractDecl c;
  c.latency_ms = 6;
  auto mapping = heft_schedule(g, m);
  std::vector<Disturbance> d = {Disturbance{"F", 3, 0.5, 3.0, std::nullopt}};
  auto r = simulate(g, m, mapping, {c}, seconds(4, true), d);
  CHECK(r.metrics.remaps == 0);
  CHECK(r.metrics.unresolved >= 1);
  auto marks = events_of(r.trace, EventKind::remap, "F");
  AdaptationParams p;
  for (std::size_t i = 1; i < marks.size(); ++i) {
    CHECK(static_cast<double>(marks[i]->t - marks[i - 1]->t) >= p.cooldown_periods * 1e9 / 50);
  }
}

TEST_CASE("replay reproduces the metrics through the serialized trace") {
  auto s = scenario("av.amg", "av_substrate.json");
  auto stall = load_disturbances(testing::fixture("av_planning_stall.json"));
  auto r = run(s, seconds(1), stall);
  auto text = trace_to_jsonl(r.trace);
  auto back = trace_from_jsonl(text);
  CHECK(trace_to_jsonl(back) == text);
  CHECK(metrics_to_json(replay(back)) == metrics_to_json(r.metrics));
}

TEST_CASE("replay of an empty trace") {
  SimTrace t;
  t.duration_s = 1;
  t.nodes = {TraceNode{"S", NodeKind::source, 10, false}, TraceNode{"F", NodeKind::op, 10, true}};
  t.devices = {TraceDevice{"cpu0", 1, 0}};
  auto m = replay(t);
  CHECK(m.e2e_samples == 0);
  CHECK(m.e2e_ms.p95 == 0);
  REQUIRE(m.sink("F"));
  CHECK(m.sink("F")->emits == 0);
  CHECK(m.device("cpu0")->utilization == 0);
}

TEST_CASE("replay counts misses from the trace") {
  SimTrace t;
  t.duration_s = 1;
  t.nodes = {TraceNode{"F", NodeKind::op, 10, true}};
  t.devices = {TraceDevice{"cpu0", 1, 0}};
  t.events.push_back(TraceEvent{100'000'000, "F", EventKind::miss, {{"k", 0}}});
  t.events.push_back(TraceEvent{200'000'000, "F", EventKind::miss, {{"k", 1}}});
  auto m = replay(t);
  REQUIRE(m.node("F"));
  CHECK(m.node("F")->misses == 2);
}

TEST_CASE("simulation is deterministic for a seed") {
  auto s = scenario("orb.amg", "orb_substrate.json");
  auto slowdown = load_disturbances(testing::fixture("orb_matching_slowdown.json"));
  for (auto mode : {SimMode::deterministic, SimMode::stochastic}) {
    auto c = seconds(3, true);
    c.mode = mode;
    c.seed = 17;
    CHECK(trace_to_jsonl(run(s, c, slowdown).trace) == trace_to_jsonl(run(s, c, slowdown).trace));
  }
  auto a = seconds(2);
  a.mode = SimMode::stochastic;
  a.seed = 1;
  auto b = a;
  b.seed = 2;
  CHECK(trace_to_jsonl(run(s, a).trace) != trace_to_jsonl(run(s, b).trace));
}

TEST_CASE("simulated utilization tracks the analytic value") {
  for (auto [amg, sub] : {std::pair{"robot_vacuum.amg", "rv_substrate.json"}, std::pair{"av.amg", "av_substrate.json"},
                          std::pair{"orb.amg", "orb_substrate.json"}}) {
    auto s = scenario(amg, sub);
    auto r = run(s, seconds(5));
    for (const auto& u : utilization_check(s.mapping, s.l.graph, s.l.model)) {
      const auto* d = r.metrics.device(s.l.model.device(u.device).id);
      REQUIRE(d);
      CAPTURE(amg);
      CHECK(std::abs(d->utilization - u.value) <= 0.05 * std::max(u.value, 1e-9));
    }
  }
}

TEST_CASE("missing assignment is rejected") {
  auto s = scenario("robot_vacuum.amg", "rv_substrate.json");
  s.mapping.assignment[*s.l.graph.find("Control")].reset();
  CHECK_THROWS_AS(run(s, seconds(1)), Error);
}

TEST_CASE("disturbance schema") {
  CHECK(parse_disturbances(R"([{"op": "A", "factor": 2, "t0": 0, "t1": 1, "class": "gpu"}])")[0].cls ==
        DeviceClass::gpu);
  for (const char* bad : {R"({"op": "A"})", R"([{"op": "A", "factor": 0, "t0": 0, "t1": 1}])",
                          R"([{"op": "A", "factor": 2, "t0": 2, "t1": 1}])", R"([{"factor": 2, "t0": 0, "t1": 1}])",
                          R"([{"op": "A", "factor": 2, "t0": 0, "t1": 1, "class": "tpu"}])", "not json"}) {
    CHECK_THROWS_AS(parse_disturbances(bad), Error);
  }
}
