// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>

#include <sys/wait.h>
#include <unistd.h>

#include "amstack/envelope.hpp"
#include "amstack/runtime.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace amstack;
namespace fs = std::filesystem;

namespace {

constexpr double kBandwidthTolerance = 0.10;
constexpr double kHeftRatio = 1.5;
constexpr double kUtilTolerance = 0.05;
constexpr double kSplitToleranceUs = 1.0;
constexpr int kRandomCases = 1000;

struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

bool near(double a, double b, double rel) { return std::abs(a - b) <= rel * std::abs(b); }

testing::Loaded load(const char* amg, const char* substrate = "") { return testing::load(amg, substrate); }

SimConfig seconds(double d, bool adapt = false) {
  SimConfig c;
  c.duration_s = d;
  c.adaptation = adapt;
  return c;
}

void criterion1(Check& c) {
  auto rv = load("robot_vacuum.amg");
  c.expect(rv.graph.size() == 7, "robot vacuum node count");
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& e : rv.graph.edges()) edges.insert({rv.graph.node(e.producer).name, rv.graph.node(e.consumer).name});
  c.expect(edges == std::set<std::pair<std::string, std::string>>{{"IR", "2DPerception"},
                                                                 {"Camera", "2DPerception"},
                                                                 {"Camera", "Localization"},
                                                                 {"IMU", "Localization"},
                                                                 {"WO", "Localization"},
                                                                 {"2DPerception", "Control"},
                                                                 {"Localization", "Control"}},
           "robot vacuum edges");
  std::map<std::string, double> rv_freq = {{"IR", 50}, {"Camera", 30}, {"IMU", 100}, {"WO", 50},
                                           {"2DPerception", 50}, {"Localization", 50}, {"Control", 50}};
  for (const auto& [name, hz] : rv_freq) {
    auto id = rv.graph.find(name);
    c.expect(id && rv.graph.node(*id).required_freq == hz, "robot vacuum frequency of " + name);
  }

  auto av = load("av.amg");
  c.expect(av.graph.size() == 12, "vehicle node count");
  c.expect(av.graph.sources().size() == 4, "vehicle source count");
  std::map<std::string, double> av_freq = {{"Radar", 10},        {"Camera", 30},       {"LiDAR", 10},
                                           {"GNSS", 100},        {"2DPerception", 30}, {"3DPerception", 10},
                                           {"PerceptionFusion", 10}, {"Localization", 10}, {"Tracking", 10},
                                           {"Prediction", 10},   {"Planning", 10},     {"Control", 100}};
  for (const auto& [name, hz] : av_freq) {
    auto id = av.graph.find(name);
    c.expect(id && av.graph.node(*id).required_freq == hz, "vehicle frequency of " + name);
  }
  auto ctrl = av.graph.find("Control");
  c.expect(ctrl && av.graph.sinks() == std::vector<NodeId>{*ctrl}, "vehicle sink is Control");
}

void criterion2(Check& c) {
  auto av = load("av.amg");
  auto table = aggregate_bandwidth(av.graph);
  c.expect(table.stages.size() >= 5, "vehicle stage count");
  if (table.stages.size() < 5) return;
  c.expect(near(table.stages[0].bytes_per_second, 100e6, kBandwidthTolerance), "sensor stage ~100 MB/s");
  c.expect(near(table.stages[2].bytes_per_second, 5e6, kBandwidthTolerance), "perception stage ~5 MB/s");
  c.expect(near(table.stages[3].bytes_per_second, 200e3, kBandwidthTolerance), "fusion stage ~200 KB/s");
  c.expect(near(table.sink_output, 5e3, kBandwidthTolerance), "control output ~5 KB/s");
}

void criterion3(Check& c) {
  auto av = load("av.amg", "av_substrate.json");
  auto mapping = heft_schedule(av.graph, av.model);
  auto base = simulate(av.graph, av.model, mapping, av.program.contracts, seconds(1));
  const auto* sink = base.metrics.sink("Control");
  c.expect(sink && sink->emits == 100, "100 control emits in 1 s");

  auto stall = load_disturbances(testing::fixture("av_planning_stall.json"));
  auto stalled = simulate(av.graph, av.model, mapping, av.program.contracts, seconds(1), stall);
  sink = stalled.metrics.sink("Control");
  c.expect(sink && sink->emits == 100, "100 control emits under planning stall");
  c.expect(sink && sink->stale_emits > 0, "stale flags under planning stall");
  std::size_t flagged = 0;
  for (const auto& e : stalled.trace.events) {
    if (e.kind == EventKind::emit && e.node == "Control" && e.detail.value("stale", false)) ++flagged;
  }
  c.expect(sink && flagged == sink->stale_emits, "stale flags present in the trace");
}

void criterion4(Check& c) {
  auto d = load("diamond.amg", "diamond_substrate.json");
  auto trace = nlohmann::json::parse(testing::slurp(testing::fixture("diamond_trace.json")));
  auto mapping = heft_schedule(d.graph, d.model);
  for (const auto& step : trace["steps"]) {
    auto name = step["node"].get<std::string>();
    NodeId id = *d.graph.find(name);
    bool ok = d.model.device(mapping.at(id).device).id == step["device"].get<std::string>() && mapping.slots[id] &&
              std::abs(mapping.slots[id]->start_ms - step["start_ms"].get<double>()) < 1e-9 &&
              std::abs(mapping.slots[id]->finish_ms - step["finish_ms"].get<double>()) < 1e-9;
    c.expect(ok, "diamond step " + name);
  }
  c.expect(std::abs(mapping.makespan_ms - trace["makespan_ms"].get<double>()) < 1e-9, "diamond makespan");

  for (auto [amg, sub] : {std::pair{"diamond.amg", "diamond_substrate.json"},
                          std::pair{"robot_vacuum.amg", "rv_substrate.json"},
                          std::pair{"orb.amg", "orb_substrate.json"}}) {
    auto l = load(amg, sub);
    if (l.graph.operators().size() > 6) continue;
    double heft = heft_schedule(l.graph, l.model).makespan_ms;
    double best = oracle::brute_force_makespan(l.graph, l.model);
    c.expect(heft <= kHeftRatio * best, std::string("list schedule within 1.5x of optimum on ") + amg);
  }
}

void criterion5(Check& c) {
  std::mt19937_64 rng(20240601);
  for (int i = 0; i < kRandomCases; ++i) {
    auto inst = oracle::random_instance(rng);
    auto report = admit(inst.graph, inst.model, inst.contracts);
    auto again = admit(inst.graph, inst.model, inst.contracts);
    std::string tag = "instance " + std::to_string(i);
    if (report.feasible) {
      if (!report.mapping) {
        c.expect(false, tag + " has no mapping");
        continue;
      }
      for (double u : oracle::utilization(*report.mapping, inst.graph, inst.model)) c.expect(u <= 1.0, tag + " utilization");
      c.expect(oracle::critical_latency(*report.mapping, inst.graph, inst.model) <= *inst.contracts[0].latency_ms,
               tag + " latency bound");
    } else {
      c.expect(!report.violations.empty(), tag + " infeasible without violation");
      c.expect(again.violations.size() == report.violations.size(), tag + " violations reproducible");
      for (std::size_t k = 0; k < report.violations.size(); ++k) {
        const auto& v = report.violations[k];
        c.expect(oracle::margin_reproducible(v, report, inst.graph, inst.model, inst.contracts),
                 tag + " margin of " + std::string(to_string(v.kind)) + " " + v.subject);
        if (k < again.violations.size()) c.expect(again.violations[k].margin == v.margin, tag + " margin reproducible");
      }
    }
  }
}

void criterion6(Check& c) {
  auto dom = [](const ConfigPoint& a, const ConfigPoint& b) {
    bool all = a.latency_ms <= b.latency_ms && a.throughput_hz >= b.throughput_hz &&
               a.variability_ms <= b.variability_ms && a.energy_w <= b.energy_w;
    bool one = a.latency_ms < b.latency_ms || a.throughput_hz > b.throughput_hz ||
               a.variability_ms < b.variability_ms || a.energy_w < b.energy_w;
    return all && one;
  };
  for (auto [amg, sub] : {std::pair{"orb.amg", "orb_substrate.json"}, std::pair{"av.amg", "av_substrate.json"}}) {
    auto l = load(amg, sub);
    auto points = enumerate_configs(l.graph, l.model, 3000, 1);
    auto frontier = pareto_filter(points);
    std::multiset<std::string> kept;
    for (const auto& p : frontier.points) kept.insert(p.config);
    for (const auto& p : points) {
      bool dominated = std::any_of(points.begin(), points.end(), [&](const auto& q) { return dom(q, p); });
      c.expect(kept.count(p.config) == (dominated ? 0u : 1u), std::string(amg) + " frontier membership " + p.config);
      if (dominated) {
        bool witness = std::any_of(frontier.points.begin(), frontier.points.end(), [&](const auto& q) { return dom(q, p); });
        c.expect(witness, std::string(amg) + " witness for " + p.config);
      }
    }
  }
}

void criterion7(Check& c) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < kRandomCases; ++i) {
    std::size_t n = 1 + rng() % 10;
    std::vector<double> w(n);
    for (auto& x : w) x = 0.001 + static_cast<double>(rng() % 1'000'000) / 1000.0;
    auto total = static_cast<Micros>(1 + rng() % 100'000'000);
    auto parts = proportional_split(total, w);
    double wsum = 0;
    for (double x : w) wsum += x;
    Micros sum = 0;
    for (std::size_t k = 0; k < n; ++k) {
      sum += parts[k];
      double ideal = static_cast<double>(total) * w[k] / wsum;
      c.expect(std::abs(static_cast<double>(parts[k]) - ideal) < kSplitToleranceUs, "case " + std::to_string(i) + " proportional");
    }
    c.expect(sum == total, "case " + std::to_string(i) + " exact sum");
  }
}

void criterion8(Check& c) {
  auto orb = load("orb.amg", "orb_substrate.json");
  auto mapping = heft_schedule(orb.graph, orb.model);
  auto slowdown = load_disturbances(testing::fixture("orb_matching_slowdown.json"));
  auto off = simulate(orb.graph, orb.model, mapping, orb.program.contracts, seconds(5), slowdown);
  auto on = simulate(orb.graph, orb.model, mapping, orb.program.contracts, seconds(5, true), slowdown);
  c.expect(on.metrics.e2e_ms.p95 < off.metrics.e2e_ms.p95, "adaptation lowers end-to-end p95");

  AdaptationParams p;
  std::map<std::string, std::vector<Nanos>> actions;
  for (const auto& e : on.trace.events) {
    if (e.kind == EventKind::remap || e.kind == EventKind::variant_switch) actions[e.node].push_back(e.t);
  }
  const auto& matching = actions["ORB_matching"];
  c.expect(!matching.empty(), "ORB_matching is adapted");
  for (const auto& [node, times] : actions) {
    double period_ns = 1e9 / orb.graph.node(*orb.graph.find(node)).required_freq;
    if (node == "ORB_matching" && !times.empty()) {
      double delay = static_cast<double>(times.front()) - slowdown[0].t0 * 1e9;
      c.expect(delay >= 0 && delay <= (p.window * p.confirm + p.cooldown_periods) * period_ns, "adaptation delay");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
      c.expect(static_cast<double>(times[i] - times[i - 1]) >= p.cooldown_periods * period_ns, node + " cooldown");
    }
  }
}

struct Output {
  int code;
  std::string text;
};

Output run_cli(const std::string& args, const fs::path& dir) {
  fs::create_directories(dir);
  auto out = dir / "stdout";
  std::string cmd = "cd '" + std::string(AMSTACK_FIXTURE_DIR) + "' && '" + AMSTACK_CLI + "' " + args + " >'" +
                    out.string() + "' 2>/dev/null";
  int status = std::system(cmd.c_str());
  Output o{WIFEXITED(status) ? WEXITSTATUS(status) : -1, testing::slurp(out.string())};
  for (const char* f : {"trace.jsonl", "metrics.json", "envelope.csv", "envelope.json"}) {
    if (fs::exists(dir / f)) o.text += testing::slurp((dir / f).string());
  }
  return o;
}

void criterion9(Check& c) {
  auto root = fs::temp_directory_path() / ("amstack_acceptance_" + std::to_string(::getpid()));
  auto trace_dir = root / "trace_src";
  const std::vector<std::string> commands = {
      "check av.amg --profiles av_substrate.json",
      "check robot_vacuum.amg --profiles overload_substrate.json --format json",
      "schedule orb.amg --profiles orb_substrate.json --format json",
      "envelope orb.amg --profiles orb_substrate.json --out @",
      "envelope av.amg --profiles av_substrate.json --limit 200 --seed 3 --format json --out @",
      "simulate av.amg --profiles av_substrate.json --disturb av_planning_stall.json --out @",
      "simulate orb.amg --profiles orb_substrate.json --disturb orb_matching_slowdown.json --adapt --mode stochastic "
      "--seed 5 --duration 5 --out @",
      "report '" + (trace_dir / "trace.jsonl").string() + "' --format json",
  };
  fs::remove_all(root);
  run_cli("simulate av.amg --profiles av_substrate.json --disturb av_planning_stall.json --out '" + trace_dir.string() + "'",
          trace_dir);
  for (const auto& cmd : commands) {
    std::vector<Output> runs;
    for (int rep = 0; rep < 2; ++rep) {
      auto dir = root / "rerun";
      fs::remove_all(dir);
      std::string line = cmd;
      if (auto at = line.find('@'); at != std::string::npos) line.replace(at, 1, "'" + dir.string() + "'");
      runs.push_back(run_cli(line, dir));
    }
    c.expect(runs[0].code == runs[1].code && runs[0].text == runs[1].text && !runs[0].text.empty(),
             "byte-identical rerun of: " + cmd);
  }
  fs::remove_all(root);
}

void criterion10(Check& c) {
  for (auto [amg, sub] : {std::pair{"robot_vacuum.amg", "rv_substrate.json"}, std::pair{"av.amg", "av_substrate.json"},
                          std::pair{"orb.amg", "orb_substrate.json"}, std::pair{"diamond.amg", "diamond_substrate.json"}}) {
    auto l = load(amg, sub);
    auto mapping = heft_schedule(l.graph, l.model);
    auto sim = simulate(l.graph, l.model, mapping, l.program.contracts, seconds(10));
    auto analytic = oracle::utilization(mapping, l.graph, l.model);
    for (DeviceIndex d = 0; d < analytic.size(); ++d) {
      const auto* m = sim.metrics.device(l.model.device(d).id);
      c.expect(m && std::abs(m->utilization - analytic[d]) <= kUtilTolerance * analytic[d],
               std::string(amg) + " utilization of " + l.model.device(d).id);
    }
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    double limit_s;
    std::function<void(Check&)> body;
  };
  const std::vector<Criterion> criteria = {
      {1, 1, criterion1},  {2, 1, criterion2},   {3, 5, criterion3},  {4, 10, criterion4},
      {5, 60, criterion5}, {6, 30, criterion6},  {7, 5, criterion7},  {8, 10, criterion8},
      {9, 30, criterion9}, {10, 10, criterion10},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    auto t0 = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("exception: ") + e.what());
    }
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (elapsed >= cr.limit_s) {
      check.failures.push_back("took " + std::to_string(elapsed) + " s, limit " + std::to_string(cr.limit_s) + " s");
    }
    bool pass = check.failures.empty();
    std::printf("criterion %d: %s (%.3f s, limit %.0f s)\n", cr.id, pass ? "PASS" : "FAIL", elapsed, cr.limit_s);
    for (std::size_t i = 0; i < check.failures.size() && i < 10; ++i) std::printf("  %s\n", check.failures[i].c_str());
    if (check.failures.size() > 10) std::printf("  ... %zu more\n", check.failures.size() - 10);
    failed += pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
