#include <doctest.h>

#include <set>

#include "amstack/envelope.hpp"
#include "support.hpp"

using namespace amstack;

namespace {

// Reference dominance: minimize latency, variability and energy; maximize throughput.
bool better_or_equal_all(const ConfigPoint& a, const ConfigPoint& b) {
  return a.latency_ms <= b.latency_ms && a.throughput_hz >= b.throughput_hz &&
         a.variability_ms <= b.variability_ms && a.energy_w <= b.energy_w;
}

bool strictly_better_one(const ConfigPoint& a, const ConfigPoint& b) {
  return a.latency_ms < b.latency_ms || a.throughput_hz > b.throughput_hz ||
         a.variability_ms < b.variability_ms || a.energy_w < b.energy_w;
}

bool ref_dominates(const ConfigPoint& a, const ConfigPoint& b) {
  return better_or_equal_all(a, b) && strictly_better_one(a, b);
}

ConfigPoint point(double lat, double thr, double var, double energy, std::string name = "") {
  ConfigPoint p;
  p.latency_ms = lat;
  p.throughput_hz = thr;
  p.variability_ms = var;
  p.energy_w = energy;
  p.config = std::move(name);
  return p;
}

Mapping uniform_mapping(const testing::Loaded& l, const std::string& device, const std::string& variant) {
  std::vector<std::optional<Assignment>> a(l.graph.size());
  for (NodeId id : l.graph.operators()) a[id] = Assignment{*l.model.find_device(device), variant};
  return schedule_fixed(l.graph, l.model, a);
}

std::multiset<std::string> digests(const std::vector<ConfigPoint>& points) {
  std::multiset<std::string> out;
  for (const auto& p : points) out.insert(p.config);
  return out;
}

}  // namespace

TEST_CASE("ORB enumerates the full assignment space") {
  auto l = testing::load("orb.amg", "orb_substrate.json");
  CHECK(assignment_space(l.graph, l.model) == 64);
  auto points = enumerate_configs(l.graph, l.model);
  CHECK(points.size() == 64);
  auto names = digests(points);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == 64);
}

TEST_CASE("sampling is bounded, distinct and reproducible") {
  auto l = testing::load("orb.amg", "orb_substrate.json");
  auto a = enumerate_configs(l.graph, l.model, 10, 42);
  auto b = enumerate_configs(l.graph, l.model, 10, 42);
  CHECK(a.size() == 10);
  auto names = digests(a);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == 10);
  REQUIRE(b.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].config == b[i].config);
}

TEST_CASE("single operator space") {
  GraphBuilder bld;
  NodeId s = bld.add_source("S", 10, 10);
  NodeId f = bld.add_operator("F", 10, 10);
  bld.connect(s, f);
  auto g = bld.build();
  SubstrateModel m({Device{"cpu0", "c", DeviceClass::cpu, 1, 1e9, 0}}, {{"F", "v", DeviceClass::cpu, 2, 0, 1}});
  auto points = enumerate_configs(g, m);
  REQUIRE(points.size() == 1);
  auto frontier = pareto_filter(points);
  CHECK(frontier.points.size() == 1);
  CHECK(frontier.dominated_count == 0);
}

TEST_CASE("variability adds in quadrature") {
  GraphBuilder bld;
  NodeId s = bld.add_source("S", 10, 10);
  NodeId a = bld.add_operator("A", 10, 10);
  NodeId b = bld.add_operator("B", 10, 10);
  bld.connect(s, a);
  bld.connect(a, b);
  auto g = bld.build();
  SubstrateModel m({Device{"cpu0", "c", DeviceClass::cpu, 1, 1e9, 0}},
                   {{"A", "v", DeviceClass::cpu, 10, 3, 1}, {"B", "v", DeviceClass::cpu, 10, 4, 1}});
  auto points = enumerate_configs(g, m);
  REQUIRE(points.size() == 1);
  CHECK(points[0].variability_ms == doctest::Approx(5.0));
}

TEST_CASE("metrics of uniform ORB configurations") {
  auto l = testing::load("orb.amg", "orb_substrate.json");
  auto fast = evaluate_config(uniform_mapping(l, "gpu0", "fast"), l.graph, l.model);
  CHECK(fast.latency_ms == doctest::Approx(31.0));
  CHECK(fast.throughput_hz == doctest::Approx(30.0));
  CHECK(fast.energy_w == doctest::Approx(30 * (120 + 60 + 90) / 1000.0 + 35));
  CHECK(fast.variability_ms == doctest::Approx(std::sqrt(1.0 + 0.25 + 0.64)));
  CHECK(fast.mapping.utilization[*l.model.find_device("gpu0")] == doctest::Approx(0.93));
  auto accurate = evaluate_config(uniform_mapping(l, "gpu0", "accurate"), l.graph, l.model);
  CHECK(accurate.throughput_hz == doctest::Approx(25.0));
  auto cpu = evaluate_config(uniform_mapping(l, "cpu0", "fast"), l.graph, l.model);
  CHECK(cpu.latency_ms == doctest::Approx(27.0));
  CHECK(cpu.config == "ORB_keypoints@cpu0:fast|ORB_descriptors@cpu0:fast|ORB_matching@cpu0:fast");

  std::vector<std::optional<Assignment>> mixed(l.graph.size());
  mixed[*l.graph.find("ORB_keypoints")] = Assignment{*l.model.find_device("cpu0"), "fast"};
  mixed[*l.graph.find("ORB_descriptors")] = Assignment{*l.model.find_device("gpu0"), "fast"};
  mixed[*l.graph.find("ORB_matching")] = Assignment{*l.model.find_device("gpu0"), "fast"};
  auto split = evaluate_config(schedule_fixed(l.graph, l.model, mixed), l.graph, l.model);
  CHECK(split.latency_ms == doctest::Approx(12 + 7 + 10 + 32000.0 / 8e9 * 1000).epsilon(1e-12));
}

TEST_CASE("three point dominance example") {
  std::vector<ConfigPoint> pts = {point(10, 30, 1, 5, "a"), point(12, 30, 1, 6, "b"), point(8, 20, 1, 5, "c")};
  CHECK(dominates(pts[0], pts[1]));
  CHECK_FALSE(dominates(pts[1], pts[0]));
  CHECK_FALSE(dominates(pts[0], pts[2]));
  CHECK_FALSE(dominates(pts[0], pts[0]));
  auto frontier = pareto_filter(pts);
  CHECK(digests(frontier.points) == std::multiset<std::string>{"a", "c"});
  CHECK(frontier.dominated_count == 1);
}

TEST_CASE("duplicate points are both kept") {
  auto frontier = pareto_filter({point(1, 1, 1, 1, "x"), point(1, 1, 1, 1, "y")});
  CHECK(frontier.points.size() == 2);
}

TEST_CASE("frontier agrees with brute-force dominance and has witnesses") {
  for (auto [amg, sub] : {std::pair{"orb.amg", "orb_substrate.json"}, std::pair{"av.amg", "av_substrate.json"},
                          std::pair{"robot_vacuum.amg", "rv_substrate.json"}}) {
    auto l = testing::load(amg, sub);
    auto points = enumerate_configs(l.graph, l.model, 2000, 7);
    auto frontier = pareto_filter(points);
    auto kept = digests(frontier.points);
    CHECK(frontier.points.size() + frontier.dominated_count == points.size());
    for (const auto& p : points) {
      bool dominated = std::any_of(points.begin(), points.end(), [&](const auto& q) { return ref_dominates(q, p); });
      CHECK(kept.count(p.config) == (dominated ? 0u : 1u));
      if (dominated) {
        bool witness = std::any_of(frontier.points.begin(), frontier.points.end(),
                                   [&](const auto& q) { return ref_dominates(q, p); });
        CHECK_MESSAGE(witness, p.config);
      }
    }
  }
}

TEST_CASE("adding a dominated point leaves the frontier unchanged") {
  auto l = testing::load("orb.amg", "orb_substrate.json");
  auto points = enumerate_configs(l.graph, l.model);
  auto before = digests(pareto_filter(points).points);
  auto worse = point(1e6, 0, 1e6, 1e6, "worst");
  points.push_back(worse);
  CHECK(digests(pareto_filter(points).points) == before);
  points.push_back(point(0, 1e6, 0, 0, "best"));
  CHECK(digests(pareto_filter(points).points) == std::multiset<std::string>{"best"});
}

TEST_CASE("envelope export") {
  auto l = testing::load("orb.amg", "orb_substrate.json");
  auto frontier = pareto_filter(enumerate_configs(l.graph, l.model));
  auto csv = envelope_to_csv(frontier);
  CHECK(csv.rfind("latency_ms,throughput_hz,variability_ms,energy_w,config\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == frontier.points.size() + 1);
  auto back = envelope_from_json(envelope_to_json(frontier));
  REQUIRE(back.points.size() == frontier.points.size());
  CHECK(back.dominated_count == frontier.dominated_count);
  for (std::size_t i = 0; i < back.points.size(); ++i) {
    CHECK(back.points[i].config == frontier.points[i].config);
    CHECK(back.points[i].latency_ms == frontier.points[i].latency_ms);
    CHECK(back.points[i].energy_w == frontier.points[i].energy_w);
  }
}
