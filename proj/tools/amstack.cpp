#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "amstack/envelope.hpp"
#include "amstack/runtime.hpp"
#include "amstack/scheduler.hpp"

namespace fs = std::filesystem;
using namespace amstack;

namespace {

enum Exit : int { kOk = 0, kError = 1, kInfeasible = 2, kViolated = 3 };

struct Options {
  std::string spec;
  std::string profiles;
  std::string format = "human";
  std::uint64_t seed = 0;
  double duration = 1.0;
  std::string disturb;
  bool adapt = false;
  bool force = false;
  std::size_t limit = kDefaultConfigLimit;
  std::string out = ".";
  std::string mode = "deterministic";
  std::vector<std::string> contracts;
};

struct Loaded {
  dsl::ResolvedProgram program;
  ComputationGraph graph;
  SubstrateModel model;
  std::vector<dsl::ContractDecl> contracts;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("E-IO", "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("E-IO", "cannot write '" + path.string() + "'");
  out << text;
}

// Thrown after diagnostics have already been printed.
struct Reported {};

void print_diagnostics(const Diagnostics& diags, const std::string& file, const Options& opt) {
  if (diags.empty()) return;
  if (opt.format == "json") {
    std::cerr << to_json(diags).dump() << "\n";
    return;
  }
  for (const auto& d : diags) std::cerr << format_human(d, file) << "\n";
}

std::vector<dsl::ContractDecl> merge_contracts(std::vector<dsl::ContractDecl> file,
                                               const std::vector<std::string>& flags) {
  std::vector<dsl::ContractDecl> from_flags;
  for (const auto& text : flags) from_flags.push_back(dsl::parse_contract_flag(text));
  std::erase_if(file, [&](const dsl::ContractDecl& c) {
    return std::any_of(from_flags.begin(), from_flags.end(),
                       [&](const dsl::ContractDecl& f) { return f.scope == c.scope; });
  });
  file.insert(file.end(), from_flags.begin(), from_flags.end());
  return file;
}

Loaded load(const Options& opt) {
  Loaded l;
  auto compiled = dsl::compile(read_file(opt.spec));
  print_diagnostics(compiled.diagnostics, opt.spec, opt);
  if (!compiled.program) throw Reported{};
  l.program = std::move(*compiled.program);
  auto lowered = lower(l.program);
  print_diagnostics(lowered.diagnostics, opt.spec, opt);
  l.graph = std::move(lowered.graph);
  if (opt.profiles.empty()) throw Error("E-IO", "--profiles is required");
  l.model = load_profiles(opt.profiles);
  auto coverage = validate_coverage(l.model, l.graph);
  print_diagnostics(coverage, opt.profiles, opt);
  if (has_errors(coverage)) throw Reported{};
  l.contracts = merge_contracts(l.program.contracts, opt.contracts);
  spdlog::debug("loaded {} nodes, {} edges, {} devices, {} contracts", l.graph.size(),
                l.graph.edges().size(), l.model.devices().size(), l.contracts.size());
  return l;
}

void print_mapping(std::ostream& os, const Mapping& m, const Loaded& l) {
  for (NodeId id : l.graph.operators()) {
    const auto& a = m.at(id);
    const auto& slot = *m.slots[id];
    os << "  " << l.graph.node(id).name << " -> " << l.model.device(a.device).id << " ("
       << a.variant << ") lane " << slot.lane << " [" << format_number(slot.start_ms) << ", "
       << format_number(slot.finish_ms) << "] ms\n";
  }
  os << "  makespan " << format_number(m.makespan_ms) << " ms\n";
  for (DeviceIndex d = 0; d < m.utilization.size(); ++d) {
    os << "  utilization " << l.model.device(d).id << " " << format_number(m.utilization[d])
       << "\n";
  }
}

void print_report(std::ostream& os, const FeasibilityReport& r, const Loaded& l) {
  os << "verdict: " << (r.feasible ? "feasible" : "infeasible") << "\n";
  os << "analytic end-to-end latency: " << format_number(r.analytic_latency_ms) << " ms\n";
  for (const auto& v : r.violations) {
    os << "violation " << to_string(v.kind) << " " << v.subject << ": " << v.detail
       << " (margin " << format_number(v.margin) << ")\n";
  }
  if (r.candidate) {
    os << "mapping:\n";
    print_mapping(os, *r.candidate, l);
  }
}

int run_check(const Options& opt) {
  auto l = load(opt);
  auto report = admit(l.graph, l.model, l.contracts);
  if (opt.format == "json") {
    std::cout << report_to_json(report, l.graph, l.model).dump(2) << "\n";
  } else {
    print_report(std::cout, report, l);
  }
  return report.feasible ? kOk : kInfeasible;
}

int run_schedule(const Options& opt) {
  auto l = load(opt);
  auto report = admit(l.graph, l.model, l.contracts);
  if (!report.candidate) {
    print_report(std::cout, report, l);
    return kInfeasible;
  }
  const auto& mapping = *report.candidate;
  auto budgets = node_budgets(l.graph, l.model, mapping, l.contracts);
  if (opt.format == "json") {
    auto j = report_to_json(report, l.graph, l.model);
    j["mapping"] = mapping_to_json(mapping, l.graph, l.model);
    auto subs = nlohmann::ordered_json::array();
    for (NodeId id = 0; id < budgets.size(); ++id) {
      if (budgets[id]) {
        subs.push_back({{"node", l.graph.node(id).name},
                        {"budget_ms", static_cast<double>(*budgets[id]) / 1000.0}});
      }
    }
    j["sub_contracts"] = std::move(subs);
    std::cout << j.dump(2) << "\n";
  } else {
    print_report(std::cout, report, l);
    for (NodeId id = 0; id < budgets.size(); ++id) {
      if (budgets[id]) {
        std::cout << "budget " << l.graph.node(id).name << " "
                  << format_number(static_cast<double>(*budgets[id]) / 1000.0) << " ms\n";
      }
    }
  }
  return report.feasible ? kOk : kInfeasible;
}

int run_envelope(const Options& opt) {
  auto l = load(opt);
  auto points = enumerate_configs(l.graph, l.model, opt.limit, opt.seed);
  auto frontier = pareto_filter(points);
  const bool json = opt.format == "json";
  fs::path file = fs::path(opt.out) / (json ? "envelope.json" : "envelope.csv");
  write_file(file, json ? envelope_to_json(frontier).dump(2) + "\n" : envelope_to_csv(frontier));
  if (opt.format == "csv") {
    std::cout << envelope_to_csv(frontier);
  } else {
    std::cout << "evaluated " << points.size() << " configs\n"
              << "frontier size " << frontier.points.size() << "\n"
              << "dominated " << frontier.dominated_count << "\n"
              << "wrote " << file.string() << "\n";
  }
  return kOk;
}

void print_metrics(std::ostream& os, const MetricsReport& m) {
  for (const auto& s : m.sinks) {
    os << "sink " << s.name << ": " << s.emits << " emits, " << s.stale_emits
       << " stale, jitter " << format_number(s.jitter_ms) << " ms\n";
  }
  for (const auto& n : m.nodes) {
    if (n.misses > 0) os << "node " << n.name << ": " << n.misses << " deadline misses\n";
  }
  for (const auto& d : m.devices) {
    os << "device " << d.id << ": utilization " << format_number(d.utilization) << "\n";
  }
  os << "end-to-end p50/p95/p99: " << format_number(m.e2e_ms.p50) << " / "
     << format_number(m.e2e_ms.p95) << " / " << format_number(m.e2e_ms.p99) << " ms\n";
  os << "energy " << format_number(m.energy_w) << " W\n";
  os << "remaps " << m.remaps << ", variant switches " << m.variant_switches << ", unresolved "
     << m.unresolved << "\n";
  for (const auto& v : m.verdicts) {
    if (!v.held) {
      os << "contract violated: " << v.scope << " " << v.metric << " "
         << format_number(v.observed) << " vs " << format_number(v.bound) << "\n";
    }
  }
  os << "contracts " << (m.contracts_held() ? "held" : "violated") << "\n";
}

int run_simulate(const Options& opt) {
  auto l = load(opt);
  auto report = admit(l.graph, l.model, l.contracts);
  if (!report.feasible) {
    if (!opt.force || !report.candidate) {
      if (opt.format == "json") {
        std::cout << report_to_json(report, l.graph, l.model).dump(2) << "\n";
      } else {
        print_report(std::cout, report, l);
      }
      return kInfeasible;
    }
    spdlog::warn("simulating an infeasible mapping (--force)");
  }
  SimConfig config;
  config.duration_s = opt.duration;
  config.seed = opt.seed;
  auto mode = parse_sim_mode(opt.mode);
  if (!mode) throw Error("E-USAGE", "unknown mode '" + opt.mode + "'");
  config.mode = *mode;
  config.adaptation = opt.adapt;
  std::vector<Disturbance> disturbances;
  if (!opt.disturb.empty()) disturbances = load_disturbances(opt.disturb);

  auto result = simulate(l.graph, l.model, *report.candidate, l.contracts, config, disturbances);
  auto metrics_text = metrics_to_json(result.metrics).dump(2) + "\n";
  write_file(fs::path(opt.out) / "trace.jsonl", trace_to_jsonl(result.trace));
  write_file(fs::path(opt.out) / "metrics.json", metrics_text);
  spdlog::info("{} trace events", result.trace.events.size());
  if (opt.format == "json") {
    std::cout << metrics_text;
  } else {
    print_metrics(std::cout, result.metrics);
  }
  return result.metrics.contracts_held() ? kOk : kViolated;
}

int run_report(const Options& opt) {
  auto metrics = replay(trace_from_jsonl(read_file(opt.spec)));
  if (opt.format == "json") {
    std::cout << metrics_to_json(metrics).dump(2) << "\n";
  } else {
    print_metrics(std::cout, metrics);
  }
  return metrics.contracts_held() ? kOk : kViolated;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("amstack");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("AMSTACK_LOG")) {
    auto level = spdlog::level::from_str(env);
    if (level != spdlog::level::off || std::string_view(env) == "off") spdlog::set_level(level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  Options opt;
  CLI::App app{"Compiler and runtime toolchain for autonomous-machine dataflow graphs"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub, const std::string& what) {
    sub->add_option("spec", opt.spec, what)->required();
    sub->add_option("--format", opt.format, "Output format")
        ->check(CLI::IsMember({"human", "json", "csv"}));
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--profiles", opt.profiles, "Substrate profile JSON")->required();
    sub->add_option("--contract", opt.contracts, "Contract override, e.g. 'end_to_end latency<=20ms'");
  };

  auto* check = app.add_subcommand("check", "Parse, lower and admit a graph");
  add_common(check, "Graph program (.amg)");
  add_model(check);

  auto* schedule = app.add_subcommand("schedule", "Print the HEFT mapping and node budgets");
  add_common(schedule, "Graph program (.amg)");
  add_model(schedule);

  auto* envelope = app.add_subcommand("envelope", "Compute the Pareto performance envelope");
  add_common(envelope, "Graph program (.amg)");
  add_model(envelope);
  envelope->add_option("--limit", opt.limit, "Maximum number of evaluated configurations")
      ->check(CLI::PositiveNumber);
  envelope->add_option("--seed", opt.seed, "Sampling seed");
  envelope->add_option("--out", opt.out, "Output directory");

  auto* sim = app.add_subcommand("simulate", "Simulate the admitted mapping");
  add_common(sim, "Graph program (.amg)");
  add_model(sim);
  sim->add_option("--seed", opt.seed, "Random seed");
  sim->add_option("--duration", opt.duration, "Simulated seconds")->check(CLI::PositiveNumber);
  sim->add_option("--disturb", opt.disturb, "Disturbance JSON");
  sim->add_flag("--adapt", opt.adapt, "Enable runtime adaptation");
  sim->add_flag("--force", opt.force, "Simulate even if admission fails");
  sim->add_option("--mode", opt.mode, "Latency model")
      ->check(CLI::IsMember({"deterministic", "stochastic"}));
  sim->add_option("--out", opt.out, "Output directory for trace.jsonl and metrics.json");

  auto* report = app.add_subcommand("report", "Recompute metrics from a trace");
  add_common(report, "Trace file (.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  try {
    if (check->parsed()) return run_check(opt);
    if (schedule->parsed()) return run_schedule(opt);
    if (envelope->parsed()) return run_envelope(opt);
    if (sim->parsed()) return run_simulate(opt);
    if (report->parsed()) return run_report(opt);
  } catch (const Reported&) {
    return kError;
  } catch (const Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
