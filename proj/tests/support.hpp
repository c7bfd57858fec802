#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "amstack/dsl.hpp"
#include "amstack/graph.hpp"
#include "amstack/substrate.hpp"

namespace testing {

inline std::string fixture(const std::string& name) {
  return std::string(AMSTACK_FIXTURE_DIR) + "/" + name;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Loaded {
  amstack::dsl::ResolvedProgram program;
  amstack::ComputationGraph graph;
  amstack::SubstrateModel model;
};

inline Loaded load(const std::string& amg, const std::string& substrate = {}) {
  Loaded l;
  auto compiled = amstack::dsl::compile(slurp(fixture(amg)));
  if (!compiled.program) throw std::runtime_error("fixture " + amg + " does not compile");
  l.program = *compiled.program;
  l.graph = amstack::lower(l.program).graph;
  if (!substrate.empty()) l.model = amstack::load_profiles(fixture(substrate));
  return l;
}

}  // namespace testing
