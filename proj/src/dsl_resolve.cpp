#include <cmath>
#include <map>
#include <set>

#include "amstack/dsl.hpp"

namespace amstack::dsl {

const SourceDecl* ResolvedProgram::find_source(std::string_view name) const {
  for (const auto& s : sources) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const OperatorDecl* ResolvedProgram::find_operator(std::string_view name) const {
  for (const auto& o : operators) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

bool ResolvedProgram::empty() const {
  return sources.empty() && operators.empty() && bindings.empty() && annotations.empty() &&
         contracts.empty();
}

namespace {

struct AttrError {
  std::string code;
  std::string message;
};

double unit_scale(Unit unit, Unit base) {
  // Scale factor into the base unit of the attribute's dimension.
  switch (base) {
    case Unit::ms:
      if (unit == Unit::ms) return 1.0;
      if (unit == Unit::us) return 1e-3;
      if (unit == Unit::s) return 1e3;
      break;
    case Unit::bytes:
      if (unit == Unit::bytes) return 1.0;
      if (unit == Unit::kilobytes) return 1e3;
      if (unit == Unit::megabytes) return 1e6;
      break;
    case Unit::hz:
      if (unit == Unit::hz) return 1.0;
      break;
    case Unit::watts:
      if (unit == Unit::watts) return 1.0;
      break;
    default: break;
  }
  return 0.0;
}

const char* dimension_name(Unit base) {
  switch (base) {
    case Unit::ms: return "a duration (ms, us, s)";
    case Unit::bytes: return "a size (B, KB, MB)";
    case Unit::hz: return "a frequency (Hz)";
    case Unit::watts: return "a power (W)";
    default: return "a quantity";
  }
}

// Converts a positive quantity attribute into `base` units.
double positive_quantity(const Attribute& attr, Unit base) {
  const auto* q = std::get_if<Quantity>(&attr.value);
  if (q == nullptr || q->unit == Unit::none) {
    throw AttrError{"E-UNIT", "'" + attr.key + "' expects " + dimension_name(base)};
  }
  double scale = unit_scale(q->unit, base);
  if (scale == 0.0) {
    throw AttrError{"E-UNIT", "'" + attr.key + "' expects " + dimension_name(base) +
                                  ", found unit '" + std::string(to_string(q->unit)) + "'"};
  }
  if (!(q->value > 0)) throw AttrError{"E-VALUE", "'" + attr.key + "' must be positive"};
  return q->value * scale;
}

class Resolver {
 public:
  ResolveResult run(const ProgramAST& ast) {
    collect_declarations(ast);
    for (const auto& stmt : ast.statements) {
      if (const auto* bind = std::get_if<BindStmt>(&stmt)) resolve_binding(*bind);
    }
    for (const auto& stmt : ast.statements) {
      if (const auto* map = std::get_if<MapStmt>(&stmt)) resolve_map(*map);
      if (const auto* contract = std::get_if<ContractStmt>(&stmt)) resolve_contract(*contract);
    }
    split_declarations();
    report_unused();
    return ResolveResult{std::move(out_), std::move(diags_)};
  }

 private:
  struct Declared {
    const RequireStmt* stmt;
    bool valid;
    FrequencyConstraint frequency;
    std::optional<Resolution> resolution;
    std::optional<std::uint64_t> size;
    std::vector<ExtraAttribute> extra;
  };

  void diag(Severity sev, std::string code, Span span, std::string message) {
    diags_.push_back(Diagnostic{sev, span, std::move(code), std::move(message)});
  }

  void collect_declarations(const ProgramAST& ast) {
    for (const auto& stmt : ast.statements) {
      const auto* req = std::get_if<RequireStmt>(&stmt);
      if (req == nullptr) continue;
      if (decl_index_.count(req->name)) {
        diag(Severity::error, "E-DUP", req->name_span, "'" + req->name + "' is already declared");
        continue;
      }
      decl_index_[req->name] = decls_.size();
      decls_.push_back(read_require(*req));
    }
  }

  Declared read_require(const RequireStmt& req) {
    Declared d{&req, true, {}, std::nullopt, std::nullopt, {}};
    bool have_frequency = false;
    std::set<std::string> seen;
    for (const auto& attr : req.attrs) {
      if (!seen.insert(attr.key).second) {
        diag(Severity::error, "E-DUP", attr.span, "attribute '" + attr.key + "' given twice");
        d.valid = false;
        continue;
      }
      try {
        if (attr.key == "frequency") {
          d.frequency = FrequencyConstraint{attr.cmp, positive_quantity(attr, Unit::hz)};
          have_frequency = true;
        } else if (attr.key == "resolution") {
          d.resolution = read_resolution(attr);
        } else if (attr.key == "message_size") {
          double bytes = positive_quantity(attr, Unit::bytes);
          if (bytes != std::floor(bytes)) {
            throw AttrError{"E-VALUE", "'message_size' must be a whole number of bytes"};
          }
          d.size = static_cast<std::uint64_t>(bytes);
        } else {
          d.extra.push_back(ExtraAttribute{attr.key, attr.cmp, attr.value});
        }
      } catch (const AttrError& e) {
        diag(Severity::error, e.code, attr.span, e.message);
        d.valid = false;
      }
    }
    if (!have_frequency && d.valid) {
      diag(Severity::error, "E-ATTR", req.name_span,
           "'" + req.name + "' has no frequency requirement");
      d.valid = false;
    }
    return d;
  }

  static Resolution read_resolution(const Attribute& attr) {
    if (attr.cmp != Comparator::eq) {
      throw AttrError{"E-ATTR", "'resolution' must be pinned with '='"};
    }
    if (const auto* dim = std::get_if<Dimensions>(&attr.value)) {
      if (dim->width == 0 || dim->height == 0) {
        throw AttrError{"E-VALUE", "resolution dimensions must be positive"};
      }
      return Resolution{dim->width, dim->height, 0};
    }
    const auto* q = std::get_if<Quantity>(&attr.value);
    if (q != nullptr && q->unit == Unit::beams && q->value > 0 && q->value == std::floor(q->value)) {
      return Resolution{0, 0, static_cast<std::uint32_t>(q->value)};
    }
    throw AttrError{"E-ATTR", "'resolution' expects WIDTHxHEIGHT or a beam count"};
  }

  void resolve_binding(const BindStmt& bind) {
    bool ok = true;
    if (decl_index_.count(bind.result) || results_.count(bind.result)) {
      diag(Severity::error, "E-DUP", bind.result_span, "'" + bind.result + "' is already bound");
      ok = false;
    }
    auto op_it = decl_index_.find(bind.op);
    if (op_it == decl_index_.end()) {
      if (results_.count(bind.op)) {
        diag(Severity::error, "E-KIND", bind.op_span,
             "'" + bind.op + "' is a value, not an operator");
      } else {
        diag(Severity::error, "E-UNDEF", bind.op_span, "unknown operator '" + bind.op + "'");
      }
      ok = false;
    } else if (applied_.count(bind.op)) {
      diag(Severity::error, "E-DUP", bind.op_span,
           "operator '" + bind.op + "' is already applied by another binding");
      ok = false;
    } else if (consumed_.count(bind.op)) {
      diag(Severity::error, "E-KIND", bind.op_span,
           "'" + bind.op + "' is used as an input elsewhere and cannot also be an operator");
      ok = false;
    }
    for (const auto& [name, span] : bind.inputs) {
      if (results_.count(name)) continue;
      auto it = decl_index_.find(name);
      if (it == decl_index_.end()) {
        diag(Severity::error, "E-UNDEF", span, "unknown identifier '" + name + "'");
        ok = false;
      } else if (applied_.count(name) || name == bind.op) {
        diag(Severity::error, "E-KIND", span,
             "'" + name + "' is an operator; pass the name of its binding instead");
        ok = false;
      }
    }
    if (ok) {
      for (const auto& [name, span] : bind.inputs) {
        if (!results_.count(name)) consumed_.insert(name);
        used_.insert(name);
      }
      applied_.insert(bind.op);
      results_[bind.result] = bind.op;
      NodeBinding nb{bind.result, bind.op, {}};
      for (const auto& input : bind.inputs) nb.inputs.push_back(input.first);
      out_.bindings.push_back(std::move(nb));
    }
  }

  void resolve_map(const MapStmt& map) {
    if (!decl_index_.count(map.op)) {
      diag(Severity::error, "E-UNDEF", map.op_span, "unknown operator '" + map.op + "'");
      return;
    }
    if (!applied_.count(map.op)) {
      diag(Severity::error, "E-KIND", map.op_span,
           "'" + map.op + "' is not applied by any binding and cannot be mapped");
      return;
    }
    for (const auto& existing : out_.annotations) {
      if (existing.op == map.op && existing.strength == map.strength) {
        diag(Severity::error, "E-DUP", map.op_span,
             "'" + map.op + "' already has a " +
                 (map.strength == Strength::hint ? "hint" : "require_map") + " annotation");
        return;
      }
    }
    out_.annotations.push_back(MappingAnnotation{map.op, map.device_class, map.strength});
  }

  void resolve_contract(const ContractStmt& stmt) {
    ContractDecl c;
    c.scope = stmt.scope;
    if (stmt.scope != kEndToEnd && !applied_.count(stmt.scope)) {
      diag(Severity::error, "E-UNDEF", stmt.scope_span,
           "contract scope '" + stmt.scope + "' is not an applied operator");
      return;
    }
    bool ok = true;
    for (const auto& attr : stmt.attrs) {
      try {
        read_contract_attr(attr, c);
      } catch (const AttrError& e) {
        diag(Severity::error, e.code, attr.span, e.message);
        ok = false;
      }
    }
    if (ok) out_.contracts.push_back(std::move(c));
  }

 public:
  static void read_contract_attr(const Attribute& attr, ContractDecl& c) {
    auto set_once = [&](std::optional<double>& slot, Comparator want, Unit base) {
      if (slot) throw AttrError{"E-DUP", "contract bound '" + attr.key + "' given twice"};
      if (attr.cmp != want) {
        throw AttrError{"E-ATTR", "'" + attr.key + "' bound must use '" +
                                      std::string(to_string(want)) + "'"};
      }
      slot = positive_quantity(attr, base);
    };
    if (attr.key == "latency") {
      set_once(c.latency_ms, Comparator::leq, Unit::ms);
    } else if (attr.key == "frequency") {
      set_once(c.min_frequency_hz, Comparator::geq, Unit::hz);
    } else if (attr.key == "latency_std") {
      set_once(c.max_latency_std_ms, Comparator::leq, Unit::ms);
    } else if (attr.key == "energy") {
      set_once(c.energy_w, Comparator::leq, Unit::watts);
    } else {
      throw AttrError{"E-ATTR", "unknown contract bound '" + attr.key +
                                    "' (expected latency, frequency, latency_std, energy)"};
    }
  }

 private:
  void split_declarations() {
    for (const auto& d : decls_) {
      if (!d.valid) continue;
      const std::string& name = d.stmt->name;
      if (applied_.count(name)) {
        if (d.resolution) {
          diag(Severity::error, "E-ATTR", d.stmt->name_span,
               "operator '" + name + "' cannot declare a sensor resolution");
          continue;
        }
        out_.operators.push_back(OperatorDecl{name, d.frequency, d.size, d.extra});
      } else {
        out_.sources.push_back(SourceDecl{name, d.frequency, d.resolution, d.size, d.extra});
      }
    }
  }

  void report_unused() {
    for (const auto& d : decls_) {
      if (!d.valid) continue;
      const std::string& name = d.stmt->name;
      if (!applied_.count(name) && !used_.count(name)) {
        diag(Severity::warning, "E-UNUSED", d.stmt->name_span,
             "'" + name + "' is declared but never consumed");
      }
    }
  }

  std::vector<Declared> decls_;
  std::map<std::string, std::size_t> decl_index_;
  std::map<std::string, std::string> results_;  // binding result -> operator
  std::set<std::string> applied_;
  std::set<std::string> consumed_;
  std::set<std::string> used_;
  ResolvedProgram out_;
  Diagnostics diags_;
};

}  // namespace

ResolveResult resolve(const ProgramAST& ast) { return Resolver{}.run(ast); }

ContractDecl parse_contract_flag(std::string_view text) {
  std::string src(text);
  auto first_space = src.find_first_of(" \t");
  if (first_space == std::string::npos) {
    throw Error("E-CONTRACT", "contract flag needs a scope and at least one bound: '" + src + "'");
  }
  std::string wrapped =
      "contract " + src.substr(0, first_space) + " {" + src.substr(first_space) + " }";
  auto parsed = parse(wrapped);
  if (!parsed.program || parsed.program->statements.size() != 1) {
    std::string why = parsed.diagnostics.empty() ? "" : ": " + parsed.diagnostics.front().message;
    throw Error("E-CONTRACT", "malformed contract '" + src + "'" + why);
  }
  const auto& stmt = std::get<ContractStmt>(parsed.program->statements.front());
  ContractDecl c;
  c.scope = stmt.scope;
  for (const auto& attr : stmt.attrs) {
    try {
      Resolver::read_contract_attr(attr, c);
    } catch (const AttrError& e) {
      throw Error("E-CONTRACT", "malformed contract '" + src + "': " + e.message);
    }
  }
  return c;
}

CompileResult compile(std::string_view text) {
  CompileResult out;
  auto parsed = parse(text);
  out.diagnostics = parsed.diagnostics;
  if (!parsed.program) return out;
  auto resolved = resolve(*parsed.program);
  out.diagnostics.insert(out.diagnostics.end(), resolved.diagnostics.begin(),
                         resolved.diagnostics.end());
  if (resolved.ok()) out.program = std::move(resolved.program);
  return out;
}

}  // namespace amstack::dsl
