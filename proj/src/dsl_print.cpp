#include "amstack/dsl.hpp"

namespace amstack::dsl {

namespace {

std::string quantity(double value, Unit unit) {
  std::string out = format_number(value);
  if (unit != Unit::none) {
    out += ' ';
    out += to_string(unit);
  }
  return out;
}

std::string value_text(const AttrValue& value) {
  if (const auto* q = std::get_if<Quantity>(&value)) return quantity(q->value, q->unit);
  if (const auto* d = std::get_if<Dimensions>(&value)) {
    return std::to_string(d->width) + "x" + std::to_string(d->height);
  }
  return std::get<std::string>(value);
}

void attr(std::vector<std::string>& out, std::string_view key, Comparator cmp, std::string value) {
  out.push_back(std::string(key) + " " + std::string(to_string(cmp)) + " " + value);
}

void block(std::string& text, const std::vector<std::string>& attrs) {
  text += " { ";
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    if (i) text += "; ";
    text += attrs[i];
  }
  text += " }\n";
}

void common_attrs(std::vector<std::string>& attrs, const FrequencyConstraint& freq,
                  const std::optional<std::uint64_t>& size,
                  const std::vector<ExtraAttribute>& extra) {
  attr(attrs, "frequency", freq.cmp, quantity(freq.hz, Unit::hz));
  if (size) attr(attrs, "message_size", Comparator::eq, std::to_string(*size) + " B");
  for (const auto& e : extra) attr(attrs, e.key, e.cmp, value_text(e.value));
}

}  // namespace

std::string pretty_print(const ResolvedProgram& program) {
  std::string text;
  for (const auto& s : program.sources) {
    std::vector<std::string> attrs;
    if (s.resolution) {
      const auto& r = *s.resolution;
      attr(attrs, "resolution", Comparator::eq,
           r.beams ? std::to_string(r.beams) + " beams"
                   : std::to_string(r.width) + "x" + std::to_string(r.height));
    }
    common_attrs(attrs, s.frequency, s.message_size, s.extra);
    text += "require " + s.name;
    block(text, attrs);
  }
  for (const auto& o : program.operators) {
    std::vector<std::string> attrs;
    common_attrs(attrs, o.frequency, o.output_message_size, o.extra);
    text += "require " + o.name;
    block(text, attrs);
  }
  for (const auto& b : program.bindings) {
    text += "node " + b.result + " = " + b.op + "(";
    for (std::size_t i = 0; i < b.inputs.size(); ++i) {
      if (i) text += ", ";
      text += b.inputs[i];
    }
    text += ")\n";
  }
  for (const auto& a : program.annotations) {
    text += a.strength == Strength::hint ? "hint " : "require_map ";
    text += a.op + " on " + std::string(to_string(a.device_class)) + "\n";
  }
  for (const auto& c : program.contracts) {
    std::vector<std::string> attrs;
    if (c.latency_ms) attr(attrs, "latency", Comparator::leq, quantity(*c.latency_ms, Unit::ms));
    if (c.min_frequency_hz) {
      attr(attrs, "frequency", Comparator::geq, quantity(*c.min_frequency_hz, Unit::hz));
    }
    if (c.max_latency_std_ms) {
      attr(attrs, "latency_std", Comparator::leq, quantity(*c.max_latency_std_ms, Unit::ms));
    }
    if (c.energy_w) attr(attrs, "energy", Comparator::leq, quantity(*c.energy_w, Unit::watts));
    text += "contract " + c.scope;
    block(text, attrs);
  }
  return text;
}

}  // namespace amstack::dsl
