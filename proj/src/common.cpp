#include <charconv>
#include <cmath>

#include "amstack/diagnostic.hpp"
#include "amstack/types.hpp"

namespace amstack {

std::string_view to_string(Severity severity) {
  return severity == Severity::error ? "error" : "warning";
}

bool has_errors(const Diagnostics& diagnostics) {
  for (const auto& d : diagnostics) {
    if (d.severity == Severity::error) return true;
  }
  return false;
}

std::size_t count_code(const Diagnostics& diagnostics, std::string_view code) {
  std::size_t n = 0;
  for (const auto& d : diagnostics) {
    if (d.code == code) ++n;
  }
  return n;
}

std::string format_human(const Diagnostic& d, std::string_view file) {
  std::string out(file);
  if (d.span.has_location()) {
    out += ":" + std::to_string(d.span.line) + ":" + std::to_string(d.span.column);
  }
  out += ": ";
  out += to_string(d.severity);
  out += "[" + d.code + "]: " + d.message;
  return out;
}

nlohmann::ordered_json to_json(const Diagnostics& diagnostics) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : diagnostics) {
    arr.push_back({{"severity", to_string(d.severity)},
                   {"code", d.code},
                   {"line", d.span.line},
                   {"col", d.span.column},
                   {"len", d.span.length},
                   {"message", d.message}});
  }
  return arr;
}

std::string_view to_string(DeviceClass cls) {
  switch (cls) {
    case DeviceClass::cpu: return "cpu";
    case DeviceClass::gpu: return "gpu";
    case DeviceClass::dsp: return "dsp";
    case DeviceClass::fpga: return "fpga";
    case DeviceClass::accelerator: return "accelerator";
  }
  return "cpu";
}

std::optional<DeviceClass> parse_device_class(std::string_view text) {
  for (auto cls : kAllDeviceClasses) {
    if (to_string(cls) == text) return cls;
  }
  return std::nullopt;
}

std::string_view to_string(Comparator cmp) {
  switch (cmp) {
    case Comparator::geq: return ">=";
    case Comparator::leq: return "<=";
    case Comparator::eq: return "=";
  }
  return "=";
}

Nanos ms_to_nanos(double ms) { return static_cast<Nanos>(std::llround(ms * 1e6)); }

std::string format_number(double value) {
  char buf[128];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
  if (ec != std::errc{}) return std::to_string(value);
  return std::string(buf, end);
}

}  // namespace amstack
