#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace amstack {

enum class Severity { error, warning };

std::string_view to_string(Severity severity);

/// Location in the source text. Lines and columns are 1-based; a span with
/// line 0 carries no source location (diagnostics raised after lowering).
struct Span {
  std::size_t offset = 0;
  std::size_t line = 0;
  std::size_t column = 0;
  std::size_t length = 0;

  bool has_location() const { return line != 0; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Diagnostic {
  Severity severity = Severity::error;
  Span span;
  std::string code;
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

using Diagnostics = std::vector<Diagnostic>;

bool has_errors(const Diagnostics& diagnostics);
std::size_t count_code(const Diagnostics& diagnostics, std::string_view code);

/// `file:line:col: error[E-XXX]: message`
std::string format_human(const Diagnostic& diagnostic, std::string_view file);
nlohmann::ordered_json to_json(const Diagnostics& diagnostics);

/// Raised by pipeline stages on unrecoverable input problems. The code is one
/// of the stable E-* identifiers.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace amstack
