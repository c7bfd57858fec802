#pragma once

// Lexer, parser, resolver and canonical printer for `.amg` graph programs.
//
//   program   := { statement }
//   statement := require | bind | map | contract
//   require   := "require" IDENT "{" attr { ";" attr } "}"
//   attr      := IDENT (">=" | "<=" | "=") (NUMBER [UNIT] | NUMBER "x" NUMBER | IDENT)
//   bind      := "node" IDENT "=" IDENT "(" IDENT { "," IDENT } ")"
//   map       := ("hint" | "require_map") IDENT "on" DEVCLASS
//   contract  := "contract" ("end_to_end" | IDENT) "{" attr { ";" attr } "}"
//
// Comments run from '#' to end of line.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "amstack/diagnostic.hpp"
#include "amstack/types.hpp"

namespace amstack::dsl {

enum class TokenKind {
  kw_require,
  kw_node,
  kw_hint,
  kw_require_map,
  kw_on,
  kw_contract,
  ident,
  number,
  unit,
  times,  // the 'x' in 320x240
  geq,
  leq,
  eq,
  lbrace,
  rbrace,
  lparen,
  rparen,
  comma,
  semicolon,
  error,
};

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;
  Span span;

  friend bool operator==(const Token&, const Token&) = default;
};

std::vector<Token> tokenize(std::string_view text);

// ---------------------------------------------------------------------------
// Syntax tree

enum class Unit { none, hz, ms, us, s, bytes, kilobytes, megabytes, kbps, mbps, watts, joules, beams };

std::string_view to_string(Unit unit);
std::optional<Unit> parse_unit(std::string_view text);

struct Quantity {
  double value = 0;
  Unit unit = Unit::none;
  friend bool operator==(const Quantity&, const Quantity&) = default;
};

struct Dimensions {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

using AttrValue = std::variant<Quantity, Dimensions, std::string>;

struct Attribute {
  std::string key;
  Comparator cmp = Comparator::eq;
  AttrValue value;
  Span span;
};

struct RequireStmt {
  std::string name;
  Span name_span;
  std::vector<Attribute> attrs;
};

struct BindStmt {
  std::string result;
  Span result_span;
  std::string op;
  Span op_span;
  std::vector<std::pair<std::string, Span>> inputs;
};

struct MapStmt {
  Strength strength = Strength::hint;
  std::string op;
  Span op_span;
  DeviceClass device_class = DeviceClass::cpu;
};

struct ContractStmt {
  std::string scope;  // "end_to_end" or an operator name
  Span scope_span;
  std::vector<Attribute> attrs;
};

using Statement = std::variant<RequireStmt, BindStmt, MapStmt, ContractStmt>;

struct ProgramAST {
  std::vector<Statement> statements;
};

struct ParseResult {
  /// Present iff parsing produced no error-severity diagnostics.
  std::optional<ProgramAST> program;
  /// Every statement that parsed cleanly, including when others failed.
  ProgramAST partial;
  Diagnostics diagnostics;
};

ParseResult parse(const std::vector<Token>& tokens);
ParseResult parse(std::string_view text);

// ---------------------------------------------------------------------------
// Resolved program

struct FrequencyConstraint {
  Comparator cmp = Comparator::geq;
  double hz = 0;
  friend bool operator==(const FrequencyConstraint&, const FrequencyConstraint&) = default;
};

/// Either width x height pixels, or a beam count (height == 0).
struct Resolution {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t beams = 0;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct ExtraAttribute {
  std::string key;
  Comparator cmp = Comparator::eq;
  AttrValue value;
  friend bool operator==(const ExtraAttribute&, const ExtraAttribute&) = default;
};

struct SourceDecl {
  std::string name;
  FrequencyConstraint frequency;
  std::optional<Resolution> resolution;
  std::optional<std::uint64_t> message_size;
  std::vector<ExtraAttribute> extra;
  friend bool operator==(const SourceDecl&, const SourceDecl&) = default;
};

struct OperatorDecl {
  std::string name;
  FrequencyConstraint frequency;
  std::optional<std::uint64_t> output_message_size;
  std::vector<ExtraAttribute> extra;
  friend bool operator==(const OperatorDecl&, const OperatorDecl&) = default;
};

struct NodeBinding {
  std::string result;
  std::string op;
  std::vector<std::string> inputs;
  friend bool operator==(const NodeBinding&, const NodeBinding&) = default;
};

struct MappingAnnotation {
  std::string op;
  DeviceClass device_class = DeviceClass::cpu;
  Strength strength = Strength::hint;
  friend bool operator==(const MappingAnnotation&, const MappingAnnotation&) = default;
};

inline constexpr std::string_view kEndToEnd = "end_to_end";

struct ContractDecl {
  std::string scope = std::string(kEndToEnd);
  std::optional<double> latency_ms;
  std::optional<double> min_frequency_hz;
  std::optional<double> max_latency_std_ms;
  std::optional<double> energy_w;

  bool end_to_end() const { return scope == kEndToEnd; }
  friend bool operator==(const ContractDecl&, const ContractDecl&) = default;
};

struct ResolvedProgram {
  std::vector<SourceDecl> sources;
  std::vector<OperatorDecl> operators;
  std::vector<NodeBinding> bindings;
  std::vector<MappingAnnotation> annotations;
  std::vector<ContractDecl> contracts;

  const SourceDecl* find_source(std::string_view name) const;
  const OperatorDecl* find_operator(std::string_view name) const;
  bool empty() const;

  friend bool operator==(const ResolvedProgram&, const ResolvedProgram&) = default;
};

struct ResolveResult {
  ResolvedProgram program;
  Diagnostics diagnostics;
  bool ok() const { return !has_errors(diagnostics); }
};

ResolveResult resolve(const ProgramAST& ast);

std::string pretty_print(const ResolvedProgram& program);

/// Parses the body of a contract given on the command line, e.g.
/// `end_to_end latency<=0.001ms` or `Control latency <= 5 ms; frequency >= 10 Hz`.
/// Throws Error("E-CONTRACT") on malformed text.
ContractDecl parse_contract_flag(std::string_view text);

/// Convenience: tokenize, parse and resolve in one go.
struct CompileResult {
  std::optional<ResolvedProgram> program;
  Diagnostics diagnostics;
};
CompileResult compile(std::string_view text);

}  // namespace amstack::dsl
