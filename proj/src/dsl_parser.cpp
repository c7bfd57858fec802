#include <charconv>
#include <cmath>

#include "amstack/dsl.hpp"

namespace amstack::dsl {

namespace {

bool starts_statement(TokenKind kind) {
  return kind == TokenKind::kw_require || kind == TokenKind::kw_node ||
         kind == TokenKind::kw_hint || kind == TokenKind::kw_require_map ||
         kind == TokenKind::kw_contract;
}

std::string describe(TokenKind kind) {
  switch (kind) {
    case TokenKind::ident: return "identifier";
    case TokenKind::number: return "number";
    case TokenKind::unit: return "unit";
    case TokenKind::times: return "'x'";
    case TokenKind::geq: return "'>='";
    case TokenKind::leq: return "'<='";
    case TokenKind::eq: return "'='";
    case TokenKind::lbrace: return "'{'";
    case TokenKind::rbrace: return "'}'";
    case TokenKind::lparen: return "'('";
    case TokenKind::rparen: return "')'";
    case TokenKind::comma: return "','";
    case TokenKind::semicolon: return "';'";
    case TokenKind::kw_on: return "'on'";
    default: return std::string(to_string(kind));
  }
}

struct SyntaxError {};

class Parser {
 public:
  explicit Parser(const std::vector<Token>& tokens) : toks_(tokens) {
    if (!toks_.empty()) {
      const Span& last = toks_.back().span;
      eof_ = Span{last.offset + last.length, last.line, last.column + last.length, 0};
    } else {
      eof_ = Span{0, 1, 1, 0};
    }
  }

  ParseResult run() {
    ParseResult result;
    while (!at_end()) {
      const Token& tok = peek();
      if (!starts_statement(tok.kind)) {
        if (tok.kind == TokenKind::error) {
          report_bad_char(tok);
        } else {
          error("E-SYNTAX", tok.span,
                "expected a statement (require, node, hint, require_map, contract), found '" +
                    tok.text + "'");
        }
        skip_to_statement();
        continue;
      }
      std::size_t start = pos_;
      try {
        result.partial.statements.push_back(statement());
      } catch (const SyntaxError&) {
        if (pos_ == start) ++pos_;
        while (!at_end() && !starts_statement(peek().kind)) ++pos_;
      }
    }
    result.diagnostics = std::move(diags_);
    if (!has_errors(result.diagnostics)) result.program = result.partial;
    return result;
  }

 private:
  bool at_end() const { return pos_ >= toks_.size(); }
  const Token& peek() const { return toks_[pos_]; }
  bool check(TokenKind kind) const { return !at_end() && peek().kind == kind; }
  const Token& take() { return toks_[pos_++]; }
  Span here() const { return at_end() ? eof_ : peek().span; }

  void skip_to_statement() {
    // Always consume at least one token so recovery makes progress.
    if (!at_end()) ++pos_;
    while (!at_end() && !starts_statement(peek().kind)) ++pos_;
  }

  void error(std::string code, Span span, std::string message) {
    diags_.push_back(Diagnostic{Severity::error, span, std::move(code), std::move(message)});
  }

  void report_bad_char(const Token& tok) {
    error("E-CHAR", tok.span, "unexpected character '" + tok.text + "'");
  }

  [[noreturn]] void fail_expected(std::initializer_list<TokenKind> expected) {
    if (!at_end() && peek().kind == TokenKind::error) {
      report_bad_char(peek());
      throw SyntaxError{};
    }
    std::string msg = "expected ";
    bool first = true;
    for (auto kind : expected) {
      msg += first ? "" : " or ";
      msg += describe(kind);
      first = false;
    }
    msg += at_end() ? ", found end of input" : ", found '" + peek().text + "'";
    error("E-SYNTAX", here(), std::move(msg));
    throw SyntaxError{};
  }

  const Token& expect(TokenKind kind) {
    if (!check(kind)) fail_expected({kind});
    return take();
  }

  Statement statement() {
    switch (peek().kind) {
      case TokenKind::kw_require: return require_stmt();
      case TokenKind::kw_node: return bind_stmt();
      case TokenKind::kw_hint:
      case TokenKind::kw_require_map: return map_stmt();
      case TokenKind::kw_contract: return contract_stmt();
      default: fail_expected({TokenKind::kw_require});
    }
  }

  std::vector<Attribute> attr_block() {
    const Token& open = expect(TokenKind::lbrace);
    std::vector<Attribute> attrs;
    while (true) {
      if (at_end() || starts_statement(peek().kind)) {
        error("E-BRACE", open.span, "unclosed '{'");
        throw SyntaxError{};
      }
      if (check(TokenKind::rbrace) && !attrs.empty()) break;  // trailing ';'
      attrs.push_back(attribute());
      if (check(TokenKind::semicolon)) {
        take();
        continue;
      }
      if (check(TokenKind::rbrace)) break;
      if (at_end() || starts_statement(peek().kind)) {
        error("E-BRACE", open.span, "unclosed '{'");
        throw SyntaxError{};
      }
      fail_expected({TokenKind::semicolon, TokenKind::rbrace});
    }
    take();  // '}'
    return attrs;
  }

  double number_value(const Token& tok) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
    if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size() || !std::isfinite(v)) {
      error("E-NUMBER", tok.span, "malformed number '" + tok.text + "'");
      throw SyntaxError{};
    }
    return v;
  }

  std::uint32_t dimension(const Token& tok) {
    double v = number_value(tok);
    if (v != std::floor(v) || v < 0 || v > 1e9) {
      error("E-NUMBER", tok.span, "dimension must be a whole number, found '" + tok.text + "'");
      throw SyntaxError{};
    }
    return static_cast<std::uint32_t>(v);
  }

  bool at_times() const {
    return check(TokenKind::times) ||
           (check(TokenKind::ident) && (peek().text == "x" || peek().text == "X"));
  }

  Attribute attribute() {
    Attribute attr;
    const Token& key = expect(TokenKind::ident);
    attr.key = key.text;
    if (check(TokenKind::geq)) {
      attr.cmp = Comparator::geq;
    } else if (check(TokenKind::leq)) {
      attr.cmp = Comparator::leq;
    } else if (check(TokenKind::eq)) {
      attr.cmp = Comparator::eq;
    } else {
      fail_expected({TokenKind::geq, TokenKind::leq, TokenKind::eq});
    }
    take();
    Span end = key.span;
    if (check(TokenKind::number)) {
      const Token& num = take();
      end = num.span;
      if (at_times()) {
        take();
        const Token& second = expect(TokenKind::number);
        end = second.span;
        attr.value = Dimensions{dimension(num), dimension(second)};
      } else {
        Quantity q{number_value(num), Unit::none};
        if (check(TokenKind::unit)) {
          const Token& unit = take();
          end = unit.span;
          q.unit = *parse_unit(unit.text);
        }
        attr.value = q;
      }
    } else if (check(TokenKind::ident)) {
      const Token& word = take();
      end = word.span;
      attr.value = word.text;
    } else {
      fail_expected({TokenKind::number, TokenKind::ident});
    }
    attr.span = Span{key.span.offset, key.span.line, key.span.column,
                     end.offset + end.length - key.span.offset};
    return attr;
  }

  RequireStmt require_stmt() {
    take();
    RequireStmt stmt;
    const Token& name = expect(TokenKind::ident);
    stmt.name = name.text;
    stmt.name_span = name.span;
    stmt.attrs = attr_block();
    return stmt;
  }

  BindStmt bind_stmt() {
    take();
    BindStmt stmt;
    const Token& result = expect(TokenKind::ident);
    stmt.result = result.text;
    stmt.result_span = result.span;
    expect(TokenKind::eq);
    const Token& op = expect(TokenKind::ident);
    stmt.op = op.text;
    stmt.op_span = op.span;
    const Token& open = expect(TokenKind::lparen);
    auto unclosed = [&] {
      error("E-PAREN", open.span, "unclosed '(' in binding of '" + stmt.result + "'");
      throw SyntaxError{};
    };
    while (true) {
      if (at_end() || starts_statement(peek().kind)) unclosed();
      const Token& input = expect(TokenKind::ident);
      stmt.inputs.emplace_back(input.text, input.span);
      if (at_end() || starts_statement(peek().kind)) unclosed();
      if (check(TokenKind::comma)) {
        take();
        continue;
      }
      if (check(TokenKind::rparen)) {
        take();
        break;
      }
      fail_expected({TokenKind::comma, TokenKind::rparen});
    }
    return stmt;
  }

  MapStmt map_stmt() {
    MapStmt stmt;
    stmt.strength = take().kind == TokenKind::kw_hint ? Strength::hint : Strength::requirement;
    const Token& op = expect(TokenKind::ident);
    stmt.op = op.text;
    stmt.op_span = op.span;
    expect(TokenKind::kw_on);
    const Token& cls = expect(TokenKind::ident);
    auto parsed = parse_device_class(cls.text);
    if (!parsed) {
      error("E-DEVCLASS", cls.span,
            "unknown device class '" + cls.text + "' (expected cpu, gpu, dsp, fpga, accelerator)");
      throw SyntaxError{};
    }
    stmt.device_class = *parsed;
    return stmt;
  }

  ContractStmt contract_stmt() {
    take();
    ContractStmt stmt;
    const Token& scope = expect(TokenKind::ident);
    stmt.scope = scope.text;
    stmt.scope_span = scope.span;
    stmt.attrs = attr_block();
    return stmt;
  }

  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;
  Span eof_;
  Diagnostics diags_;
};

}  // namespace

ParseResult parse(const std::vector<Token>& tokens) { return Parser(tokens).run(); }

ParseResult parse(std::string_view text) { return parse(tokenize(text)); }

}  // namespace amstack::dsl
