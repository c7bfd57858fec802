#include <cctype>
#include <utility>

#include "amstack/dsl.hpp"

namespace amstack::dsl {

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::kw_require: return "kw_require";
    case TokenKind::kw_node: return "kw_node";
    case TokenKind::kw_hint: return "kw_hint";
    case TokenKind::kw_require_map: return "kw_require_map";
    case TokenKind::kw_on: return "kw_on";
    case TokenKind::kw_contract: return "kw_contract";
    case TokenKind::ident: return "ident";
    case TokenKind::number: return "num";
    case TokenKind::unit: return "unit";
    case TokenKind::times: return "times";
    case TokenKind::geq: return "geq";
    case TokenKind::leq: return "leq";
    case TokenKind::eq: return "eq";
    case TokenKind::lbrace: return "lbrace";
    case TokenKind::rbrace: return "rbrace";
    case TokenKind::lparen: return "lparen";
    case TokenKind::rparen: return "rparen";
    case TokenKind::comma: return "comma";
    case TokenKind::semicolon: return "semicolon";
    case TokenKind::error: return "error";
  }
  return "error";
}

std::string_view to_string(Unit unit) {
  switch (unit) {
    case Unit::none: return "";
    case Unit::hz: return "Hz";
    case Unit::ms: return "ms";
    case Unit::us: return "us";
    case Unit::s: return "s";
    case Unit::bytes: return "B";
    case Unit::kilobytes: return "KB";
    case Unit::megabytes: return "MB";
    case Unit::kbps: return "KBps";
    case Unit::mbps: return "MBps";
    case Unit::watts: return "W";
    case Unit::joules: return "J";
    case Unit::beams: return "beams";
  }
  return "";
}

std::optional<Unit> parse_unit(std::string_view text) {
  static constexpr Unit kUnits[] = {Unit::hz,        Unit::ms,        Unit::us,   Unit::s,
                                    Unit::bytes,     Unit::kilobytes, Unit::megabytes,
                                    Unit::kbps,      Unit::mbps,      Unit::watts,
                                    Unit::joules,    Unit::beams};
  for (auto u : kUnits) {
    if (to_string(u) == text) return u;
  }
  return std::nullopt;
}

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::optional<TokenKind> keyword(std::string_view word) {
  if (word == "require") return TokenKind::kw_require;
  if (word == "node") return TokenKind::kw_node;
  if (word == "hint") return TokenKind::kw_hint;
  if (word == "require_map") return TokenKind::kw_require_map;
  if (word == "on") return TokenKind::kw_on;
  if (word == "contract") return TokenKind::kw_contract;
  return std::nullopt;
}

// Length in bytes of the UTF-8 sequence introduced by `lead` (1 for stray
// continuation bytes so the lexer always makes progress).
std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\n') {
        advance(1);
        ++line_;
        line_start_ = pos_;
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r') {
        advance(1);
        continue;
      }
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance(1);
        continue;
      }
      if (is_digit(c)) {
        lex_number();
        continue;
      }
      if (is_ident_start(c)) {
        lex_word();
        continue;
      }
      lex_punct();
    }
    return std::move(tokens_);
  }

 private:
  Span span_at(std::size_t start, std::size_t length) const {
    return Span{start, line_, start - line_start_ + 1, length};
  }

  void advance(std::size_t n) { pos_ += n; }

  void emit(TokenKind kind, std::size_t start, std::size_t length) {
    tokens_.push_back(Token{kind, std::string(text_.substr(start, length)), span_at(start, length)});
  }

  bool previous_is_number() const {
    return !tokens_.empty() && tokens_.back().kind == TokenKind::number;
  }

  void lex_word() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) advance(1);
    std::string_view word = text_.substr(start, pos_ - start);
    if (auto kw = keyword(word)) {
      emit(*kw, start, word.size());
    } else if (previous_is_number() && parse_unit(word)) {
      emit(TokenKind::unit, start, word.size());
    } else {
      emit(TokenKind::ident, start, word.size());
    }
  }

  void lex_number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_digit(text_[pos_])) advance(1);
    bool decimal = false;
    if (pos_ + 1 < text_.size() && text_[pos_] == '.' && is_digit(text_[pos_ + 1])) {
      decimal = true;
      advance(1);
      while (pos_ < text_.size() && is_digit(text_[pos_])) advance(1);
    }
    std::size_t num_end = pos_;
    if (pos_ >= text_.size() || !is_ident_char(text_[pos_])) {
      emit(TokenKind::number, start, num_end - start);
      return;
    }
    // A number glued to a word: unit suffix (50Hz), dimension (320x240), or
    // an identifier that starts with digits (2DPerception).
    std::size_t run_end = pos_;
    while (run_end < text_.size() && is_ident_char(text_[run_end])) ++run_end;
    std::string_view run = text_.substr(num_end, run_end - num_end);
    if (parse_unit(run)) {
      emit(TokenKind::number, start, num_end - start);
      emit(TokenKind::unit, num_end, run.size());
      pos_ = run_end;
      return;
    }
    if ((run[0] == 'x' || run[0] == 'X') && !decimal) {
      bool digits_only = true;
      for (std::size_t i = 1; i < run.size(); ++i) digits_only = digits_only && is_digit(run[i]);
      if (digits_only) {
        emit(TokenKind::number, start, num_end - start);
        emit(TokenKind::times, num_end, 1);
        pos_ = num_end + 1;
        if (pos_ < run_end) lex_number();
        return;
      }
    }
    if (decimal) {
      emit(TokenKind::number, start, num_end - start);
      return;  // the trailing word is lexed on its own
    }
    pos_ = run_end;
    emit(TokenKind::ident, start, run_end - start);
  }

  void lex_punct() {
    std::size_t start = pos_;
    std::string_view rest = text_.substr(pos_);
    auto single = [&](TokenKind kind, std::size_t len) {
      advance(len);
      emit(kind, start, len);
    };
    if (rest.starts_with(">=")) return single(TokenKind::geq, 2);
    if (rest.starts_with("<=")) return single(TokenKind::leq, 2);
    if (rest.starts_with("\xE2\x89\xA5")) return single(TokenKind::geq, 3);  // ≥
    if (rest.starts_with("\xE2\x89\xA4")) return single(TokenKind::leq, 3);  // ≤
    if (rest.starts_with("\xC3\x97")) {                                      // ×
      single(TokenKind::times, 2);
      if (pos_ < text_.size() && is_digit(text_[pos_])) lex_number();
      return;
    }
    switch (rest[0]) {
      case '=': return single(TokenKind::eq, 1);
      case '{': return single(TokenKind::lbrace, 1);
      case '}': return single(TokenKind::rbrace, 1);
      case '(': return single(TokenKind::lparen, 1);
      case ')': return single(TokenKind::rparen, 1);
      case ',': return single(TokenKind::comma, 1);
      case ';': return single(TokenKind::semicolon, 1);
      default: break;
    }
    std::size_t len = std::min(utf8_length(static_cast<unsigned char>(rest[0])), rest.size());
    single(TokenKind::error, len);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t line_start_ = 0;
  std::vector<Token> tokens_;
};

}  // namespace

std::vector<Token> tokenize(std::string_view text) { return Lexer(text).run(); }

}  // namespace amstack::dsl
