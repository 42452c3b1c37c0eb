#include "wee/lexer.hpp"

#include <array>
#include <cctype>
#include <limits>

#include "wee/errors.hpp"

namespace wee {

namespace {

// Longest spellings first so that "<=" wins over "<".
constexpr std::array<std::string_view, 21> kSymbols = {
    "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")",
    ":",  ",",  "=",  "<",  ">",  "+",  "-",  "*", "/", "%", "!"};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  SourceLocation loc;

  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++loc.line;
        loc.column = 1;
      } else {
        ++loc.column;
      }
    }
  };

  while (i < src.size()) {
    const char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }

    Token tok;
    tok.location = loc;

    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && is_ident_char(src[j])) ++j;
      tok.kind = TokenKind::Identifier;
      tok.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      std::int64_t value = 0;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
        const int digit = src[j] - '0';
        if (value > (std::numeric_limits<std::int64_t>::max() - digit) / 10) {
          throw ParseError("integer literal out of range", loc.line, loc.column);
        }
        value = value * 10 + digit;
        ++j;
      }
      if (j < src.size() && is_ident_start(src[j])) {
        throw ParseError("malformed number", loc.line, loc.column);
      }
      tok.kind = TokenKind::Integer;
      tok.integer = value;
      tok.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (c == '"') {
      std::string text;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < src.size()) {
        const char d = src[j];
        if (d == '"') {
          closed = true;
          break;
        }
        if (d == '\n') break;
        if (d == '\\') {
          if (j + 1 >= src.size()) break;
          const char e = src[j + 1];
          switch (e) {
            case 'n': text += '\n'; break;
            case 't': text += '\t'; break;
            case '"': text += '"'; break;
            case '\\': text += '\\'; break;
            default: throw ParseError(std::string("unknown escape \\") + e, loc.line, loc.column);
          }
          j += 2;
          continue;
        }
        text += d;
        ++j;
      }
      if (!closed) throw ParseError("unterminated string literal", loc.line, loc.column);
      tok.kind = TokenKind::String;
      tok.text = std::move(text);
      advance(j + 1 - i);
    } else {
      bool matched = false;
      for (std::string_view sym : kSymbols) {
        if (src.substr(i, sym.size()) == sym) {
          tok.kind = TokenKind::Symbol;
          tok.text = std::string(sym);
          advance(sym.size());
          matched = true;
          break;
        }
      }
      if (!matched) {
        throw ParseError(std::string("unexpected character '") + c + "'", loc.line, loc.column);
      }
    }
    tokens.push_back(std::move(tok));
  }

  Token end;
  end.kind = TokenKind::End;
  end.location = loc;
  tokens.push_back(std::move(end));
  return tokens;
}

std::string describe(const Token& token) {
  switch (token.kind) {
    case TokenKind::Identifier: return "'" + token.text + "'";
    case TokenKind::Integer: return "integer " + token.text;
    case TokenKind::String: return "string literal";
    case TokenKind::Symbol: return "'" + token.text + "'";
    case TokenKind::End: return "end of input";
  }
  return "?";
}

TokenStream::TokenStream(std::vector<Token> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_.back().kind != TokenKind::End) tokens_.push_back(Token{});
}

const Token& TokenStream::peek(std::size_t ahead) const {
  const std::size_t at = pos_ + ahead;
  return at < tokens_.size() ? tokens_[at] : tokens_.back();
}

Token TokenStream::next() {
  Token t = peek();
  if (pos_ < tokens_.size() - 1) ++pos_;
  return t;
}

bool TokenStream::at_symbol(std::string_view symbol) const {
  return peek().kind == TokenKind::Symbol && peek().text == symbol;
}

bool TokenStream::at_keyword(std::string_view word) const {
  return peek().kind == TokenKind::Identifier && peek().text == word;
}

bool TokenStream::accept_symbol(std::string_view symbol) {
  if (!at_symbol(symbol)) return false;
  next();
  return true;
}

void TokenStream::expect_symbol(std::string_view symbol) {
  if (!at_symbol(symbol)) fail("expected '" + std::string(symbol) + "', found " + describe(peek()));
  next();
}

void TokenStream::expect_keyword(std::string_view word) {
  if (!at_keyword(word)) fail("expected '" + std::string(word) + "', found " + describe(peek()));
  next();
}

Token TokenStream::expect_identifier(std::string_view what) {
  if (peek().kind != TokenKind::Identifier) {
    fail("expected " + std::string(what) + ", found " + describe(peek()));
  }
  return next();
}

void TokenStream::fail(const std::string& message) const { fail_at(peek(), message); }

void TokenStream::fail_at(const Token& token, const std::string& message) {
  throw ParseError(message, token.location.line, token.location.column);
}

}  // namespace wee
