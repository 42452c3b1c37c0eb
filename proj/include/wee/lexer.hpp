#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace wee {

struct SourceLocation {
  std::size_t line = 1;
  std::size_t column = 1;
};

enum class TokenKind { Identifier, Integer, String, Symbol, End };

struct Token {
  TokenKind kind = TokenKind::End;
  std::string text;  // identifier name, decoded string contents, or symbol spelling
  std::int64_t integer = 0;
  SourceLocation location;
};

/// Splits source text into tokens. `#` starts a comment running to end of line.
/// Throws ParseError on malformed input.
std::vector<Token> tokenize(std::string_view source);

/// Cursor over a token vector, shared by the expression and workflow parsers.
class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> tokens);

  const Token& peek(std::size_t ahead = 0) const;
  Token next();

  bool at_symbol(std::string_view symbol) const;
  bool at_keyword(std::string_view word) const;
  bool at_end() const { return peek().kind == TokenKind::End; }

  /// Consumes the symbol if present.
  bool accept_symbol(std::string_view symbol);

  void expect_symbol(std::string_view symbol);
  void expect_keyword(std::string_view word);
  Token expect_identifier(std::string_view what);

  [[noreturn]] void fail(const std::string& message) const;
  [[noreturn]] static void fail_at(const Token& token, const std::string& message);

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

std::string describe(const Token& token);

}  // namespace wee
