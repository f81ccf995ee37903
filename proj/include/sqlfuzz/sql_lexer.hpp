#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sqlfuzz {

enum class TokenKind {
  Word,         // keyword or bare identifier
  QuotedIdent,  // "x", `x`, [x]
  String,       // 'x', also X'..' blobs
  Number,
  Operator,     // = != <> <= >= || etc.
  Punct,        // ( ) , ; .
  Comment,
  Space,
  Other,
};

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t offset;

  bool is_word(std::string_view upper_keyword) const;
  bool significant() const { return kind != TokenKind::Space && kind != TokenKind::Comment; }
};

/// Lossless, quote- and comment-aware SQL scanner: concatenating the token
/// texts reproduces the input byte for byte.
struct LexResult {
  std::vector<Token> tokens;
  bool complete = true;  // false on an unterminated quote or block comment
};

LexResult lex_sql(std::string_view text);

/// Significant tokens only (no whitespace or comments).
std::vector<Token> significant_tokens(std::string_view text);

/// Splits on top-level `;` outside quotes and comments. Each piece is trimmed
/// and keeps its terminator; empty pieces are dropped.
std::vector<std::string> split_statements(std::string_view text);

/// True if the text contains no unterminated literal/comment and its parentheses balance.
bool is_balanced(std::string_view text);

/// Appends `;` when the statement lacks a terminator.
std::string ensure_terminated(std::string_view stmt);

/// Leading keywords, upper-cased (e.g. {"CREATE", "TABLE"}), up to `n`.
std::vector<std::string> leading_words(std::string_view stmt, std::size_t n);

}  // namespace sqlfuzz
