#include "sqlfuzz/sql_lexer.hpp"

#include <cctype>

#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

bool Token::is_word(std::string_view upper_keyword) const {
  return kind == TokenKind::Word && iequals(text, upper_keyword);
}

namespace {

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80;
}

}  // namespace

LexResult lex_sql(std::string_view s) {
  LexResult out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  auto push = [&](TokenKind k, std::size_t start, std::size_t end) {
    out.tokens.push_back(Token{k, std::string(s.substr(start, end - start)), start});
  };
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    const std::size_t start = i;
    if (std::isspace(c)) {
      while (i < n && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
      push(TokenKind::Space, start, i);
    } else if (c == '-' && i + 1 < n && s[i + 1] == '-') {
      while (i < n && s[i] != '\n') ++i;
      push(TokenKind::Comment, start, i);
    } else if (c == '/' && i + 1 < n && s[i + 1] == '*') {
      i += 2;
      bool closed = false;
      while (i + 1 < n) {
        if (s[i] == '*' && s[i + 1] == '/') {
          i += 2;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed) {
        i = n;
        out.complete = false;
      }
      push(TokenKind::Comment, start, i);
    } else if (c == '\'' || ((c == 'x' || c == 'X') && i + 1 < n && s[i + 1] == '\'')) {
      if (c != '\'') ++i;
      ++i;
      bool closed = false;
      while (i < n) {
        if (s[i] == '\'') {
          if (i + 1 < n && s[i + 1] == '\'') {
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed) out.complete = false;
      push(TokenKind::String, start, i);
    } else if (c == '"' || c == '`' || c == '[') {
      const char close = c == '[' ? ']' : static_cast<char>(c);
      ++i;
      bool closed = false;
      while (i < n) {
        if (s[i] == close) {
          if (close != ']' && i + 1 < n && s[i + 1] == close) {
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed) out.complete = false;
      push(TokenKind::QuotedIdent, start, i);
    } else if (std::isdigit(c) || (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      if (c == '0' && i + 1 < n && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
        i += 2;
        while (i < n && std::isxdigit(static_cast<unsigned char>(s[i]))) ++i;
      } else {
        while (i < n && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
        if (i < n && (s[i] == 'e' || s[i] == 'E')) {
          std::size_t j = i + 1;
          if (j < n && (s[j] == '+' || s[j] == '-')) ++j;
          if (j < n && std::isdigit(static_cast<unsigned char>(s[j]))) {
            i = j;
            while (i < n && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
          }
        }
      }
      push(TokenKind::Number, start, i);
    } else if (is_ident_start(c)) {
      while (i < n && is_ident_char(static_cast<unsigned char>(s[i]))) ++i;
      push(TokenKind::Word, start, i);
    } else if (c == '(' || c == ')' || c == ',' || c == ';' || c == '.') {
      ++i;
      push(TokenKind::Punct, start, i);
    } else {
      static const char* const two_char[] = {"!=", "<>", "<=", ">=", "==", "||", "<<", ">>", "->", ":="};
      bool matched = false;
      if (i + 1 < n) {
        for (const char* op : two_char) {
          if (s[i] == op[0] && s[i + 1] == op[1]) {
            i += 2;
            if ((std::string_view(op) == "->" || std::string_view(op) == "<=") && i < n && s[i] == '>') ++i;
            matched = true;
            break;
          }
        }
      }
      if (!matched) {
        ++i;
        const bool op = std::string_view("=<>+-*/%&|~!^@:?").find(static_cast<char>(c)) != std::string_view::npos;
        push(op ? TokenKind::Operator : TokenKind::Other, start, i);
      } else {
        push(TokenKind::Operator, start, i);
      }
    }
  }
  return out;
}

std::vector<Token> significant_tokens(std::string_view text) {
  std::vector<Token> out;
  for (auto& t : lex_sql(text).tokens)
    if (t.significant()) out.push_back(std::move(t));
  return out;
}

std::vector<std::string> split_statements(std::string_view text) {
  std::vector<std::string> out;
  const auto lexed = lex_sql(text);
  std::string current;
  int depth = 0;
  bool in_trigger_body = false;
  for (const auto& tok : lexed.tokens) {
    current += tok.text;
    if (tok.kind == TokenKind::Punct && tok.text == "(") ++depth;
    if (tok.kind == TokenKind::Punct && tok.text == ")" && depth > 0) --depth;
    // CREATE TRIGGER ... BEGIN ...; END; keeps inner semicolons
    if (tok.is_word("BEGIN") && starts_with_icase(trim(current), "CREATE") &&
        trim(current).find("TRIGGER") != std::string::npos)
      in_trigger_body = true;
    if (in_trigger_body && tok.is_word("END")) in_trigger_body = false;
    if (tok.kind == TokenKind::Punct && tok.text == ";" && depth == 0 && !in_trigger_body) {
      auto piece = trim(current);
      if (!piece.empty() && piece != ";") out.push_back(piece);
      current.clear();
    }
  }
  auto rest = trim(current);
  if (!rest.empty() && !significant_tokens(rest).empty()) out.push_back(rest);
  return out;
}

bool is_balanced(std::string_view text) {
  const auto lexed = lex_sql(text);
  if (!lexed.complete) return false;
  int depth = 0;
  for (const auto& t : lexed.tokens) {
    if (t.kind != TokenKind::Punct) continue;
    if (t.text == "(") ++depth;
    if (t.text == ")" && --depth < 0) return false;
  }
  return depth == 0;
}

std::string ensure_terminated(std::string_view stmt) {
  std::string s = trim(stmt);
  const auto toks = significant_tokens(s);
  if (toks.empty() || toks.back().text != ";") {
    // a trailing line comment would swallow the terminator
    const auto lexed = lex_sql(s);
    if (!lexed.tokens.empty() && lexed.tokens.back().kind == TokenKind::Comment &&
        lexed.tokens.back().text.rfind("--", 0) == 0)
      s += "\n";
    s += ";";
  }
  return s;
}

std::vector<std::string> leading_words(std::string_view stmt, std::size_t n) {
  std::vector<std::string> out;
  for (const auto& t : significant_tokens(stmt)) {
    if (out.size() >= n) break;
    if (t.kind != TokenKind::Word) break;
    out.push_back(to_upper(t.text));
  }
  return out;
}

}  // namespace sqlfuzz
