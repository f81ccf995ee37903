#include <algorithm>
#include <cctype>
#include <climits>

#include "sqlfuzz/grammar.hpp"

namespace sqlfuzz {

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::Sequence: return "Sequence";
    case RuleKind::Optional: return "Optional";
    case RuleKind::Choice: return "Choice";
    case RuleKind::Repeat: return "Repeat";
  }
  return "?";
}

Symbol Symbol::node(GrammarRule r) {
  return {Kind::Nested, {}, std::make_shared<const GrammarRule>(std::move(r))};
}

bool operator==(const Symbol& a, const Symbol& b) {
  if (a.kind != b.kind) return false;
  if (a.kind != Symbol::Kind::Nested) return a.text == b.text;
  return *a.nested == *b.nested;
}

bool operator==(const GrammarRule& a, const GrammarRule& b) {
  return a.name == b.name && a.kind == b.kind && a.children == b.children && a.separator == b.separator;
}

namespace {

struct GToken {
  enum class Kind { Ident, Literal, Punct, End };
  Kind kind;
  std::string text;
  int line;
};

std::vector<GToken> tokenize_grammar(std::string_view src) {
  std::vector<GToken> out;
  int line = 1;
  std::size_t i = 0;
  const std::size_t n = src.size();
  while (i < n) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      while (i < n && src[i] != '\n') ++i;
    } else if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      i += 2;
      while (i + 1 < n && !(src[i] == '*' && src[i + 1] == '/')) {
        if (src[i] == '\n') ++line;
        ++i;
      }
      if (i + 1 >= n) throw Error(Errc::Syntax, "line " + std::to_string(line) + ": unterminated comment");
      i += 2;
    } else if (c == '\'') {
      std::string lit;
      ++i;
      bool closed = false;
      while (i < n) {
        if (src[i] == '\\' && i + 1 < n) {
          lit += src[i + 1];
          i += 2;
          continue;
        }
        if (src[i] == '\'') {
          closed = true;
          ++i;
          break;
        }
        if (src[i] == '\n') break;
        lit += src[i++];
      }
      if (!closed) throw Error(Errc::Syntax, "line " + std::to_string(line) + ": unterminated literal");
      out.push_back({GToken::Kind::Literal, lit, line});
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = i;
      while (i < n && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
      out.push_back({GToken::Kind::Ident, std::string(src.substr(start, i - start)), line});
    } else if (c == '{') {
      // actions / options blocks are skipped wholesale
      int depth = 0;
      while (i < n) {
        if (src[i] == '{') ++depth;
        if (src[i] == '}' && --depth == 0) {
          ++i;
          break;
        }
        if (src[i] == '\n') ++line;
        ++i;
      }
    } else if (c == '+' && i + 1 < n && src[i + 1] == '=') {
      out.push_back({GToken::Kind::Punct, "=", line});
      i += 2;
    } else if (std::string_view(":;|()?*+#=~.").find(c) != std::string_view::npos) {
      out.push_back({GToken::Kind::Punct, std::string(1, c), line});
      ++i;
    } else {
      // only legal inside lexer rules, which are consumed without interpretation
      out.push_back({GToken::Kind::Punct, std::string(1, c), line});
      ++i;
    }
  }
  out.push_back({GToken::Kind::End, "", line});
  return out;
}

bool is_token_name(const std::string& name) {
  return !name.empty() && std::isupper(static_cast<unsigned char>(name[0]));
}

class GrammarParser {
 public:
  explicit GrammarParser(std::vector<GToken> toks) : toks_(std::move(toks)) {}

  void parse(Grammar& g, std::map<std::string, std::string>& aliases,
             std::vector<std::string>& token_refs) {
    while (peek().kind != GToken::Kind::End) {
      if (peek().kind == GToken::Kind::Ident &&
          (peek().text == "grammar" || peek().text == "parser" || peek().text == "lexer" ||
           peek().text == "import" || peek().text == "options" || peek().text == "tokens" ||
           peek().text == "channels" || peek().text == "mode")) {
        skip_statement();
        continue;
      }
      bool fragment = false;
      if (peek().kind == GToken::Kind::Ident && peek().text == "fragment") {
        fragment = true;
        ++pos_;
      }
      const GToken name = expect_ident();
      expect(":");
      if (is_token_name(name.text) || fragment) {
        parse_lexer_rule(name.text, aliases);
        continue;
      }
      if (g.rules.count(name.text))
        throw Error(Errc::Syntax, "line " + std::to_string(name.line) + ": duplicate rule '" + name.text + "'");
      GrammarRule body = parse_alternatives();
      expect(";");
      body.name = name.text;
      g.rules.emplace(name.text, std::move(body));
      g.rule_order.push_back(name.text);
    }
    token_refs = std::move(token_refs_);
  }

 private:
  const GToken& peek() const { return toks_[pos_]; }
  bool at(std::string_view punct) const {
    return peek().kind == GToken::Kind::Punct && peek().text == punct;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::Syntax, "line " + std::to_string(peek().line) + ": " + what);
  }
  void expect(std::string_view punct) {
    if (!at(punct)) fail("expected '" + std::string(punct) + "' near '" + peek().text + "'");
    ++pos_;
  }
  GToken expect_ident() {
    if (peek().kind != GToken::Kind::Ident) fail("expected rule name near '" + peek().text + "'");
    return toks_[pos_++];
  }
  void skip_statement() {
    while (peek().kind != GToken::Kind::End && !at(";")) ++pos_;
    if (at(";")) ++pos_;
  }

  void parse_lexer_rule(const std::string& name, std::map<std::string, std::string>& aliases) {
    // Only a lone literal body is meaningful for expansion: NAME : 'text' ;
    std::vector<GToken> body;
    while (peek().kind != GToken::Kind::End && !at(";")) body.push_back(toks_[pos_++]);
    expect(";");
    if (body.size() == 1 && body[0].kind == GToken::Kind::Literal) aliases[name] = body[0].text;
  }

  GrammarRule parse_alternatives() {
    std::vector<GrammarRule> alts;
    alts.push_back(parse_sequence());
    while (at("|")) {
      ++pos_;
      alts.push_back(parse_sequence());
    }
    if (alts.size() == 1) return std::move(alts[0]);
    GrammarRule choice;
    choice.kind = RuleKind::Choice;
    for (auto& alt : alts) choice.children.push_back(collapse(std::move(alt)));
    return choice;
  }

  static Symbol collapse(GrammarRule seq) {
    if (seq.kind == RuleKind::Sequence && seq.children.size() == 1) return seq.children[0];
    return Symbol::node(std::move(seq));
  }

  GrammarRule parse_sequence() {
    GrammarRule seq;
    seq.kind = RuleKind::Sequence;
    while (!(at("|") || at(")") || at(";") || peek().kind == GToken::Kind::End)) {
      if (at("#")) {  // alternative label
        ++pos_;
        expect_ident();
        continue;
      }
      auto sym = parse_element();
      if (sym) seq.children.push_back(std::move(*sym));
    }
    fold_separated_repeats(seq.children);
    return seq;
  }

  std::optional<Symbol> parse_element() {
    // element labels: x=foo, x+=foo
    if (peek().kind == GToken::Kind::Ident && toks_[pos_ + 1].kind == GToken::Kind::Punct &&
        toks_[pos_ + 1].text == "=")
      pos_ += 2;
    std::optional<Symbol> atom;
    if (at("(")) {
      ++pos_;
      GrammarRule inner = parse_alternatives();
      expect(")");
      atom = collapse(std::move(inner));
    } else if (peek().kind == GToken::Kind::Literal) {
      atom = Symbol::terminal(toks_[pos_++].text);
    } else if (peek().kind == GToken::Kind::Ident) {
      const GToken t = toks_[pos_++];
      if (t.text == "EOF") {
        atom.reset();
      } else if (is_token_name(t.text)) {
        token_refs_.push_back(t.text);
        atom = Symbol{Symbol::Kind::Terminal, t.text, nullptr};
      } else {
        atom = Symbol::nonterminal(t.text);
      }
    } else if (at("~") || at(".")) {
      fail("lexer set/wildcard constructs are not supported in parser rules");
    } else {
      fail("unexpected '" + peek().text + "'");
    }
    while (at("?") || at("*") || at("+")) {
      const std::string op = toks_[pos_++].text;
      if (at("?")) ++pos_;  // non-greedy marker
      if (!atom) continue;
      if (op == "?") {
        atom = wrap(RuleKind::Optional, std::move(*atom));
      } else if (op == "+") {
        atom = wrap(RuleKind::Repeat, std::move(*atom));
      } else {
        atom = wrap(RuleKind::Optional, wrap(RuleKind::Repeat, std::move(*atom)));
      }
    }
    return atom;
  }

  static Symbol wrap(RuleKind kind, Symbol child) {
    GrammarRule r;
    r.kind = kind;
    r.children.push_back(std::move(child));
    return Symbol::node(std::move(r));
  }

  // X (SEP X)*  ==>  Repeat(X, separator SEP)
  static void fold_separated_repeats(std::vector<Symbol>& children) {
    for (std::size_t i = 0; i + 1 < children.size(); ++i) {
      const Symbol& head = children[i];
      const Symbol& tail = children[i + 1];
      if (tail.kind != Symbol::Kind::Nested || tail.nested->kind != RuleKind::Optional) continue;
      const Symbol& rep = tail.nested->children[0];
      if (rep.kind != Symbol::Kind::Nested || rep.nested->kind != RuleKind::Repeat ||
          rep.nested->separator)
        continue;
      const Symbol& body = rep.nested->children[0];
      if (body.kind != Symbol::Kind::Nested || body.nested->kind != RuleKind::Sequence ||
          body.nested->children.size() != 2)
        continue;
      const Symbol& sep = body.nested->children[0];
      if (sep.kind != Symbol::Kind::Terminal || !(body.nested->children[1] == head)) continue;
      GrammarRule r;
      r.kind = RuleKind::Repeat;
      r.children.push_back(head);
      r.separator = sep.text;
      children[i] = Symbol::node(std::move(r));
      children.erase(children.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    }
  }

  std::vector<GToken> toks_;
  std::size_t pos_ = 0;
  std::vector<std::string> token_refs_;
};

void apply_aliases(GrammarRule& rule, const std::map<std::string, std::string>& aliases);

void apply_aliases_sym(Symbol& s, const std::map<std::string, std::string>& aliases) {
  if (s.kind == Symbol::Kind::Terminal) {
    auto it = aliases.find(s.text);
    if (it != aliases.end()) s.text = it->second;
  } else if (s.kind == Symbol::Kind::Nested) {
    GrammarRule copy = *s.nested;
    apply_aliases(copy, aliases);
    s.nested = std::make_shared<const GrammarRule>(std::move(copy));
  }
}

void apply_aliases(GrammarRule& rule, const std::map<std::string, std::string>& aliases) {
  for (auto& c : rule.children) apply_aliases_sym(c, aliases);
  if (rule.separator) {
    auto it = aliases.find(*rule.separator);
    if (it != aliases.end()) rule.separator = it->second;
  }
}

void collect_refs(const GrammarRule& rule, std::vector<std::string>& out) {
  for (const auto& c : rule.children) {
    if (c.kind == Symbol::Kind::NonTerminal) out.push_back(c.text);
    if (c.kind == Symbol::Kind::Nested) collect_refs(*c.nested, out);
  }
}

}  // namespace

Grammar parse_grammar(std::string_view source, const std::vector<std::string>& leaf_set) {
  Grammar g;
  g.leaf_set.insert(leaf_set.begin(), leaf_set.end());
  std::map<std::string, std::string> aliases;
  std::vector<std::string> token_refs;
  GrammarParser(tokenize_grammar(source)).parse(g, aliases, token_refs);
  if (g.rules.empty()) throw Error(Errc::Syntax, "line 1: grammar defines no parser rules");
  for (auto& [name, rule] : g.rules) apply_aliases(rule, aliases);

  std::set<std::string> referenced;
  for (const auto& name : g.rule_order) {
    std::vector<std::string> refs;
    collect_refs(g.rules.at(name), refs);
    for (const auto& r : refs) {
      if (!g.rules.count(r) && !g.is_leaf(r)) throw Error(Errc::UnresolvedReference, r);
      if (r != name) referenced.insert(r);
    }
  }

  // Roots are rules nobody references. A root that is a pure choice of
  // nonterminals (e.g. `statement : select | insert | ...`) contributes its
  // alternatives as the top-level statement symbols.
  for (const auto& name : g.rule_order) {
    if (referenced.count(name) || g.is_leaf(name)) continue;
    const auto& rule = g.rules.at(name);
    bool pure_choice = rule.kind == RuleKind::Choice;
    if (pure_choice) {
      for (const auto& c : rule.children)
        if (c.kind != Symbol::Kind::NonTerminal || !g.is_rule(c.text)) pure_choice = false;
    }
    if (pure_choice) {
      for (const auto& c : rule.children)
        if (std::find(g.start_symbols.begin(), g.start_symbols.end(), c.text) == g.start_symbols.end())
          g.start_symbols.push_back(c.text);
    } else {
      g.start_symbols.push_back(name);
    }
  }
  if (g.start_symbols.empty()) g.start_symbols.push_back(g.rule_order.front());
  return g;
}

std::map<std::string, int> min_depths(const Grammar& g) {
  std::map<std::string, int> md;
  for (const auto& name : g.rule_order) md[name] = INT_MAX;

  struct Eval {
    const Grammar& g;
    const std::map<std::string, int>& md;
    int sym(const Symbol& s) const {
      switch (s.kind) {
        case Symbol::Kind::Terminal: return 0;
        case Symbol::Kind::NonTerminal:
          if (g.is_leaf(s.text)) return 0;
          return md.at(s.text);
        case Symbol::Kind::Nested: return node(*s.nested);
      }
      return 0;
    }
    int node(const GrammarRule& r) const {
      switch (r.kind) {
        case RuleKind::Optional: return 0;
        case RuleKind::Repeat: return sym(r.children[0]);
        case RuleKind::Choice: {
          int best = INT_MAX;
          for (const auto& c : r.children) best = std::min(best, sym(c));
          return best;
        }
        case RuleKind::Sequence: {
          int worst = 0;
          for (const auto& c : r.children) worst = std::max(worst, sym(c));
          return worst;
        }
      }
      return 0;
    }
  };

  bool changed = true;
  while (changed) {
    changed = false;
    Eval ev{g, md};
    for (const auto& name : g.rule_order) {
      if (g.is_leaf(name)) continue;
      const int body = ev.node(g.rules.at(name));
      const int d = body == INT_MAX ? INT_MAX : body + 1;
      if (d < md[name]) {
        md[name] = d;
        changed = true;
      }
    }
  }
  return md;
}

}  // namespace sqlfuzz
