#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

enum class RuleKind { Sequence, Optional, Choice, Repeat };

std::string_view to_string(RuleKind kind);

struct GrammarRule;

struct Symbol {
  enum class Kind { Terminal, NonTerminal, Nested };
  Kind kind = Kind::Terminal;
  std::string text;  // terminal text or nonterminal name
  std::shared_ptr<const GrammarRule> nested;

  static Symbol terminal(std::string t) { return {Kind::Terminal, std::move(t), nullptr}; }
  static Symbol nonterminal(std::string n) { return {Kind::NonTerminal, std::move(n), nullptr}; }
  static Symbol node(GrammarRule r);
};

bool operator==(const Symbol& a, const Symbol& b);

/// One production node. Named rules carry `name`; nested groups leave it empty.
/// Choice: >= 2 children. Optional: exactly 1. Repeat: exactly 1 plus an
/// optional separator token, always one-or-more items.
struct GrammarRule {
  std::string name;
  RuleKind kind = RuleKind::Sequence;
  std::vector<Symbol> children;
  std::optional<std::string> separator;
};

bool operator==(const GrammarRule& a, const GrammarRule& b);

struct Grammar {
  std::map<std::string, GrammarRule> rules;
  std::vector<std::string> start_symbols;
  std::set<std::string> leaf_set;
  std::vector<std::string> rule_order;  // declaration order

  bool is_leaf(const std::string& name) const { return leaf_set.count(name) != 0; }
  bool is_rule(const std::string& name) const { return rules.count(name) != 0 && !is_leaf(name); }
};

struct ExpansionConfig {
  int max_depth = 6;
  int default_quota = 3;
  std::map<std::string, int> rule_quota;
  double optional_probability = 0.5;
  double repeat_continue_probability = 0.5;  // geometric extra-item draw
  std::size_t step_budget = 200000;

  int quota_for(const std::string& name) const;
  void validate() const;
};

/// One recorded decision. `choice == kEnter` marks entry into the named
/// nonterminal (rule or leaf); other steps record the decision taken inside
/// `rule`: Optional 0/1, Choice child index, Repeat item count.
struct TraceStep {
  static constexpr int kEnter = -1;
  std::string rule;
  int choice = 0;
  bool operator==(const TraceStep&) const = default;
};

struct SqlTemplate {
  std::string start;
  std::string text;
  std::vector<TraceStep> derivation_trace;
  int depth = 0;

  std::map<std::string, int> nonterminal_uses() const;
  /// Leaf names rendered as `[name]` placeholders, in order of appearance.
  std::vector<std::string> placeholders() const;
};

/// Parses the supported ANTLR4 parser-rule subset. Throws Error(Syntax) with
/// the offending line, or Error(UnresolvedReference) for dangling names.
Grammar parse_grammar(std::string_view source, const std::vector<std::string>& leaf_set);

/// Minimal derivation depth per rule (named rule alone = 1); unreachable
/// within any finite bound reports INT_MAX.
std::map<std::string, int> min_depths(const Grammar& grammar);

SqlTemplate expand(const Grammar& grammar, const std::string& start, const ExpansionConfig& config,
                   Rng& rng);

std::vector<SqlTemplate> expand_batch(const Grammar& grammar, const std::vector<std::string>& starts,
                                      const ExpansionConfig& config, Rng& rng, std::size_t count);

/// Every distinct template reachable within the bounds, sorted by text.
std::vector<SqlTemplate> enumerate_all(const Grammar& grammar, const std::string& start,
                                       const ExpansionConfig& config, std::size_t cap = 200000);

/// Re-derives the text from a trace; throws Error(Syntax) if the trace does
/// not describe a derivation under these bounds.
std::string replay_trace(const Grammar& grammar, const std::string& start,
                         const ExpansionConfig& config, const std::vector<TraceStep>& trace);

/// Joins rendered pieces with single spaces, gluing punctuation.
std::string render_pieces(const std::vector<std::string>& pieces);

}  // namespace sqlfuzz
