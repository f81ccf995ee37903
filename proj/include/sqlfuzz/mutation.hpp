#pragma once

#include <set>
#include <string>
#include <vector>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/dialect.hpp"
#include "sqlfuzz/testcase.hpp"

namespace sqlfuzz {

enum class RewriteCategory { Predicate, Order, Join };

std::string_view to_string(RewriteCategory c);

/// One site pattern and its candidate replacements. Patterns and replacements
/// are upper-case token sequences ("IS NOT NULL", "!=").
struct RewriteRule {
  std::vector<std::string> from;
  std::vector<std::vector<std::string>> to;
  RewriteCategory category = RewriteCategory::Predicate;
  std::set<std::string> dialect_mask;
};

struct RewriteRuleSet {
  std::string dialect;
  std::vector<RewriteRule> rules;
  std::vector<std::string> joins;  // legal join spellings

  /// Reads rewrites/<dialect>.json. Throws Error(UnknownDialect) or Error(Config).
  static RewriteRuleSet load(const std::string& dialect, const std::string& data_dir = default_data_dir());
};

struct MutationConfig {
  double crossover_bias = 0.5;  // P(draw from o1) while both parents remain
  double drop_low = 0.2;
  double drop_high = 0.4;
  double rewrite_probability = 0.5;  // per matched site

  void validate() const;
};

/// One definition group per table: tables present in both parents take a
/// coin-flip parent. Groups follow first appearance (tables before views).
std::vector<Statement> unify_schemas(const std::vector<Statement>& s1, const std::vector<Statement>& s2, Rng& rng);

std::vector<Statement> crossover(const std::vector<Statement>& o1, const std::vector<Statement>& o2,
                                 const MutationConfig& config, Rng& rng);

/// Independent drop per statement with p ~ U(drop_low, drop_high) resampled
/// each time; a non-empty input never yields an empty output.
std::vector<Statement> drop_filter(const std::vector<Statement>& ops, const MutationConfig& config, Rng& rng);

/// Rewrites predicate sites inside WHERE/HAVING/ON, ASC/DESC inside ORDER BY,
/// and join operators. Literals, identifiers and everything else are kept byte for byte.
Statement logic_shift(const Statement& stmt, const RewriteRuleSet& rules, const std::string& dialect,
                      const MutationConfig& config, Rng& rng);

/// T* = unify(S1, S2) ++ logic_shift(drop_filter(crossover(O1, O2))).
TestCase mutate(const TestCase& t1, const TestCase& t2, const MutationConfig& config, const RewriteRuleSet& rules,
                const std::string& dialect, Rng& rng);

}  // namespace sqlfuzz
