#pragma once

#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "sqlfuzz/dialect.hpp"
#include "sqlfuzz/error_taxonomy.hpp"
#include "sqlfuzz/executor.hpp"
#include "sqlfuzz/llm.hpp"
#include "sqlfuzz/schema.hpp"
#include "sqlfuzz/testcase.hpp"

namespace sqlfuzz {

struct ClassifierRule {
  ErrorCategory category = ErrorCategory::Unknown;
  std::optional<int> code;  // must equal the reply's code when set
  std::string pattern;      // case-insensitive search over the message; empty matches anything
  std::regex re;
  std::optional<std::string> suggestion;  // $1.. refer to pattern groups
  std::string fix;                        // rule-based repair kind
};

struct Classification {
  ErrorCategory category = ErrorCategory::Unknown;
  std::optional<std::string> suggestion;
  std::string fix;
};

/// Ordered per-dialect pattern table; the first matching rule wins and the
/// last rule must be a catch-all mapping to Unknown.
class ClassifierTable {
 public:
  std::string dialect;
  std::vector<ClassifierRule> rules;
  std::map<ErrorCategory, std::string> category_suggestions;

  /// Reads errors/<dialect>.rules. Throws Error(Config) on malformed tables.
  static ClassifierTable load(const std::string& dialect, const std::string& data_dir = default_data_dir());
  static ClassifierTable parse(std::string_view json_text);

  Classification classify(std::optional<int> code, std::string_view message) const;
};

/// One record per statement whose reply was an error.
std::vector<ErrorRecord> tag_errors(const ExecutionOutcome& outcome, const TestCase& testcase,
                                    const ClassifierTable& table);

/// Triviality proxy for SELECTs: 1 + parenthesized-subquery nesting + clause count.
int select_depth(std::string_view statement);
inline constexpr int kMinSelectDepth = 3;

enum class FilterAction { Drop, Repair, KeepAsIs };

struct FilterDecision {
  std::size_t record = 0;  // index into the input records
  FilterAction action = FilterAction::Repair;
  std::string reason;
};

struct FilterResult {
  std::vector<FilterDecision> decisions;
  std::vector<ErrorRecord> retained;         // records that go on to repair
  std::vector<std::size_t> dropped_statements;  // flat indices, ascending
};

FilterResult syntax_filter(const TestCase& testcase, const std::vector<ErrorRecord>& records);

/// Removes statements by flat index; remaps the records that point past them.
TestCase drop_statements(const TestCase& testcase, const std::vector<std::size_t>& flat_indices,
                         std::vector<ErrorRecord>& records);

/// Localized rewrite named by record.fix. nullopt means no rule applies.
std::optional<std::string> rule_repair(const ErrorRecord& record, const Statement& statement, const Dialect& dialect);

struct SarResult {
  TestCase testcase;
  bool repair_failed = false;
  std::string failure;
};

/// One model round trip over every SAR-routed record of the case.
SarResult semantic_repair(const TestCase& testcase, std::vector<ErrorRecord> records, SchemaContext& context,
                          ModelClient& client, const ModelParams& params, const Dialect& dialect);

struct RepairConfig {
  int max_rounds = 3;  // model calls per case
  /// Sees every execution, right after it ran.
  std::function<void(const TestCase&, const ExecutionOutcome&)> on_execute;
  void validate() const;
};

struct RepairRound {
  std::size_t errors = 0;
  std::size_t dropped = 0;
  std::size_t rule_fixed = 0;
  std::size_t sent_to_model = 0;
};

struct RepairResult {
  TestCase testcase;          // the case `outcome` was produced by
  ExecutionOutcome outcome;
  bool repair_failed = false;
  int model_calls = 0;
  int executions = 0;
  std::size_t new_coverage = 0;  // summed over every execution
  std::vector<RepairRound> rounds;
};

/// execute -> tag -> filter -> rule repair -> model repair, each execution on
/// a freshly reset environment, until no model-routed error remains or the
/// model budget is spent. Stops early on a crash or hang.
RepairResult repair_loop(const TestCase& testcase, Driver& driver, const ClassifierTable& table, ModelClient& client,
                         const ModelParams& params, SchemaContext& context, const Dialect& dialect,
                         const RepairConfig& config = {}, CoverageOracle* oracle = nullptr);

}  // namespace sqlfuzz
