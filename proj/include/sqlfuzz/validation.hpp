#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlfuzz/executor.hpp"
#include "sqlfuzz/testcase.hpp"

namespace sqlfuzz {

enum class CrashClass { Isolated, StateDependent, NonReproducible };

std::string_view to_string(CrashClass c);

/// Statements executed since the last target restart, grouped by case.
class ExecutionHistory {
 public:
  struct Entry {
    std::uint64_t case_id = 0;
    std::vector<std::string> statements;
  };

  /// Appends what was actually sent for one case. A generation change means
  /// the target was restarted, so earlier entries no longer describe its state.
  void record(std::uint64_t case_id, std::vector<std::string> sent, std::uint64_t generation);
  void clear();

  const std::vector<Entry>& entries() const { return entries_; }
  std::uint64_t generation() const { return generation_; }
  std::vector<std::string> flat() const;
  std::size_t statement_count() const;

 private:
  std::vector<Entry> entries_;
  std::uint64_t generation_ = 0;
};

/// One statement of a replayable sequence; `group` marks case boundaries, and
/// replay resets the environment whenever the group changes.
struct ReplayStatement {
  std::string text;
  std::size_t group = 0;
  bool operator==(const ReplayStatement& o) const { return text == o.text && group == o.group; }
};

std::vector<ReplayStatement> as_replay(const std::vector<std::string>& statements, std::size_t group = 0);
std::vector<ReplayStatement> as_replay(const ExecutionHistory& history);

/// Fresh process, then the sequence with resets at group boundaries. Returns
/// the crash, if any (the replay stops at it).
std::optional<CrashEvidence> replay(Driver& driver, const std::vector<ReplayStatement>& sequence);

struct ValidationResult {
  CrashClass crash_class = CrashClass::NonReproducible;
  std::optional<CrashEvidence> evidence;  // from the reproducing replay
};

/// Case alone first, then the full history. A replay counts only if it
/// reproduces the same dedup key.
ValidationResult validate_crash(const TestCase& testcase, const ExecutionHistory& history, Driver& driver,
                                const std::string& dedup_key);
ValidationResult validate_crash(const std::vector<std::string>& case_statements, const ExecutionHistory& history,
                                Driver& driver, const std::string& dedup_key);

// ---------------------------------------------------------------------------
// Delta debugging

struct DdminStats {
  std::size_t oracle_calls = 0;  // distinct subsets evaluated
  std::size_t cache_hits = 0;
};

/// 1-minimal subsequence under `oracle`, order preserved. Throws
/// Error(OracleFlaky) if the oracle rejects the full input.
template <typename T>
std::vector<T> ddmin(const std::vector<T>& input, const std::function<bool(const std::vector<T>&)>& oracle,
                     DdminStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Statement simplification

/// Byte ranges that together form one removable syntactic unit.
struct PruneUnit {
  std::string kind;  // "select_item", "conjunct", "join_arm", "column_def", "clause", "compound_arm", ...
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end)
};

/// Removable units found by the tolerant parser; empty for unreadable text.
std::vector<PruneUnit> prune_units(std::string_view statement);
std::string remove_unit(std::string_view statement, const PruneUnit& unit);

struct SimplifyStep {
  std::string kind;
  std::string candidate;
  bool accepted = false;
};

/// Greedy: try each unit, keep removals the oracle accepts, restart on success.
std::string simplify_statement(const std::string& statement, const std::function<bool(const std::string&)>& oracle,
                               std::vector<SimplifyStep>* log = nullptr);

// ---------------------------------------------------------------------------
// Reduction

struct ReductionLogEntry {
  std::string phase;  // confirm, ddmin, simplify, sweep
  bool accepted = false;
  std::string detail;
};

struct PocReport {
  std::vector<ReplayStatement> statements;
  CrashClass crash_class = CrashClass::Isolated;
  CrashEvidence evidence;
  std::vector<ReductionLogEntry> reduction_log;
  std::uint64_t original_case_id = 0;
  std::size_t original_statements = 0;
  bool flaky = false;
  bool reproduced = false;  // emit-time replay matched the dedup key
  std::size_t oracle_calls = 0;
};

inline constexpr int kConfirmationReplays = 3;

PocReport reduce(const std::vector<ReplayStatement>& input, Driver& driver, const CrashEvidence& evidence,
                 CrashClass crash_class, std::uint64_t original_case_id);

/// Writes poc.sql, meta.json and reduction.log under `dir`.
void write_poc(const std::string& dir, const PocReport& report);

}  // namespace sqlfuzz

#include "sqlfuzz/detail/ddmin.tpp"
