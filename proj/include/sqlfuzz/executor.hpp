#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sqlfuzz/testcase.hpp"

namespace sqlfuzz {

enum class DriverKind { ClientServer, Embedded };

std::string_view to_string(DriverKind kind);

enum class StatementStatus { Ok, Error, Crash, Hang };

std::string_view to_string(StatementStatus s);

struct StatementResult {
  StatementStatus status = StatementStatus::Ok;
  std::optional<int> code;
  std::string message;
  std::chrono::microseconds elapsed{0};
  StatementKind kind = StatementKind::Other;
  std::string head;  // leading keyword, upper-case
};

struct CrashEvidence {
  std::size_t trigger_index = 0;
  int signal_or_exit = 0;
  bool by_signal = false;
  bool hang = false;
  std::vector<std::string> diagnostic_tail;
  std::string dedup_key;
};

struct ExecutionOutcome {
  std::vector<StatementResult> per_statement;  // ends at the crashing/hanging statement
  std::optional<CrashEvidence> crash;
  std::size_t coverage_new_edges = 0;
  std::uint64_t session_generation = 0;

  bool clean() const;  // no crash and every statement ok
};

/// Raw reply to one statement, as seen by a driver.
struct DriverReply {
  enum class Kind { Ok, Error, Died, Hang } kind = Kind::Ok;
  std::optional<int> code;
  std::string message;
  int signal_or_exit = 0;
  bool by_signal = false;
};

inline constexpr std::size_t kDiagnosticTailLines = 30;

/// dedup key over a diagnostic tail: hex addresses and decimal numbers masked.
std::string dedup_key(const std::vector<std::string>& tail, std::string_view event);

/// One persistent session with a target. A single thread owns it.
class Driver {
 public:
  virtual ~Driver() = default;
  virtual DriverKind kind() const = 0;
  /// Launches the target if it is not running.
  virtual void ensure_started() = 0;
  /// Kills and relaunches; bumps the generation.
  virtual void restart() = 0;
  /// Fresh database for the next case. Relaunches a dead target first.
  virtual void reset_environment() = 0;
  virtual DriverReply send(std::string_view statement) = 0;
  virtual bool alive() const = 0;
  virtual std::uint64_t generation() const = 0;
  /// Last lines of target output (stdout and stderr interleaved).
  virtual std::vector<std::string> diagnostic_tail() const = 0;
  /// Statements sent since the last (re)start, in order.
  virtual const std::vector<std::string>& sent_statements() const = 0;
};

enum class CoverageMode { Behavioral, SharedMap };

struct TargetConfig {
  std::string binary;
  std::vector<std::string> args;
  DriverKind kind = DriverKind::Embedded;
  std::optional<std::string> prelude_override;
  std::chrono::milliseconds statement_timeout{5000};
  CoverageMode coverage = CoverageMode::Behavioral;
  std::string work_dir;  // database files live here (Embedded)
  std::vector<std::pair<std::string, std::string>> env;

  void validate() const;
};

inline constexpr std::string_view kClientServerPrelude =
    "DROP DATABASE IF EXISTS test_db; CREATE DATABASE test_db; USE test_db;";

/// Interactive CLI session over a pseudo-terminal in raw mode (no echo).
/// Each statement is followed by a sentinel echo to segment the output.
class ProcessDriver : public Driver {
 public:
  explicit ProcessDriver(TargetConfig config);
  ~ProcessDriver() override;
  ProcessDriver(const ProcessDriver&) = delete;
  ProcessDriver& operator=(const ProcessDriver&) = delete;

  DriverKind kind() const override { return config_.kind; }
  void ensure_started() override;
  void restart() override;
  void reset_environment() override;
  DriverReply send(std::string_view statement) override;
  bool alive() const override { return pid_ > 0; }
  std::uint64_t generation() const override { return generation_; }
  std::vector<std::string> diagnostic_tail() const override;
  const std::vector<std::string>& sent_statements() const override { return sent_; }

  /// Every byte written to the target since construction.
  const std::string& raw_input_log() const { return raw_log_; }
  void set_extra_env(std::string name, std::string value);

 private:
  struct Segment {
    enum class End { Sentinel, Died, Timeout } end;
    std::string output;
  };

  void spawn();
  void kill_target();
  void write_all(std::string_view bytes);
  std::string next_sentinel();
  std::string sentinel_command(const std::string& sentinel) const;
  Segment read_until(const std::string& sentinel, std::chrono::milliseconds timeout);
  void reap(bool block);
  void note_output(std::string_view chunk);
  DriverReply control(std::string_view command);

  TargetConfig config_;
  std::vector<std::pair<std::string, std::string>> extra_env_;
  int pid_ = -1;
  int master_ = -1;
  std::uint64_t generation_ = 0;
  std::uint64_t sentinel_no_ = 0;
  int exit_status_ = 0;
  bool exit_by_signal_ = false;
  bool exited_ = false;
  std::string pending_;          // bytes read past the last sentinel
  std::deque<std::string> tail_;  // completed output lines
  std::string partial_line_;
  std::vector<std::string> sent_;
  std::string raw_log_;
};

/// Classifies the text a statement produced into ok/error.
struct ParsedOutput {
  bool error = false;
  std::optional<int> code;
  std::string message;
};
ParsedOutput parse_cli_output(std::string_view output);

/// Removes leading interactive prompts (`sqlite> `, `   ...> `, `mysql> `, `    -> `).
std::string strip_prompts(std::string_view line);

/// Runs the case statement by statement; stops at a crash or hang.
class CoverageOracle;
ExecutionOutcome execute(Driver& driver, const TestCase& testcase, CoverageOracle* oracle = nullptr);
ExecutionOutcome execute(Driver& driver, const std::vector<std::string>& statements, CoverageOracle* oracle = nullptr);

bool is_interesting(const ExecutionOutcome& outcome, std::size_t threshold = 0);

// ---------------------------------------------------------------------------
// Coverage

class CoverageOracle {
 public:
  virtual ~CoverageOracle() = default;
  /// New entries contributed by the case; folds them into the persistent state.
  virtual std::size_t update(const ExecutionOutcome& outcome) = 0;
  /// Cumulative covered entries.
  virtual std::size_t covered() const = 0;
  virtual std::string_view name() const = 0;
};

/// (statement kind + leading keyword, error code or masked-message hash) pairs.
class BehavioralOracle : public CoverageOracle {
 public:
  std::size_t update(const ExecutionOutcome& outcome) override;
  std::size_t covered() const override { return seen_.size(); }
  std::string_view name() const override { return "behavioral"; }
  static std::string key_of(const StatementResult& r);
  const std::set<std::string>& seen() const { return seen_; }

 private:
  std::set<std::string> seen_;
};

inline constexpr std::size_t kMapSize = 65536;
inline constexpr const char* kShmEnvVar = "__AFL_SHM_ID";

/// Hit-count bucket class of a raw counter: 0, 1, 2, 4, 8, 16, 32, 64, 128.
std::uint8_t bucket_class(std::uint8_t hits);

/// Counts positions whose bucket class is not yet in `virgin` and clears those bits.
std::size_t fold_map(const std::uint8_t* map, std::vector<std::uint8_t>& virgin);

/// SysV shared-memory hit map handed to the target through __AFL_SHM_ID.
class SharedMapOracle : public CoverageOracle {
 public:
  explicit SharedMapOracle(std::size_t map_size = kMapSize);
  ~SharedMapOracle() override;
  SharedMapOracle(const SharedMapOracle&) = delete;
  SharedMapOracle& operator=(const SharedMapOracle&) = delete;

  bool available() const { return map_ != nullptr; }
  int shm_id() const { return shm_id_; }
  std::uint8_t* map() { return map_; }
  /// Reads and clears the map. An unavailable or untouched map falls back
  /// to the behavioral oracle for this case.
  std::size_t update(const ExecutionOutcome& outcome) override;
  std::size_t covered() const override;
  std::string_view name() const override { return "shared_map"; }
  std::size_t fallback_cases() const { return fallback_cases_; }
  const std::vector<std::uint8_t>& virgin() const { return virgin_; }

 private:
  std::size_t size_;
  int shm_id_ = -1;
  std::uint8_t* map_ = nullptr;
  std::vector<std::uint8_t> virgin_;
  std::size_t covered_ = 0;
  BehavioralOracle fallback_;
  std::size_t fallback_cases_ = 0;
};

std::unique_ptr<CoverageOracle> make_oracle(CoverageMode mode);

}  // namespace sqlfuzz
