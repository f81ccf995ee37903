#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqlfuzz/executor.hpp"
#include "sqlfuzz/fake_driver.hpp"
#include "sqlfuzz/grammar.hpp"
#include "sqlfuzz/llm.hpp"
#include "sqlfuzz/mutation.hpp"
#include "sqlfuzz/repair.hpp"
#include "sqlfuzz/schema.hpp"
#include "sqlfuzz/testcase.hpp"
#include "sqlfuzz/validation.hpp"

namespace sqlfuzz {

struct PoolEntry {
  TestCase testcase;
  std::size_t new_edges_at_admission = 0;
  double admission_time = 0;  // seconds since campaign start
};

/// Interesting cases kept as crossover parents. With a capacity the oldest
/// entry makes room.
class SeedPool {
 public:
  explicit SeedPool(std::size_t capacity = 0) : capacity_(capacity) {}
  void admit(TestCase testcase, std::size_t new_edges, double admission_time);
  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t admitted() const { return admitted_; }

 private:
  std::size_t capacity_;
  std::vector<PoolEntry> entries_;
  std::size_t admitted_ = 0;
};

/// Two distinct entries, uniformly. Throws Error(InsufficientSeeds) below two.
std::pair<TestCase, TestCase> select_parents(const SeedPool& pool, Rng& rng);

/// Appends what the driver was actually sent for this execution (the
/// executed prefix, minus anything the driver refused) as one case. A new
/// session generation clears what came before.
void record_history(ExecutionHistory& history, const TestCase& testcase, const ExecutionOutcome& outcome,
                    const Driver& driver);

enum class ModelBackend { Mock, Http };

struct CampaignConfig {
  std::string dialect = "sqlite";
  std::string data_dir = default_data_dir();

  // target
  std::string driver = "process";  // process | fake
  TargetConfig target;
  std::string fake_rules_path;     // JSON rules for the fake driver

  // generation
  std::string grammar_path;             // empty: grammars/<dialect>.g4
  std::vector<std::string> leaf_set;    // empty: grammars/<dialect>.leaves
  std::vector<std::string> start_rules; // empty: every start symbol
  ExpansionConfig expansion;
  std::size_t templates_per_case = 5;
  SchemaConfig schema;

  MutationConfig mutation;
  RepairConfig repair;

  ModelBackend backend = ModelBackend::Mock;
  ModelParams model;
  std::string mock_script;         // empty: placeholder filler only
  std::size_t prefetch_workers = 4;

  // scheduling and budget
  double generation_ratio = 0.3;
  std::size_t pool_warmup = 10;    // generation only below this pool size
  std::size_t pool_capacity = 0;   // 0 = unbounded
  std::size_t interesting_threshold = 0;
  std::chrono::milliseconds budget{120000};
  std::size_t max_cases = 0;       // 0 = wall clock only
  bool reduce_hangs = false;       // each hang replay costs a full timeout

  std::string out_dir = "sqlfuzz-out";
  std::uint64_t seed = 1;
  std::size_t stats_interval = 50;  // cases between periodic stats events
  bool log_cases = false;           // cases.ndjson: every executed case and its statuses

  /// Fills the empty grammar/leaf defaults from data_dir and checks every part.
  void finalize();
  void validate() const;
};

/// INI document; see configs/*.ini for the keys. Throws Error(Config).
CampaignConfig load_campaign_config(const std::string& path);
CampaignConfig parse_campaign_config(const std::string& ini_text, const std::string& base_dir = ".");
/// Only the [target] section, for replay and reduce.
CampaignConfig parse_target_config(const std::string& ini_text, const std::string& base_dir = ".");

/// The [target] section for `config`, with absolute paths; PoC directories
/// carry it so they can be replayed on their own.
std::string render_target_ini(const CampaignConfig& config);

/// "90s", "10m", "2h", "500ms", or plain seconds.
std::chrono::milliseconds parse_duration(const std::string& text);

std::vector<std::string> load_leaf_file(const std::string& path);

struct CampaignStats {
  std::size_t cases_executed = 0;
  std::size_t generation_cases = 0;
  std::size_t mutation_cases = 0;
  std::size_t statements_executed = 0;
  std::map<std::string, std::size_t> errors_by_category;
  std::size_t repairs_attempted = 0;
  std::size_t repairs_succeeded = 0;
  std::size_t model_calls = 0;
  std::size_t model_errors = 0;
  std::size_t coverage = 0;
  std::size_t pool_admissions = 0;
  std::map<std::string, std::size_t> crashes;  // by dedup key
  std::map<std::string, std::size_t> crash_classes;
  std::size_t pocs_emitted = 0;
  std::size_t session_failures = 0;
  bool degraded = false;
  double elapsed_seconds = 0;

  double cases_per_minute() const;
  /// Every counter that does not depend on timing.
  nlohmann::json counters_json() const;
  nlohmann::json to_json() const;
  std::string summary() const;
};

/// Injection points for tests and the CLI; null members are built from the config.
struct CampaignDeps {
  Driver* driver = nullptr;
  ModelClient* client = nullptr;
  /// Called after every case with the running stats.
  std::function<void(const CampaignStats&)> on_case;
};

/// The fuzzing loop. Throws only for unusable targets or configuration.
CampaignStats run_campaign(const CampaignConfig& config, const CampaignDeps& deps = {});

/// Builds the driver described by the config's target fields.
std::unique_ptr<Driver> make_driver(const CampaignConfig& config);

/// Reads a PoC or case file: statements, with `-- environment reset` lines
/// marking case boundaries.
std::vector<ReplayStatement> read_replay_file(const std::string& path);

}  // namespace sqlfuzz
