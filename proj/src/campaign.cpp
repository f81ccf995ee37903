#include "sqlfuzz/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/dialect.hpp"
#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

void SeedPool::admit(TestCase testcase, std::size_t new_edges, double admission_time) {
  if (capacity_ != 0 && entries_.size() >= capacity_) entries_.erase(entries_.begin());
  entries_.push_back({std::move(testcase), new_edges, admission_time});
  ++admitted_;
}

std::pair<TestCase, TestCase> select_parents(const SeedPool& pool, Rng& rng) {
  const std::size_t n = pool.size();
  if (n < 2) throw Error(Errc::InsufficientSeeds, "seed pool holds " + std::to_string(n) + " entries, need 2");
  const std::size_t i = uniform_index(rng, n);
  std::size_t j = uniform_index(rng, n - 1);
  if (j >= i) ++j;
  return {pool.entries()[i].testcase, pool.entries()[j].testcase};
}

void record_history(ExecutionHistory& history, const TestCase& testcase, const ExecutionOutcome& outcome,
                    const Driver& driver) {
  // The driver's send log restarts with every process; history entries are
  // slices of it, so their total length is where the next slice begins.
  const auto& log = driver.sent_statements();
  const std::size_t from =
      outcome.session_generation == history.generation() ? std::min(history.statement_count(), log.size()) : 0;
  history.record(testcase.id, std::vector<std::string>(log.begin() + static_cast<std::ptrdiff_t>(from), log.end()),
                 outcome.session_generation);
}

// ---------------------------------------------------------------------------
// Stats

double CampaignStats::cases_per_minute() const {
  return elapsed_seconds > 0 ? static_cast<double>(cases_executed) * 60.0 / elapsed_seconds : 0.0;
}

json CampaignStats::counters_json() const {
  json j;
  j["cases_executed"] = cases_executed;
  j["generation_cases"] = generation_cases;
  j["mutation_cases"] = mutation_cases;
  j["statements_executed"] = statements_executed;
  j["errors_by_category"] = errors_by_category;
  j["repairs_attempted"] = repairs_attempted;
  j["repairs_succeeded"] = repairs_succeeded;
  j["model_calls"] = model_calls;
  j["model_errors"] = model_errors;
  j["coverage"] = coverage;
  j["pool_admissions"] = pool_admissions;
  j["crashes"] = crashes;
  j["crash_classes"] = crash_classes;
  j["pocs_emitted"] = pocs_emitted;
  j["session_failures"] = session_failures;
  j["degraded"] = degraded;
  return j;
}

json CampaignStats::to_json() const {
  json j = counters_json();
  j["elapsed_seconds"] = elapsed_seconds;
  j["cases_per_minute"] = cases_per_minute();
  return j;
}

std::string CampaignStats::summary() const {
  std::ostringstream o;
  o << "cases executed      " << cases_executed << " (" << generation_cases << " generated, " << mutation_cases
    << " mutated)\n";
  o << "statements executed " << statements_executed << "\n";
  o << "coverage            " << coverage << "\n";
  o << "pool admissions     " << pool_admissions << "\n";
  o << "repairs             " << repairs_succeeded << "/" << repairs_attempted << " succeeded\n";
  o << "model calls         " << model_calls << " (" << model_errors << " failed)" << (degraded ? ", degraded" : "")
    << "\n";
  std::size_t total_crashes = 0;
  for (const auto& [_, n] : crashes) total_crashes += n;
  o << "crashes             " << total_crashes << " (" << crashes.size() << " distinct, " << pocs_emitted
    << " PoCs)\n";
  for (const auto& [cls, n] : crash_classes) o << "  " << cls << ": " << n << "\n";
  if (!errors_by_category.empty()) {
    o << "errors by category\n";
    for (const auto& [cat, n] : errors_by_category) o << "  " << cat << ": " << n << "\n";
  }
  o << "elapsed             " << static_cast<long long>(elapsed_seconds) << "s, " << static_cast<long long>(cases_per_minute())
    << " cases/min\n";
  return o.str();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Driver> make_driver(const CampaignConfig& config) {
  if (config.driver == "fake") {
    std::vector<FakeRule> rules;
    if (!config.fake_rules_path.empty()) rules = parse_fake_rules(read_file(config.fake_rules_path));
    return std::make_unique<FakeDriver>(std::move(rules), config.target.kind);
  }
  return std::make_unique<ProcessDriver>(config.target);
}

std::vector<ReplayStatement> read_replay_file(const std::string& path) {
  std::vector<ReplayStatement> out;
  std::size_t group = 0;
  std::string pending;
  auto flush = [&] {
    for (auto& s : split_statements(pending)) out.push_back({std::move(s), group});
    pending.clear();
  };
  for (const auto& line : split(read_file(path), '\n')) {
    if (trim(line) == "-- environment reset") {
      flush();
      if (!out.empty() && out.back().group == group) ++group;
      continue;
    }
    pending += line;
    pending += '\n';
  }
  flush();
  return out;
}

namespace {

/// Counts calls and failures made through it; used from one thread. Once
/// `disabled` is set, requests fail without reaching the model.
class CountingClient : public ModelClient {
 public:
  CountingClient(ModelClient& inner, const std::atomic<bool>& disabled) : inner_(inner), disabled_(disabled) {}
  std::string complete(const Prompt& prompt, const ModelParams& params) override {
    if (disabled_.load()) throw Error(Errc::Transport, "model disabled after repeated failures");
    ++calls;
    try {
      return inner_.complete(prompt, params);
    } catch (const Error&) {
      ++errors;
      throw;
    }
  }
  std::size_t calls = 0;
  std::size_t errors = 0;

 private:
  ModelClient& inner_;
  const std::atomic<bool>& disabled_;
};

struct GeneratedCase {
  TestCase testcase;
  SchemaContext context;
  std::size_t model_calls = 0;
  std::size_t model_errors = 0;
  bool used_filler = false;
  std::string error;  // set when the job produced nothing usable
};

/// Generation jobs run ahead of the executor on worker threads. Job k always
/// uses the same derived seed, and the executor consumes jobs in index order,
/// so what the campaign sees does not depend on thread timing. With
/// `ordered_calls` the model is also called in job order, which keeps
/// stateful scripted clients reproducible.
class Prefetcher {
 public:
  using Job = std::function<GeneratedCase(std::size_t index, const std::function<void()>& await_turn,
                                          const std::function<void()>& end_turn)>;

  Prefetcher(std::size_t workers, bool ordered_calls, Job job) : ordered_(ordered_calls), job_(std::move(job)) {
    depth_ = workers;
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
  }
  ~Prefetcher() { stop(); }

  GeneratedCase next() {
    std::unique_lock<std::mutex> lock(mu_);
    const std::size_t want = consumed_;
    cv_.wait(lock, [&] { return results_.count(want) != 0; });
    GeneratedCase out = std::move(results_.at(want));
    results_.erase(want);
    ++consumed_;
    cv_.notify_all();
    return out;
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

 private:
  void run() {
    for (;;) {
      std::size_t index = 0;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || next_job_ < consumed_ + depth_; });
        if (stopping_) return;
        index = next_job_++;
      }
      // Every job takes its turn exactly once, even when it fails early or
      // skips the model, so later jobs never wait on it forever.
      bool turn_taken = false;
      auto await_turn = [&] {
        if (!ordered_) return;
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || turn_ == index; });
      };
      auto end_turn = [&] {
        if (!ordered_ || turn_taken) return;
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || turn_ == index; });
        if (turn_ == index) ++turn_;
        turn_taken = true;
        cv_.notify_all();
      };
      GeneratedCase result;
      try {
        result = job_(index, await_turn, end_turn);
      } catch (const std::exception& e) {
        result.error = e.what();
      }
      end_turn();
      {
        std::lock_guard<std::mutex> lock(mu_);
        results_.emplace(index, std::move(result));
      }
      cv_.notify_all();
    }
  }

  bool ordered_;
  Job job_;
  std::size_t depth_ = 1;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::size_t, GeneratedCase> results_;
  std::size_t next_job_ = 0;
  std::size_t consumed_ = 0;
  std::size_t turn_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

constexpr std::size_t kDegradeAfterFailures = 3;
constexpr std::size_t kMaxGenerationFailures = 50;

class Campaign {
 public:
  Campaign(const CampaignConfig& config, const CampaignDeps& deps) : cfg_(config), deps_(deps) {}

  CampaignStats run();

 private:
  GeneratedCase generate(std::size_t index, const std::function<void()>& await_turn,
                         const std::function<void()>& end_turn);
  void handle_crash(const CrashEvidence& evidence, std::uint64_t case_id);
  void emit(const std::string& event, json body);
  void warn(const std::string& message);
  void note_model_calls(std::size_t calls, std::size_t errors);
  double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }
  bool budget_left() const {
    if (cfg_.max_cases != 0 && stats_.cases_executed >= cfg_.max_cases) return false;
    return Clock::now() - start_ < cfg_.budget;
  }

  const CampaignConfig& cfg_;
  const CampaignDeps& deps_;
  Clock::time_point start_ = Clock::now();

  Dialect dialect_;
  Grammar grammar_;
  std::vector<std::string> starts_;
  RewriteRuleSet rewrites_;
  ClassifierTable table_;

  std::unique_ptr<Driver> owned_driver_;
  Driver* driver_ = nullptr;
  std::unique_ptr<ModelClient> owned_client_;
  ModelClient* client_ = nullptr;
  std::unique_ptr<CoverageOracle> oracle_;

  SeedPool pool_;
  ExecutionHistory history_;
  CampaignStats stats_;
  std::atomic<bool> degraded_{false};
  std::size_t consecutive_model_failures_ = 0;
  std::size_t consecutive_generation_failures_ = 0;
  std::ofstream events_;
  std::ofstream case_log_;
};

void Campaign::emit(const std::string& event, json body) {
  body["event"] = event;
  body["t"] = elapsed();
  events_ << body.dump() << '\n';
  events_.flush();
}

void Campaign::note_model_calls(std::size_t calls, std::size_t errors) {
  if (errors == 0) {
    if (calls > 0) consecutive_model_failures_ = 0;
    return;
  }
  consecutive_model_failures_ += errors;
  if (consecutive_model_failures_ >= kDegradeAfterFailures && !degraded_.load()) {
    degraded_ = true;
    warn("model endpoint keeps failing; switching to offline instantiation and mutation");
  }
}

void Campaign::warn(const std::string& message) {
  std::cerr << "sqlfuzz: warning: " << message << '\n';
  emit("warning", {{"message", message}});
}

GeneratedCase Campaign::generate(std::size_t index, const std::function<void()>& await_turn,
                                 const std::function<void()>& end_turn) {
  GeneratedCase out;
  Rng rng(derive_seed(cfg_.seed, 2 * static_cast<std::uint64_t>(index) + 1));
  GeneratedSchema schema = generate_schema(dialect_, cfg_.schema, rng);
  const auto templates = expand_batch(grammar_, starts_, cfg_.expansion, rng, cfg_.templates_per_case);

  std::vector<std::string> ops;
  bool filled = false;
  if (!degraded_.load()) {
    const Prompt prompt = build_instantiation_prompt(schema.context, templates, dialect_, cfg_.model.char_budget());
    await_turn();
    ++out.model_calls;
    try {
      ops = parse_sql_array(client_->complete(prompt, cfg_.model));
      filled = true;
    } catch (const Error&) {
      ++out.model_errors;
    }
    end_turn();
  }
  if (!filled) {
    // Offline instantiation keeps the campaign moving while the model is away.
    out.used_filler = true;
    for (std::size_t i = 0; i < templates.size(); ++i)
      ops.push_back(fill_template(templates[i].text, schema.context, index + i));
  }

  std::vector<Statement> schema_part;
  for (auto& s : schema.statements) schema_part.push_back(Statement::from(s));
  std::vector<Statement> op_part;
  for (auto& s : ops) {
    for (auto& piece : split_statements(s)) {
      Statement st = Statement::from(ensure_terminated(piece));
      register_statement(schema.context, st.text);
      op_part.push_back(std::move(st));
    }
  }
  out.testcase.schema_part = std::move(schema_part);
  out.testcase.op_part = std::move(op_part);
  out.context = std::move(schema.context);
  return out;
}

void Campaign::handle_crash(const CrashEvidence& evidence, std::uint64_t case_id) {
  const std::string& key = evidence.dedup_key;
  const bool first = stats_.crashes[key]++ == 0;
  json ev{{"dedup_key", key}, {"case_id", case_id}, {"hang", evidence.hang}, {"first", first}};
  if (!first || history_.entries().empty()) {
    emit("crash", ev);
    return;
  }
  // The crashing execution is the last history entry.
  const std::vector<std::string> case_statements = history_.entries().back().statements;
  const ValidationResult v = validate_crash(case_statements, history_, *driver_, key);
  stats_.crash_classes[std::string(to_string(v.crash_class))]++;
  ev["class"] = std::string(to_string(v.crash_class));
  emit("crash", ev);

  if (v.crash_class != CrashClass::NonReproducible && (!evidence.hang || cfg_.reduce_hangs)) {
    const auto input = v.crash_class == CrashClass::Isolated ? as_replay(case_statements) : as_replay(history_);
    PocReport rep = reduce(input, *driver_, v.evidence.value_or(evidence), v.crash_class, case_id);
    const std::string dir = (fs::path(cfg_.out_dir) / "pocs" / key.substr(0, std::min<std::size_t>(16, key.size()))).string();
    write_poc(dir, rep);
    write_file((fs::path(dir) / "target.ini").string(), render_target_ini(cfg_));
    ++stats_.pocs_emitted;
    emit("poc", {{"dir", dir},
                 {"dedup_key", key},
                 {"statements", rep.statements.size()},
                 {"original_statements", rep.original_statements},
                 {"flaky", rep.flaky},
                 {"reproduced", rep.reproduced}});
  }
  // Validation replays left the session in an unknown state.
  driver_->restart();
  history_.clear();
}

CampaignStats Campaign::run() {
  dialect_ = load_dialect(cfg_.dialect, cfg_.data_dir);
  grammar_ = parse_grammar(read_file(cfg_.grammar_path), cfg_.leaf_set);
  starts_ = cfg_.start_rules.empty() ? grammar_.start_symbols : cfg_.start_rules;
  for (const auto& s : starts_)
    if (!grammar_.is_rule(s)) throw Error(Errc::Config, "start rule '" + s + "' is not a grammar rule");
  rewrites_ = RewriteRuleSet::load(cfg_.dialect, cfg_.data_dir);
  table_ = ClassifierTable::load(cfg_.dialect, cfg_.data_dir);
  pool_ = SeedPool(cfg_.pool_capacity);

  std::error_code ec;
  fs::create_directories(cfg_.out_dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + cfg_.out_dir + ": " + ec.message());
  events_.open(fs::path(cfg_.out_dir) / "stats.ndjson", std::ios::trunc);
  if (!events_) throw Error(Errc::Io, "cannot write stats under " + cfg_.out_dir);
  if (cfg_.log_cases) case_log_.open(fs::path(cfg_.out_dir) / "cases.ndjson", std::ios::trunc);

  if (deps_.driver) {
    driver_ = deps_.driver;
  } else {
    owned_driver_ = make_driver(cfg_);
    driver_ = owned_driver_.get();
  }
  oracle_ = make_oracle(cfg_.target.coverage);
  if (auto* shm = dynamic_cast<SharedMapOracle*>(oracle_.get()); shm && shm->available()) {
    if (auto* pd = dynamic_cast<ProcessDriver*>(driver_)) pd->set_extra_env(kShmEnvVar, std::to_string(shm->shm_id()));
  }
  if (deps_.client) {
    client_ = deps_.client;
  } else if (cfg_.backend == ModelBackend::Http) {
    owned_client_ = std::make_unique<HttpChatClient>();
    client_ = owned_client_.get();
  } else {
    auto mock = std::make_unique<MockClient>(cfg_.mock_script.empty() ? MockClient()
                                                                       : MockClient::from_script_file(cfg_.mock_script));
    mock->set_rotate_tables(true);
    owned_client_ = std::move(mock);
    client_ = owned_client_.get();
  }

  emit("start", {{"seed", cfg_.seed},
                 {"dialect", cfg_.dialect},
                 {"driver", cfg_.driver},
                 {"coverage", std::string(oracle_->name())},
                 {"budget_ms", cfg_.budget.count()},
                 {"max_cases", cfg_.max_cases}});

  driver_->ensure_started();  // TargetUnavailable is fatal here

  if (cfg_.backend == ModelBackend::Http && !deps_.client) {
    try {
      Prompt probe;
      probe.kind = PromptKind::Instantiation;
      probe.text = "Reply with the JSON array [\"SELECT 1;\"] and nothing else.";
      probe.target_dialect = dialect_.display_name;
      client_->complete(probe, cfg_.model);
    } catch (const Error& e) {
      degraded_ = true;
      warn(std::string("model endpoint unavailable, continuing without it: ") + e.what());
    }
  }

  const bool ordered = dynamic_cast<MockClient*>(client_) != nullptr || cfg_.backend == ModelBackend::Mock;
  Prefetcher prefetch(cfg_.prefetch_workers, ordered,
                      [this](std::size_t i, const std::function<void()>& a, const std::function<void()>& b) {
                        return generate(i, a, b);
                      });

  Rng rng(derive_seed(cfg_.seed, 0));
  CountingClient repair_client(*client_, degraded_);
  std::uint64_t next_id = 1;

  while (budget_left()) {
    const std::uint64_t id = next_id++;
    bool mutate_now = false;
    if (pool_.size() >= 2) {
      if (degraded_.load()) {
        mutate_now = true;
      } else if (pool_.size() >= cfg_.pool_warmup) {
        mutate_now = uniform01(rng) >= cfg_.generation_ratio;
      }
    }

    TestCase tc;
    SchemaContext ctx;
    if (mutate_now) {
      auto [p1, p2] = select_parents(pool_, rng);
      tc = mutate(p1, p2, cfg_.mutation, rewrites_, cfg_.dialect, rng);
      tc.lineage = {p1.id, p2.id};
      for (const auto& s : tc.schema_part) register_statement(ctx, s.text);
      ++stats_.mutation_cases;
    } else {
      GeneratedCase g = prefetch.next();
      stats_.model_calls += g.model_calls;
      stats_.model_errors += g.model_errors;
      note_model_calls(g.model_calls, g.model_errors);
      if (!g.error.empty()) {
        warn("generation failed: " + g.error);
        if (++consecutive_generation_failures_ >= kMaxGenerationFailures)
          throw Error(Errc::Config, "generation keeps failing: " + g.error);
        --next_id;
        continue;
      }
      consecutive_generation_failures_ = 0;
      tc = std::move(g.testcase);
      ctx = std::move(g.context);
      ++stats_.generation_cases;
    }
    tc.id = id;
    if (tc.empty()) {
      --next_id;
      continue;
    }

    bool first_execution = true;
    bool had_errors = false;
    RepairConfig rc = cfg_.repair;
    rc.on_execute = [&](const TestCase& current, const ExecutionOutcome& outcome) {
      TestCase labelled = current;
      labelled.id = id;
      record_history(history_, labelled, outcome, *driver_);
      stats_.statements_executed += outcome.per_statement.size();
      for (const auto& r : tag_errors(outcome, current, table_)) stats_.errors_by_category[std::string(to_string(r.category))]++;
      if (first_execution) {
        had_errors = std::any_of(outcome.per_statement.begin(), outcome.per_statement.end(),
                                 [](const StatementResult& r) { return r.status == StatementStatus::Error; });
        first_execution = false;
      }
    };

    const std::size_t calls_before = repair_client.calls, errors_before = repair_client.errors;
    RepairResult res;
    try {
      res = repair_loop(tc, *driver_, table_, repair_client, cfg_.model, ctx, dialect_, rc, oracle_.get());
    } catch (const Error& e) {
      if (e.code() != Errc::SessionDead) throw;
      ++stats_.session_failures;
      warn(std::string("session lost, restarting target: ") + e.what());
      driver_->restart();  // TargetUnavailable propagates: nothing left to fuzz
      history_.clear();
      continue;
    }
    stats_.model_calls += repair_client.calls - calls_before;
    stats_.model_errors += repair_client.errors - errors_before;
    note_model_calls(repair_client.calls - calls_before, repair_client.errors - errors_before);
    ++stats_.cases_executed;
    if (had_errors) {
      ++stats_.repairs_attempted;
      if (res.outcome.clean()) ++stats_.repairs_succeeded;
    }
    stats_.coverage = oracle_->covered();
    if (case_log_.is_open()) {
      json statuses = json::array();
      for (const auto& r : res.outcome.per_statement) {
        json one = {{"status", std::string(to_string(r.status))}};
        if (r.status == StatementStatus::Error) one["message"] = r.message;
        statuses.push_back(std::move(one));
      }
      case_log_ << json{{"id", id},
                        {"origin", mutate_now ? "mutation" : "generation"},
                        {"lineage", tc.lineage},
                        {"initial", tc.texts()},
                        {"statements", res.testcase.texts()},
                        {"results", statuses},
                        {"model_calls", res.model_calls},
                        {"executions", res.executions},
                        {"new_coverage", res.new_coverage},
                        {"coverage", stats_.coverage}}
                       .dump()
                << '\n';
    }

    if (res.outcome.crash) {
      handle_crash(*res.outcome.crash, id);
    } else if (res.new_coverage > cfg_.interesting_threshold && !res.testcase.empty()) {
      TestCase admitted = res.testcase;
      admitted.id = id;
      admitted.lineage = tc.lineage;
      pool_.admit(std::move(admitted), res.new_coverage, elapsed());
      ++stats_.pool_admissions;
    }
    stats_.degraded = degraded_.load();
    stats_.elapsed_seconds = elapsed();
    if (stats_.cases_executed % cfg_.stats_interval == 0) emit("stats", stats_.to_json());
    if (deps_.on_case) deps_.on_case(stats_);
  }
  prefetch.stop();

  stats_.degraded = degraded_.load();
  stats_.elapsed_seconds = elapsed();
  emit("end", stats_.to_json());
  write_file((fs::path(cfg_.out_dir) / "summary.txt").string(), stats_.summary());
  return stats_;
}

}  // namespace

CampaignStats run_campaign(const CampaignConfig& config, const CampaignDeps& deps) {
  CampaignConfig cfg = config;
  cfg.finalize();
  if (cfg.target.work_dir.empty()) cfg.target.work_dir = (fs::path(cfg.out_dir) / "work").string();
  std::error_code ec;
  fs::create_directories(cfg.target.work_dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + cfg.target.work_dir + ": " + ec.message());
  Campaign c(cfg, deps);
  return c.run();
}

}  // namespace sqlfuzz
