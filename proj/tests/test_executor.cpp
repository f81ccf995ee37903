#include <gtest/gtest.h>
#include <sys/shm.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/executor.hpp"
#include "sqlfuzz/fake_driver.hpp"

using namespace sqlfuzz;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "sqlfuzz_exec_XXXXXX").string();
    path = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TargetConfig fake_config(const TempDir& dir, bool client_server = false) {
  TargetConfig c;
  c.binary = FAKE_TARGET_PATH;
  c.kind = client_server ? DriverKind::ClientServer : DriverKind::Embedded;
  if (client_server) c.args = {"--client-server"};
  c.work_dir = dir.path.string();
  c.statement_timeout = std::chrono::milliseconds(2000);
  c.env = {{"FAKE_TARGET_LOG", (dir.path / "input.log").string()}};
  return c;
}

bool have_sqlite_shell() { return std::string(SQLITE3_SHELL).size() > 0; }

}  // namespace

TEST(CliOutput, ClassifiesShellAndClientErrors) {
  auto a = parse_cli_output("Parse error near line 1: near \"SELEC\": syntax error\n  SELEC 1;\n  ^--- error here\n");
  EXPECT_TRUE(a.error);
  EXPECT_FALSE(a.code.has_value());
  EXPECT_EQ(a.message, "near \"SELEC\": syntax error");
  auto b = parse_cli_output("Error near line 5: UNIQUE constraint failed: a.x\r\n");
  EXPECT_EQ(b.message, "UNIQUE constraint failed: a.x");
  auto c = parse_cli_output("ERROR 1146 (42S02) at line 1: Table 'test_db.t9' doesn't exist\n");
  ASSERT_TRUE(c.code.has_value());
  EXPECT_EQ(*c.code, 1146);
  EXPECT_EQ(c.message, "Table 'test_db.t9' doesn't exist");
  EXPECT_FALSE(parse_cli_output("1|abc\n2|Error in data\n").error);
}

TEST(ProcessDriverFake, SegmentsRepliesPerStatement) {
  TempDir dir;
  ProcessDriver d(fake_config(dir));
  d.reset_environment();
  std::vector<std::string> stmts;
  for (int i = 0; i < 60; ++i) stmts.push_back(i % 7 == 3 ? "SELECT FAIL_NOW;" : "SELECT " + std::to_string(i) + ";");
  auto out = execute(d, stmts);
  ASSERT_EQ(out.per_statement.size(), stmts.size());
  EXPECT_FALSE(out.crash.has_value());
  for (std::size_t i = 0; i < stmts.size(); ++i) {
    const bool fail = i % 7 == 3;
    EXPECT_EQ(out.per_statement[i].status, fail ? StatementStatus::Error : StatementStatus::Ok) << i;
    if (fail) EXPECT_EQ(out.per_statement[i].message, "simulated failure");
  }
  EXPECT_EQ(d.sent_statements(), stmts);
}

TEST(ProcessDriverFake, RefusesDotCommandsAndIncompleteInput) {
  TempDir dir;
  ProcessDriver d(fake_config(dir));
  d.reset_environment();
  auto r1 = d.send(".shell rm -rf /");
  EXPECT_EQ(r1.kind, DriverReply::Kind::Error);
  EXPECT_EQ(r1.message, "dot-commands are not allowed");
  auto r2 = d.send("SELECT 'abc");
  EXPECT_EQ(r2.message, "incomplete input");
  auto r3 = d.send("CREATE TRIGGER tr0 AFTER INSERT ON t0 BEGIN DELETE FROM t0;");
  EXPECT_EQ(r3.message, "incomplete input");
  EXPECT_EQ(d.send("SELECT 1;").kind, DriverReply::Kind::Ok);
  EXPECT_EQ(d.raw_input_log().find(".shell"), std::string::npos);
  EXPECT_EQ(slurp(dir.path / "input.log").find("abc"), std::string::npos);
  EXPECT_EQ(d.sent_statements(), std::vector<std::string>{"SELECT 1;"});
}

TEST(ProcessDriverFake, EmbeddedResetBytes) {
  TempDir dir;
  ProcessDriver d(fake_config(dir));
  d.reset_environment();
  EXPECT_EQ(slurp(dir.path / "input.log"),
            ".open tmp.db\n.print __SQLFUZZ_1_1__\n.open test.db\n.print __SQLFUZZ_1_2__\n");
}

TEST(ProcessDriverFake, ClientServerPreludeBytesAreExact) {
  TempDir dir;
  ProcessDriver d(fake_config(dir, true));
  d.reset_environment();
  EXPECT_EQ(slurp(dir.path / "input.log"),
            "DROP DATABASE IF EXISTS test_db; CREATE DATABASE test_db; USE test_db;\n"
            "SELECT '__SQLFUZZ_1_1__';\n");
  auto out = execute(d, std::vector<std::string>{"SELECT 1;", "SELECT FAIL_NOW;"});
  ASSERT_EQ(out.per_statement.size(), 2u);
  EXPECT_EQ(out.per_statement[1].status, StatementStatus::Error);
  ASSERT_TRUE(out.per_statement[1].code.has_value());
  EXPECT_EQ(*out.per_statement[1].code, 1064);
  EXPECT_EQ(d.send("QUIT;").message, "client commands are not allowed");
}

TEST(ProcessDriverFake, CrashCapturesEvidenceAndRestarts) {
  TempDir dir;
  ProcessDriver d(fake_config(dir));
  d.reset_environment();
  const auto gen = d.generation();
  auto out = execute(d, std::vector<std::string>{"SELECT 1;", "SELECT CRASH_NOW;", "SELECT 2;"});
  ASSERT_TRUE(out.crash.has_value());
  EXPECT_EQ(out.per_statement.size(), 2u);
  EXPECT_EQ(out.crash->trigger_index, 1u);
  EXPECT_TRUE(out.crash->by_signal);
  EXPECT_EQ(out.crash->signal_or_exit, 11);
  EXPECT_FALSE(out.crash->hang);
  EXPECT_LE(out.crash->diagnostic_tail.size(), kDiagnosticTailLines);
  bool saw_report = false;
  for (const auto& l : out.crash->diagnostic_tail) saw_report |= l.find("AddressSanitizer") != std::string::npos;
  EXPECT_TRUE(saw_report);
  for (const auto& l : out.crash->diagnostic_tail) EXPECT_EQ(l.find("__SQLFUZZ_"), std::string::npos);
  EXPECT_FALSE(d.alive());

  d.reset_environment();
  EXPECT_EQ(d.generation(), gen + 1);
  EXPECT_TRUE(d.sent_statements().empty());
  // Different pid and addresses, same masked report.
  auto again = execute(d, std::vector<std::string>{"SELECT CRASH_NOW;"});
  ASSERT_TRUE(again.crash.has_value());
  EXPECT_EQ(again.crash->dedup_key, out.crash->dedup_key);

  d.reset_environment();
  auto ab = execute(d, std::vector<std::string>{"SELECT ABORT_NOW;"});
  ASSERT_TRUE(ab.crash.has_value());
  EXPECT_EQ(ab.crash->signal_or_exit, 6);
  EXPECT_NE(ab.crash->dedup_key, out.crash->dedup_key);

  d.reset_environment();
  auto ex = execute(d, std::vector<std::string>{"SELECT EXIT_NOW;"});
  ASSERT_TRUE(ex.crash.has_value());
  EXPECT_FALSE(ex.crash->by_signal);
  EXPECT_EQ(ex.crash->signal_or_exit, 3);
}

TEST(ProcessDriverFake, HangIsDetectedAndKilled) {
  TempDir dir;
  auto cfg = fake_config(dir);
  cfg.statement_timeout = std::chrono::milliseconds(300);
  ProcessDriver d(cfg);
  d.reset_environment();
  auto out = execute(d, std::vector<std::string>{"SELECT HANG_NOW;", "SELECT 1;"});
  ASSERT_TRUE(out.crash.has_value());
  EXPECT_TRUE(out.crash->hang);
  EXPECT_EQ(out.per_statement.size(), 1u);
  EXPECT_EQ(out.per_statement[0].status, StatementStatus::Hang);
  EXPECT_GE(out.per_statement[0].elapsed, std::chrono::milliseconds(300));
  EXPECT_FALSE(d.alive());
  d.reset_environment();
  EXPECT_EQ(d.send("SELECT 1;").kind, DriverReply::Kind::Ok);
}

TEST(ProcessDriverFake, ResidualStateSurvivesResetButNotRestart) {
  TempDir dir;
  ProcessDriver d(fake_config(dir));
  d.reset_environment();
  EXPECT_FALSE(execute(d, std::vector<std::string>{"SELECT ARM;"}).crash);
  d.reset_environment();
  EXPECT_TRUE(execute(d, std::vector<std::string>{"SELECT FIRE;"}).crash);
  d.reset_environment();  // relaunched: flag gone
  EXPECT_FALSE(execute(d, std::vector<std::string>{"SELECT FIRE;"}).crash);
}

TEST(ProcessDriverFake, MissingBinaryIsTargetUnavailable) {
  TargetConfig c;
  c.binary = "/nonexistent/sqlfuzz-target";
  ProcessDriver d(c);
  try {
    d.reset_environment();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TargetUnavailable);
  }
}

TEST(ProcessDriverFake, SharedMapIdReachesTarget) {
  TempDir dir;
  SharedMapOracle oracle;
  if (!oracle.available()) GTEST_SKIP() << "SysV shared memory unavailable";
  TargetConfig c;
  c.binary = "/bin/sh";
  c.args = {"-c", std::string("echo \"$__AFL_SHM_ID\" > shm_id.txt; exec ") + FAKE_TARGET_PATH};
  c.work_dir = dir.path.string();
  ProcessDriver d(c);
  d.set_extra_env(kShmEnvVar, std::to_string(oracle.shm_id()));
  d.reset_environment();
  EXPECT_EQ(trim(slurp(dir.path / "shm_id.txt")), std::to_string(oracle.shm_id()));
}

TEST(ProcessDriverSqlite, ResetGivesFreshDatabase) {
  if (!have_sqlite_shell()) GTEST_SKIP() << "sqlite3 shell not found";
  TempDir dir;
  TargetConfig c;
  c.binary = SQLITE3_SHELL;
  c.args = {"-batch"};
  c.work_dir = dir.path.string();
  ProcessDriver d(c);
  d.reset_environment();
  auto a = execute(d, std::vector<std::string>{
                          "CREATE TABLE t0 (c0 INT UNIQUE);", "INSERT INTO t0 VALUES (1);",
                          "INSERT INTO t0 VALUES (1);", "SELECT * FROM t9;", "SELEC 1;",
                          "CREATE TRIGGER tr0 AFTER INSERT ON t0 BEGIN DELETE FROM t0 WHERE c0 > 5; END;",
                          "SELECT 'a;b', c0 FROM t0;"});
  ASSERT_EQ(a.per_statement.size(), 7u);
  EXPECT_EQ(a.per_statement[0].status, StatementStatus::Ok);
  EXPECT_EQ(a.per_statement[2].message, "UNIQUE constraint failed: t0.c0");
  EXPECT_EQ(a.per_statement[3].message, "no such table: t9");
  EXPECT_EQ(a.per_statement[4].message, "near \"SELEC\": syntax error");
  EXPECT_EQ(a.per_statement[5].status, StatementStatus::Ok);
  EXPECT_EQ(a.per_statement[6].status, StatementStatus::Ok);
  d.reset_environment();
  auto b = execute(d, std::vector<std::string>{"CREATE TABLE t0 (c0 INT);", "SELECT count(*) FROM sqlite_master;"});
  EXPECT_TRUE(b.clean());
  EXPECT_EQ(b.session_generation, a.session_generation);
}

// ---------------------------------------------------------------------------

TEST(FakeDriver, AccountingInvariant) {
  FakeDriver d({{"BOOM", FakeRule::Action::Crash}});
  for (std::size_t at = 0; at <= 4; ++at) {
    std::vector<std::string> stmts(4, "SELECT 1;");
    if (at < 4) stmts[at] = "SELECT BOOM;";
    d.reset_environment();
    auto out = execute(d, stmts);
    EXPECT_EQ(out.crash.has_value(), at < 4);
    if (out.crash) {
      EXPECT_EQ(out.per_statement.size(), at + 1);
      EXPECT_EQ(out.crash->trigger_index, at);
    } else {
      EXPECT_EQ(out.per_statement.size(), stmts.size());
    }
  }
}

TEST(FakeDriver, RulesHonourFlagsAndBudgets) {
  FakeRule arm{"SETUP", FakeRule::Action::Arm};
  arm.flag = "x";
  FakeRule fire{"TRIGGER_IT", FakeRule::Action::Crash};
  fire.requires_flag = "x";
  FakeRule once{"FLAKY", FakeRule::Action::Crash};
  once.times = 1;
  FakeDriver d({arm, fire, once});
  d.reset_environment();
  EXPECT_FALSE(execute(d, std::vector<std::string>{"SELECT TRIGGER_IT;"}).crash);
  EXPECT_TRUE(execute(d, std::vector<std::string>{"SELECT SETUP;", "SELECT TRIGGER_IT;"}).crash);
  d.reset_environment();
  EXPECT_FALSE(execute(d, std::vector<std::string>{"SELECT TRIGGER_IT;"}).crash);
  EXPECT_TRUE(execute(d, std::vector<std::string>{"SELECT FLAKY;"}).crash);
  d.reset_environment();
  EXPECT_FALSE(execute(d, std::vector<std::string>{"SELECT FLAKY;"}).crash);
}

// ---------------------------------------------------------------------------

namespace {

// Independent restatement of the hit-count classes.
std::uint8_t expected_class(unsigned hits) {
  const unsigned lo[] = {1, 2, 3, 4, 8, 16, 32, 128};
  const unsigned hi[] = {1, 2, 3, 7, 15, 31, 127, 255};
  for (int i = 0; i < 8; ++i)
    if (hits >= lo[i] && hits <= hi[i]) return static_cast<std::uint8_t>(1u << i);
  return 0;
}

}  // namespace

TEST(Coverage, BucketClasses) {
  for (unsigned h = 0; h < 256; ++h) EXPECT_EQ(bucket_class(static_cast<std::uint8_t>(h)), expected_class(h)) << h;
}

TEST(Coverage, FoldCountsNewBucketsOnce) {
  std::vector<std::uint8_t> virgin(16, 0xff);
  std::vector<std::uint8_t> map(16, 0);
  map[1] = 1;
  map[5] = 9;
  map[9] = 200;
  EXPECT_EQ(fold_map(map.data(), virgin), 3u);
  EXPECT_EQ(fold_map(map.data(), virgin), 0u);
  map[5] = 10;  // same class
  EXPECT_EQ(fold_map(map.data(), virgin), 0u);
  map[5] = 40;  // new class on a known edge
  EXPECT_EQ(fold_map(map.data(), virgin), 1u);
}

TEST(Coverage, SharedMapOracleAndFallback) {
  SharedMapOracle o;
  if (!o.available()) GTEST_SKIP() << "SysV shared memory unavailable";
  ExecutionOutcome out;
  out.per_statement.push_back({StatementStatus::Ok, std::nullopt, "", {}, StatementKind::Select, "SELECT"});
  o.map()[10] = 1;
  o.map()[20] = 2;
  o.map()[30] = 3;
  EXPECT_EQ(o.update(out), 3u);
  EXPECT_EQ(o.map()[10], 0);  // cleared for the next case
  o.map()[10] = 1;
  o.map()[20] = 2;
  o.map()[30] = 3;
  EXPECT_EQ(o.update(out), 0u);
  EXPECT_EQ(o.fallback_cases(), 0u);
  // Untouched map: the behavioral oracle answers for this case.
  EXPECT_EQ(o.update(out), 1u);
  EXPECT_EQ(o.fallback_cases(), 1u);
  // The segment is attachable by id, as an instrumented target would.
  void* p = ::shmat(o.shm_id(), nullptr, 0);
  ASSERT_NE(p, reinterpret_cast<void*>(-1));
  static_cast<std::uint8_t*>(p)[7] = 1;
  ::shmdt(p);
  EXPECT_EQ(o.update(out), 1u);
}

TEST(Coverage, BehavioralPairs) {
  BehavioralOracle o;
  auto result = [](StatementKind k, std::string head, StatementStatus s, std::optional<int> code, std::string msg) {
    StatementResult r;
    r.kind = k;
    r.head = std::move(head);
    r.status = s;
    r.code = code;
    r.message = std::move(msg);
    return r;
  };
  ExecutionOutcome a;
  a.per_statement = {result(StatementKind::Select, "SELECT", StatementStatus::Error, 1, "x")};
  EXPECT_EQ(o.update(a), 1u);
  EXPECT_EQ(o.update(a), 0u);
  ExecutionOutcome b;
  b.per_statement = {result(StatementKind::Select, "SELECT", StatementStatus::Error, std::nullopt, "no such table: t9"),
                     result(StatementKind::Select, "SELECT", StatementStatus::Error, std::nullopt, "no such table: t3"),
                     result(StatementKind::Select, "SELECT", StatementStatus::Ok, std::nullopt, "")};
  EXPECT_EQ(o.update(b), 2u);
  EXPECT_EQ(o.covered(), 3u);
  EXPECT_EQ(BehavioralOracle::key_of(b.per_statement[0]), BehavioralOracle::key_of(b.per_statement[1]));
}

TEST(Coverage, Interesting) {
  ExecutionOutcome o;
  EXPECT_FALSE(is_interesting(o));
  o.coverage_new_edges = 2;
  EXPECT_TRUE(is_interesting(o));
  EXPECT_FALSE(is_interesting(o, 2));
  o.coverage_new_edges = 0;
  o.crash = CrashEvidence{};
  EXPECT_TRUE(is_interesting(o));
}

TEST(Coverage, DedupKeyMasksAddressesAndNumbers) {
  EXPECT_EQ(dedup_key({"==12==ERROR at 0x7ffe12", "#0 in f x.c:10"}, "signal:11"),
            dedup_key({"==999==ERROR at 0xdeadbeef", "#0 in f x.c:77"}, "signal:11"));
  EXPECT_NE(dedup_key({"#0 in f"}, "signal:11"), dedup_key({"#0 in g"}, "signal:11"));
  EXPECT_NE(dedup_key({}, "signal:11"), dedup_key({}, "signal:6"));
}

TEST(CliOutput, InteractivePromptsDoNotHideErrors) {
  EXPECT_EQ(strip_prompts("sqlite> Error: cannot rollback - no transaction is active"),
            "Error: cannot rollback - no transaction is active");
  EXPECT_EQ(strip_prompts("sqlite>    ...> Parse error: x"), "Parse error: x");
  EXPECT_EQ(strip_prompts("mysql>     -> ERROR 1146 (42S02): t"), "ERROR 1146 (42S02): t");
  EXPECT_EQ(strip_prompts("plain> text"), "plain> text");
  auto p = parse_cli_output("sqlite> Error: cannot rollback - no transaction is active\n");
  EXPECT_TRUE(p.error);
  EXPECT_EQ(p.message, "cannot rollback - no transaction is active");
  auto q = parse_cli_output("mysql> ERROR 1064 (42000): You have an error\n");
  ASSERT_TRUE(q.error);
  EXPECT_EQ(q.code, 1064);
}

TEST(ProcessDriverSqlite, RuntimeErrorsAreSeenEveryTime) {
  if (!have_sqlite_shell()) GTEST_SKIP() << "no sqlite3 shell";
  TempDir dir;
  TargetConfig c;
  c.binary = SQLITE3_SHELL;
  c.work_dir = dir.path.string();
  ProcessDriver d(c);
  // Alternate ok and failing statements so a prompt is pending before each one.
  for (int round = 0; round < 20; ++round) {
    d.reset_environment();
    EXPECT_EQ(d.send("SELECT 1;").kind, DriverReply::Kind::Ok);
    auto r = d.send("ROLLBACK;");
    ASSERT_EQ(r.kind, DriverReply::Kind::Error) << "round " << round;
    EXPECT_EQ(r.message, "cannot rollback - no transaction is active");
    EXPECT_EQ(d.send("SELECT nosuch;").kind, DriverReply::Kind::Error);
  }
}
