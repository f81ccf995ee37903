#include <gtest/gtest.h>

#include <httplib.h>
#include <json.hpp>
#include <thread>

#include "sqlfuzz/llm.hpp"
#include "sqlfuzz/sql_lexer.hpp"
#include "support/sqlite_db.hpp"

using namespace sqlfuzz;

namespace {

SchemaContext one_table() {
  SchemaContext ctx;
  ctx.init_statements = {"CREATE TABLE t0 (c0 INT, c1 TEXT);", "INSERT INTO t0 VALUES (1, 'a');"};
  for (const auto& s : ctx.init_statements) register_statement(ctx, s);
  return ctx;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(Prompt, InstantiationCarriesSchemaAndTemplates) {
  const auto d = load_dialect("sqlite");
  const auto p = build_instantiation_prompt(one_table(), std::vector<std::string>{"SELECT * FROM [tableName];"}, d);
  EXPECT_EQ(p.kind, PromptKind::Instantiation);
  EXPECT_NE(p.text.find("CREATE TABLE t0 (c0 INT, c1 TEXT);"), std::string::npos);
  EXPECT_NE(p.text.find("[tableName]"), std::string::npos);
  EXPECT_NE(p.text.find("executable in SQLite"), std::string::npos);
  EXPECT_NE(p.text.find("[\"SQL1;\", \"SQL2;\", ...]"), std::string::npos);
  EXPECT_EQ(p.text.find('{'), std::string::npos) << "unfilled slot";

  const auto again = build_instantiation_prompt(one_table(), std::vector<std::string>{"SELECT * FROM [tableName];"}, d);
  EXPECT_EQ(p.text, again.text);

  const auto empty = build_instantiation_prompt({}, std::vector<std::string>{"COMMIT;"}, d);
  const auto slots = extract_slots(PromptTemplates::shared().instantiation, empty.text);
  ASSERT_TRUE(slots);
  EXPECT_EQ(slots->at("init_schema_statements"), "");
  EXPECT_EQ(slots->at("sql_templates"), "COMMIT;");

  try {
    build_instantiation_prompt(one_table(), std::vector<std::string>{}, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyTemplates);
  }
}

TEST(Prompt, TruncationDropsOldestInsertsFirst) {
  const auto d = load_dialect("sqlite");
  SchemaContext ctx;
  ctx.init_statements = {"CREATE TABLE t0 (c0 INT);", "INSERT INTO t0 VALUES (1);", "INSERT INTO t0 VALUES (2);",
                         "INSERT INTO t0 VALUES (3);"};
  const auto full = build_instantiation_prompt(ctx, std::vector<std::string>{"SELECT 1;"}, d);
  const auto cut = build_instantiation_prompt(ctx, std::vector<std::string>{"SELECT 1;"}, d, full.text.size() - 10);
  EXPECT_EQ(cut.dropped_inserts, 1u);
  EXPECT_EQ(cut.text.find("VALUES (1)"), std::string::npos);
  EXPECT_NE(cut.text.find("VALUES (3)"), std::string::npos);
  const auto tiny = build_instantiation_prompt(ctx, std::vector<std::string>{"SELECT 1;"}, d, 10);
  EXPECT_EQ(tiny.dropped_inserts, 3u);
  EXPECT_NE(tiny.text.find("CREATE TABLE t0"), std::string::npos);
}

TEST(Prompt, RepairMarkers) {
  const auto d = load_dialect("sqlite");
  const auto tc = TestCase::from_texts(
      {"CREATE TABLE t0 (c0 INT);", "INSERT INTO t0 VALUES (1);", "SELECT 1;", "SELECT * FROM t9;", "SELECT 2;"});
  ErrorRecord e;
  e.statement_index = 3;
  e.message = "no such table: t9";
  const auto p = build_repair_prompt(tc, {e}, d);
  EXPECT_EQ(p.kind, PromptKind::Repair);
  EXPECT_EQ(count(p.text, "-- [Need to repair<\nSELECT * FROM t9;\n-- no such table: t9\n-- >Need to repair]"), 1u);
  // one block in the case body, plus the format description
  const auto body = render_marked_case(tc, {e});
  EXPECT_EQ(count(body, "-- [Need to repair<"), 1u);

  ErrorRecord e2;
  e2.statement_index = 1;
  e2.message = "UNIQUE constraint failed: t0.c0";
  e2.suggestion = "Create the missing object before this statement";
  const auto two = render_marked_case(tc, {e, e2});
  EXPECT_EQ(count(two, "-- [Need to repair<"), 2u);
  const auto first = two.find("INSERT INTO t0 VALUES (1);");
  const auto second = two.find("SELECT * FROM t9;");
  EXPECT_LT(first, second);
  EXPECT_LT(two.find("-- >Need to repair]"), second);
  EXPECT_NE(two.find("-- (Create the missing object before this statement)"), std::string::npos);

  ErrorRecord bad;
  bad.statement_index = 5;
  try {
    build_repair_prompt(tc, {bad}, d);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::IndexOutOfRange);
  }
}

TEST(Prompt, MarkerBlocksNeverNestOrSplit) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> stmts;
    const int n = uniform_int(rng, 1, 8);
    for (int i = 0; i < n; ++i) stmts.push_back("SELECT " + std::to_string(i) + ",\n  'x;y';");
    const auto tc = TestCase::from_texts(stmts);
    std::vector<ErrorRecord> errs;
    for (int i = 0; i < n; ++i)
      if (uniform01(rng) < 0.4) errs.push_back({static_cast<std::size_t>(i), std::nullopt, "bad\nthing", ErrorCategory::Unknown, std::nullopt});
    if (errs.empty()) continue;
    const auto body = render_marked_case(tc, errs);
    int open = 0;
    std::size_t blocks = 0;
    std::string inside;
    for (const auto& line : split(body, '\n')) {
      if (line == "-- [Need to repair<") {
        ASSERT_EQ(open, 0);
        open = 1;
        inside.clear();
      } else if (line == "-- >Need to repair]") {
        ASSERT_EQ(open, 1);
        open = 0;
        ++blocks;
        // the enclosed statement is whole
        ASSERT_EQ(split_statements(inside).size(), 1u) << inside;
      } else if (open && line.rfind("-- ", 0) != 0) {
        inside += line + "\n";
      }
    }
    ASSERT_EQ(open, 0);
    ASSERT_EQ(blocks, errs.size());
  }
}

TEST(ResponseParse, Examples) {
  EXPECT_EQ(parse_sql_array(R"(["SELECT 1;", "COMMIT;"])"), (std::vector<std::string>{"SELECT 1;", "COMMIT;"}));
  EXPECT_EQ(parse_sql_array("Sure! Here you go:\n```json\n[\"SELECT 1;\", \"  \", \" DROP TABLE t0; \"]\n```\nEnjoy [1]."),
            (std::vector<std::string>{"SELECT 1;", "DROP TABLE t0;"}));
  EXPECT_EQ(parse_sql_array(R"(see [1, 2] then ["SELECT ']';"])"), (std::vector<std::string>{"SELECT ']';"}));
  try {
    parse_sql_array("Sorry, I cannot help with that.");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoJsonArray);
  }
}

TEST(ResponseParse, RandomWrappings) {
  Rng rng(17);
  const std::vector<std::string> prose = {"Here is the result:", "```json", "```", "Note: tables t0 (and t1) exist.",
                                          "{\"note\": 1}", "Done!", "\n", "text with ] bracket"};
  const std::vector<std::string> pool = {"SELECT 1;", "SELECT \"x\" FROM t0;", "INSERT INTO t0 VALUES ('[a]');",
                                         "SELECT '\\\\';", "UPDATE t0 SET c0 = 1 WHERE c1 = 'a,b';", "COMMIT;"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> want;
    const int n = uniform_int(rng, 1, 5);
    for (int i = 0; i < n; ++i) want.push_back(pool[uniform_index(rng, pool.size())]);
    std::string text;
    for (int i = uniform_int(rng, 0, 3); i > 0; --i) text += prose[uniform_index(rng, prose.size() - 1)] + "\n";
    text += nlohmann::json(want).dump(uniform01(rng) < 0.5 ? -1 : 2);
    for (int i = uniform_int(rng, 0, 3); i > 0; --i) text += "\n" + prose[uniform_index(rng, prose.size())];
    ASSERT_EQ(parse_sql_array(text), want) << text;
  }
}

TEST(MockClient, ScriptedResponses) {
  auto mock = MockClient::from_script_text(R"({
    "instantiation": [{"match": "t7", "responses": ["[\"SELECT 7;\"]"]},
                      {"responses": ["[\"SELECT 1;\"]", "[\"SELECT 2;\"]"]}],
    "repair": [{"response": "[]"}]
  })");
  const auto d = load_dialect("sqlite");
  const auto p = build_instantiation_prompt(one_table(), std::vector<std::string>{"SELECT 1;"}, d);
  EXPECT_EQ(mock.complete(p, {}), "[\"SELECT 1;\"]");
  EXPECT_EQ(mock.complete(p, {}), "[\"SELECT 2;\"]");
  EXPECT_EQ(mock.complete(p, {}), "[\"SELECT 2;\"]");
  SchemaContext t7;
  t7.init_statements = {"CREATE TABLE t7 (c0 INT);"};
  EXPECT_EQ(mock.complete(build_instantiation_prompt(t7, std::vector<std::string>{"X"}, d), {}), "[\"SELECT 7;\"]");
  EXPECT_EQ(mock.call_count(PromptKind::Instantiation), 4u);
  EXPECT_EQ(mock.call_count(PromptKind::Repair), 0u);
}

TEST(MockClient, FillerAlterExecutesOnSqlite) {
  const auto d = load_dialect("sqlite");
  const auto ctx = one_table();
  MockClient mock;
  const auto p = build_instantiation_prompt(
      ctx, std::vector<std::string>{"ALTER TABLE [tableName] [alterSpecification]", "SELECT [columnName] FROM [tableName] WHERE [expr] > [literal]"}, d);
  const auto stmts = parse_sql_array(mock.complete(p, {}));
  ASSERT_EQ(stmts.size(), 2u);
  EXPECT_EQ(stmts[0], "ALTER TABLE t0 ADD COLUMN c2 INT;");
  testsupport::SqliteDb db;
  for (const auto& s : ctx.init_statements) ASSERT_EQ(db.exec(s), "");
  for (const auto& s : stmts) EXPECT_EQ(db.exec(s), "") << s;
}

TEST(MockClient, FillerRepairCreatesMissingTable) {
  const auto d = load_dialect("sqlite");
  const auto tc = TestCase::from_texts({"CREATE TABLE t0 (c0 INT);", "SELECT * FROM t9;", "SELECT 1 +;"});
  ErrorRecord e{1, std::nullopt, "no such table: t9", ErrorCategory::InvalidObjectReference, std::nullopt};
  ErrorRecord e2{2, std::nullopt, "incomplete input", ErrorCategory::Unknown, std::nullopt};
  MockClient mock;
  const auto fixed = parse_sql_array(mock.complete(build_repair_prompt(tc, {e, e2}, d), {}));
  EXPECT_EQ(fixed, (std::vector<std::string>{"CREATE TABLE t0 (c0 INT);", "CREATE TABLE t9 (c0 INT);", "SELECT * FROM t9;"}));
  testsupport::SqliteDb db;
  for (const auto& s : fixed) EXPECT_EQ(db.exec(s), "") << s;
}

TEST(HttpClient, TransportErrorWhenDown) {
  HttpChatClient client;
  ModelParams params;
  params.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  params.request_timeout = std::chrono::milliseconds(500);
  try {
    client.complete({PromptKind::Instantiation, "hi", "sqlite", 0}, params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == Errc::Transport || e.code() == Errc::Timeout) << e.what();
  }
}

TEST(HttpClient, LocalEndpoint) {
  httplib::Server server;
  std::string seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"[\"SELECT 1;\"]"}}]})", "application/json");
  });
  server.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content("{}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpChatClient client;
  ModelParams params;
  params.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  params.model_name = "m";
  const Prompt p{PromptKind::Instantiation, "hello", "sqlite", 0};
  EXPECT_EQ(client.complete(p, params), "[\"SELECT 1;\"]");
  const auto body = nlohmann::json::parse(seen_body);
  EXPECT_EQ(body.at("model"), "m");
  EXPECT_DOUBLE_EQ(body.at("temperature").get<double>(), 0.4);
  EXPECT_EQ(body.at("messages").at(0).at("content"), "hello");

  params.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/fail";
  try {
    client.complete(p, params);
    FAIL();
  } catch (const EndpointError& e) {
    EXPECT_EQ(e.status(), 503);
  }

  params.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/slow";
  params.request_timeout = std::chrono::milliseconds(300);
  try {
    client.complete(p, params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Timeout) << e.what();
  }
  server.stop();
  th.join();
}
