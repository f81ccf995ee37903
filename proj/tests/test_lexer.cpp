#include <gtest/gtest.h>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/sql_lexer.hpp"

using namespace sqlfuzz;

TEST(Lexer, LosslessRoundTrip) {
  Rng rng(7);
  const std::vector<std::string> parts = {"SELECT", " ", "'a;b'", "\"q\"\"x\"", "-- c\n", "/* ; */", "(",
                                          ")", ",", ";", "!=", "<>", "12.5e3", "x'0A'", "`t`", "[c]", "\n"};
  for (int i = 0; i < 500; ++i) {
    std::string text;
    const int n = uniform_int(rng, 0, 20);
    for (int j = 0; j < n; ++j) text += parts[uniform_index(rng, parts.size())];
    std::string rebuilt;
    for (const auto& t : lex_sql(text).tokens) rebuilt += t.text;
    ASSERT_EQ(rebuilt, text);
  }
}

TEST(Lexer, QuotesProtectSemicolons) {
  const auto stmts = split_statements("INSERT INTO t0 VALUES ('a;b'); -- x;y\nSELECT \";\" FROM t0;");
  ASSERT_EQ(stmts.size(), 2u);
  EXPECT_EQ(stmts[0], "INSERT INTO t0 VALUES ('a;b');");
  EXPECT_EQ(stmts[1], "-- x;y\nSELECT \";\" FROM t0;");
}

TEST(Lexer, TriggerBodyKeepsInnerSemicolons) {
  const auto stmts = split_statements(
      "CREATE TRIGGER tr BEFORE INSERT ON t0 BEGIN SELECT 1; SELECT 2; END; SELECT 3;");
  ASSERT_EQ(stmts.size(), 2u);
  EXPECT_EQ(stmts[1], "SELECT 3;");
}

TEST(Lexer, CompletenessAndBalance) {
  EXPECT_FALSE(lex_sql("SELECT 'abc").complete);
  EXPECT_FALSE(lex_sql("SELECT /* x").complete);
  EXPECT_TRUE(lex_sql("SELECT 'it''s'").complete);
  EXPECT_TRUE(is_balanced("SELECT (1 + (2))"));
  EXPECT_FALSE(is_balanced("SELECT (1 + (2)"));
  EXPECT_EQ(ensure_terminated("SELECT 1"), "SELECT 1;");
  EXPECT_EQ(ensure_terminated("SELECT 1 -- c"), "SELECT 1 -- c\n;");
  EXPECT_EQ(ensure_terminated("SELECT 1;"), "SELECT 1;");
}

TEST(Lexer, LeadingWords) {
  EXPECT_EQ(leading_words("  create table t0 (c0 INT);", 2), (std::vector<std::string>{"CREATE", "TABLE"}));
  EXPECT_EQ(leading_words("SELECT 1", 3), (std::vector<std::string>{"SELECT"}));
}
