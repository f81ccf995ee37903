#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include "sqlfuzz/mutation.hpp"

using namespace sqlfuzz;

namespace {

std::vector<Statement> stmts(const std::vector<std::string>& texts) {
  std::vector<Statement> out;
  for (const auto& t : texts) out.push_back(Statement::from(t));
  return out;
}

std::vector<std::string> texts(const std::vector<Statement>& s) {
  std::vector<std::string> out;
  for (const auto& x : s) out.push_back(x.text);
  return out;
}

// All interleavings of a and b, by brute force.
void interleavings(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t i, std::size_t j,
                   std::vector<std::string>& cur, std::set<std::vector<std::string>>& out) {
  if (i == a.size() && j == b.size()) {
    out.insert(cur);
    return;
  }
  if (i < a.size()) {
    cur.push_back(a[i]);
    interleavings(a, b, i + 1, j, cur, out);
    cur.pop_back();
  }
  if (j < b.size()) {
    cur.push_back(b[j]);
    interleavings(a, b, i, j + 1, cur, out);
    cur.pop_back();
  }
}

// Test-local tokenizer for the masking differ: quoted strings/identifiers,
// words, numbers, multi-char operators, single characters.
std::vector<std::string> rough_tokens(const std::string& s) {
  static const std::regex tok(R"('(?:[^']|'')*'|"(?:[^"]|"")*"|`[^`]*`|[A-Za-z_][A-Za-z_0-9]*|\d+(?:\.\d+)?|<=>|!=|<>|<=|>=|==|\|\||\S)");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), tok); it != std::sregex_iterator(); ++it) out.push_back(it->str());
  return out;
}

std::vector<std::string> masked(const std::string& s) {
  static const std::set<std::string> site_vocab = {"=",  "!=",   "<>",  "<",     ">",    "<=",    ">=",     "==",
                                                   "<=>", "IN",  "NOT", "IS",    "NULL", "EXISTS", "AND",   "OR",
                                                   "XOR", "ASC", "DESC", "JOIN", "INNER", "LEFT", "OUTER",  "CROSS",
                                                   "RIGHT", "STRAIGHT_JOIN", "LIKE", "GLOB"};
  std::vector<std::string> out;
  for (auto& t : rough_tokens(s)) {
    std::string up = t;
    std::transform(up.begin(), up.end(), up.begin(), ::toupper);
    if (!site_vocab.count(up)) out.push_back(t);
  }
  return out;
}

const std::vector<std::string> kCorpus = {
    "SELECT c0, c1 FROM t0 WHERE c0 = 1 AND c1 IS NULL ORDER BY c0 ASC;",
    "SELECT * FROM t0 INNER JOIN t1 ON t0.c0 = t1.c0 WHERE t0.c1 IN (SELECT c1 FROM t1 WHERE c1 > 'a = b');",
    "SELECT * FROM t0 LEFT JOIN t1 ON t0.c0 <> t1.c0 LEFT OUTER JOIN t2 ON t2.c0 >= t0.c0 ORDER BY 1 DESC, 2;",
    "SELECT c0 FROM t0 WHERE EXISTS (SELECT 1 FROM t1 WHERE t1.c0 <= t0.c0) OR c0 NOT IN (1, 2, 3);",
    "SELECT COUNT(*) FROM t0 GROUP BY c1 HAVING COUNT(*) > 1 AND c1 IS NOT NULL;",
    "UPDATE t0 SET c0 = 1, c1 = 'x' WHERE c0 < 5 AND c1 = \"c1\";",
    "DELETE FROM t0 WHERE c0 BETWEEN 1 AND 5 OR c1 LIKE '%=%';",
    "SELECT * FROM t0 CROSS JOIN t1 WHERE t0.c0 == t1.c0 AND NOT EXISTS (SELECT 1);",
    "SELECT c0 FROM t0 WHERE c0 != 0 ORDER BY c0 DESC LIMIT 3;",
    "INSERT INTO t3 SELECT * FROM t0 JOIN t1 USING (c0) WHERE t0.c0 > 1;",
};

}  // namespace

TEST(RewriteRules, LoadedRulesAreWellFormed) {
  for (const char* d : {"sqlite", "mysql_subset"}) {
    const auto rs = RewriteRuleSet::load(d);
    EXPECT_FALSE(rs.rules.empty());
    for (const auto& r : rs.rules) {
      EXPECT_TRUE(r.dialect_mask.count(d));
      for (const auto& t : r.to) EXPECT_NE(t, r.from);
    }
  }
  const auto sqlite = RewriteRuleSet::load("sqlite");
  for (const auto& j : sqlite.joins) {
    EXPECT_EQ(j.find("FULL"), std::string::npos);
    EXPECT_EQ(j.find("RIGHT"), std::string::npos);
  }
  EXPECT_THROW(RewriteRuleSet::load("postgres"), Error);
}

TEST(Unify, SharedTableChosenOnce) {
  const auto s1 = stmts({"CREATE TABLE t0 (c0 INT);", "INSERT INTO t0 VALUES (1);", "CREATE TABLE t1 (c0 TEXT);"});
  const auto s2 = stmts({"CREATE TABLE t0 (c0 TEXT, c1 INT);", "INSERT INTO t0 VALUES ('a', 2);", "INSERT INTO t0 VALUES ('b', 3);"});
  int from1 = 0, from2 = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const auto out = texts(unify_schemas(s1, s2, rng));
    ASSERT_EQ(std::count_if(out.begin(), out.end(), [](const std::string& s) { return s.rfind("CREATE TABLE t0", 0) == 0; }), 1);
    ASSERT_EQ(std::count(out.begin(), out.end(), "CREATE TABLE t1 (c0 TEXT);"), 1);
    if (out[0] == s1[0].text) {
      ++from1;
      ASSERT_EQ(out, (std::vector<std::string>{s1[0].text, s1[1].text, s1[2].text}));
    } else {
      ++from2;
      ASSERT_EQ(out, (std::vector<std::string>{s2[0].text, s2[1].text, s2[2].text, s1[2].text}));
    }
  }
  EXPECT_GT(from1, 50);
  EXPECT_GT(from2, 50);
}

TEST(Unify, EmptyAndDisjoint) {
  Rng rng(1);
  const auto s1 = stmts({"CREATE TABLE t0 (c0 INT);", "INSERT INTO t0 VALUES (1);"});
  EXPECT_EQ(texts(unify_schemas(s1, {}, rng)), texts(s1));
  const auto s2 = stmts({"CREATE TABLE t1 (c0 INT);", "CREATE VIEW v0 AS SELECT c0 FROM t1;"});
  const auto s3 = stmts({"CREATE TABLE t0 (c0 INT);", "CREATE VIEW v1 AS SELECT c0 FROM t0;", "CREATE TABLE t2 (c0 INT);"});
  const auto out = texts(unify_schemas(s3, s2, rng));
  // tables before views, each once
  EXPECT_EQ(out, (std::vector<std::string>{s3[0].text, s3[2].text, s2[0].text, s3[1].text, s2[1].text}));
}

TEST(Crossover, EmptySecondParent) {
  Rng rng(2);
  const auto o1 = stmts({"SELECT 1;", "SELECT 2;"});
  EXPECT_EQ(texts(crossover(o1, {}, {}, rng)), texts(o1));
  EXPECT_EQ(texts(crossover({}, o1, {}, rng)), texts(o1));
}

TEST(Crossover, OnlyLegalInterleavings) {
  const std::vector<std::string> a = {"A;", "B;"}, b = {"X;"};
  std::set<std::vector<std::string>> legal;
  std::vector<std::string> cur;
  interleavings(a, b, 0, 0, cur, legal);
  ASSERT_EQ(legal.size(), 3u);
  Rng rng(3);
  std::set<std::vector<std::string>> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto out = texts(crossover(stmts(a), stmts(b), {}, rng));
    ASSERT_TRUE(legal.count(out));
    seen.insert(out);
  }
  EXPECT_EQ(seen, legal);
}

TEST(Crossover, OrderPreservationAndConservation) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> a, b;
    for (int i = uniform_int(rng, 0, 6); i > 0; --i) a.push_back("SELECT " + std::to_string(a.size()) + " AS a;");
    for (int i = uniform_int(rng, 0, 6); i > 0; --i) b.push_back("SELECT " + std::to_string(b.size()) + " AS b;");
    const auto out = texts(crossover(stmts(a), stmts(b), {}, rng));
    std::vector<std::string> pa, pb;
    for (const auto& s : out) (s.find(" AS a") != std::string::npos ? pa : pb).push_back(s);
    ASSERT_EQ(pa, a);
    ASSERT_EQ(pb, b);
    auto all = a;
    all.insert(all.end(), b.begin(), b.end());
    auto sorted_out = out;
    std::sort(all.begin(), all.end());
    std::sort(sorted_out.begin(), sorted_out.end());
    ASSERT_EQ(sorted_out, all);
  }
}

TEST(Crossover, HeadBias) {
  Rng rng(5);
  const auto a = stmts({"A1;", "A2;", "A3;"}), b = stmts({"B1;", "B2;", "B3;"});
  int heads = 0;
  for (int i = 0; i < 10000; ++i) heads += crossover(a, b, {}, rng).front().text == "A1;";
  EXPECT_NEAR(heads / 10000.0, 0.5, 0.02);
}

TEST(DropFilter, Contract) {
  Rng rng(6);
  const auto ops = stmts({"SELECT 1;", "SELECT 2;", "SELECT 3;"});
  MutationConfig keep;
  keep.drop_low = keep.drop_high = 0.0;
  EXPECT_EQ(texts(drop_filter(ops, keep, rng)), texts(ops));

  std::vector<std::string> many;
  for (int i = 0; i < 10000; ++i) many.push_back("SELECT " + std::to_string(i) + ";");
  const auto kept = drop_filter(stmts(many), {}, rng);
  const double dropped = 1.0 - static_cast<double>(kept.size()) / 10000.0;
  EXPECT_GE(dropped, 0.28);
  EXPECT_LE(dropped, 0.32);
  // survivors keep their order
  auto kt = texts(kept);
  std::vector<std::size_t> pos;
  for (const auto& k : kt) pos.push_back(static_cast<std::size_t>(std::find(many.begin(), many.end(), k) - many.begin()));
  EXPECT_TRUE(std::is_sorted(pos.begin(), pos.end()));

  MutationConfig heavy;
  heavy.drop_low = heavy.drop_high = 0.99;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(drop_filter(stmts({"SELECT 1;"}), heavy, rng).size(), 1u);
  EXPECT_TRUE(drop_filter({}, heavy, rng).empty());

  MutationConfig bad;
  bad.drop_low = 0.5;
  bad.drop_high = 0.4;
  EXPECT_THROW(drop_filter(ops, bad, rng), Error);
}

TEST(LogicShift, Examples) {
  const auto rs = RewriteRuleSet::load("sqlite");
  MutationConfig always;
  always.rewrite_probability = 1.0;
  Rng rng(7);
  EXPECT_EQ(logic_shift(Statement::from("SELECT * FROM t0 WHERE a = 1;"), rs, "sqlite", always, rng).text,
            "SELECT * FROM t0 WHERE a != 1;");
  EXPECT_EQ(logic_shift(Statement::from("SELECT * FROM t0 WHERE x IN (SELECT c0 FROM t1);"), rs, "sqlite", always, rng).text,
            "SELECT * FROM t0 WHERE x NOT IN (SELECT c0 FROM t1);");
  EXPECT_EQ(logic_shift(Statement::from("SELECT 1 FROM t0 WHERE c0 IS NULL;"), rs, "sqlite", always, rng).text,
            "SELECT 1 FROM t0 WHERE c0 IS NOT NULL;");
  EXPECT_EQ(logic_shift(Statement::from("SELECT 1 FROM t0 WHERE c0 is not null;"), rs, "sqlite", always, rng).text,
            "SELECT 1 FROM t0 WHERE c0 IS NULL;");
  // assignments, select-list comparisons, BETWEEN's AND and literals stay
  EXPECT_EQ(logic_shift(Statement::from("UPDATE t0 SET c0 = 1;"), rs, "sqlite", always, rng).text, "UPDATE t0 SET c0 = 1;");
  EXPECT_EQ(logic_shift(Statement::from("SELECT c0 = 1, 'a = b' FROM t0;"), rs, "sqlite", always, rng).text,
            "SELECT c0 = 1, 'a = b' FROM t0;");
  EXPECT_EQ(logic_shift(Statement::from("SELECT 1 FROM t0 WHERE c0 BETWEEN 1 AND 2;"), rs, "sqlite", always, rng).text,
            "SELECT 1 FROM t0 WHERE c0 BETWEEN 1 AND 2;");
  EXPECT_EQ(logic_shift(Statement::from("SELECT c0 FROM t0 ORDER BY c0 ASC;"), rs, "sqlite", always, rng).text,
            "SELECT c0 FROM t0 ORDER BY c0 DESC;");
  MutationConfig never;
  never.rewrite_probability = 0.0;
  for (const auto& s : kCorpus) EXPECT_EQ(logic_shift(Statement::from(s), rs, "sqlite", never, rng).text, s);
}

TEST(LogicShift, SqliteJoinsStayLegal) {
  const auto rs = RewriteRuleSet::load("sqlite");
  MutationConfig always;
  always.rewrite_probability = 1.0;
  Rng rng(8);
  std::set<std::string> produced;
  const std::regex join_re(R"(t0 (.*) t1 ON)");
  for (int i = 0; i < 500; ++i) {
    const auto out = logic_shift(Statement::from("SELECT * FROM t0 INNER JOIN t1 ON t0.c0 = t1.c0;"), rs, "sqlite", always, rng).text;
    std::smatch m;
    ASSERT_TRUE(std::regex_search(out, m, join_re)) << out;
    produced.insert(m[1]);
    ASSERT_EQ(out.find("FULL"), std::string::npos);
    ASSERT_EQ(out.find("RIGHT"), std::string::npos);
  }
  EXPECT_EQ(produced, (std::set<std::string>{"JOIN", "LEFT JOIN", "LEFT OUTER JOIN", "CROSS JOIN"}));
}

TEST(LogicShift, MaskingDifferOverFiveHundred) {
  Rng rng(9);
  int changed = 0;
  for (const char* d : {"sqlite", "mysql_subset"}) {
    const auto rs = RewriteRuleSet::load(d);
    for (int i = 0; i < 500; ++i) {
      const auto& src = kCorpus[uniform_index(rng, kCorpus.size())];
      const auto out = logic_shift(Statement::from(src), rs, d, {}, rng).text;
      changed += out != src;
      ASSERT_EQ(masked(out), masked(src)) << src << "\n" << out;
      if (std::string(d) == "sqlite") ASSERT_EQ(out.find("FULL"), std::string::npos);
    }
  }
  EXPECT_GT(changed, 500);
}

TEST(Mutate, CompositionAndDeterminism) {
  const auto rs = RewriteRuleSet::load("sqlite");
  TestCase t1 = TestCase::from_texts({"CREATE TABLE t0 (c0 INT);", "INSERT INTO t0 VALUES (1);", "SELECT * FROM t0 WHERE c0 = 1;",
                                      "SELECT c0 FROM t0;", "DELETE FROM t0 WHERE c0 > 3;"});
  t1.id = 11;
  TestCase empty;
  empty.id = 12;
  Rng rng(10);
  const auto m = mutate(t1, empty, {}, rs, "sqlite", rng);
  EXPECT_EQ(texts(m.schema_part), texts(t1.schema_part));
  EXPECT_GE(m.op_part.size(), 1u);
  EXPECT_LE(m.op_part.size(), t1.op_part.size());
  for (const auto& s : m.op_part) EXPECT_NE(s.kind, StatementKind::SchemaInit);
  EXPECT_EQ(m.lineage, (std::vector<std::uint64_t>{11, 12}));

  TestCase t2 = TestCase::from_texts({"CREATE TABLE t0 (c0 TEXT, c1 INT);", "SELECT c1 FROM t0 WHERE c1 IS NULL;"});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    const auto x = mutate(t1, t2, {}, rs, "sqlite", a);
    const auto y = mutate(t1, t2, {}, rs, "sqlite", b);
    ASSERT_EQ(x.texts(), y.texts());
    const auto all = x.texts();
    ASSERT_EQ(std::count_if(all.begin(), all.end(), [](const std::string& s) { return s.rfind("CREATE TABLE t0", 0) == 0; }), 1);
  }
}
