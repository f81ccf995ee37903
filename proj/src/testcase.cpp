#include "sqlfuzz/testcase.hpp"

#include <map>
#include <regex>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

std::string_view to_string(StatementKind kind) {
  switch (kind) {
    case StatementKind::SchemaInit: return "schema_init";
    case StatementKind::Select: return "select";
    case StatementKind::Dml: return "dml";
    case StatementKind::Ddl: return "ddl";
    case StatementKind::Admin: return "admin";
    case StatementKind::Feature: return "feature";
    case StatementKind::Other: return "other";
  }
  return "?";
}

std::set<std::string> feature_flags(std::string_view text) {
  static const std::map<std::string, std::string> kFlags = {
      {"GTID", "GTID"},           {"GTIDS", "GTID"},           {"GTID_NEXT", "GTID"},
      {"GTID_PURGED", "GTID"},    {"GTID_MODE", "GTID"},       {"PROCEDURE", "PROCEDURE"},
      {"CALL", "PROCEDURE"},      {"HISTOGRAM", "HISTOGRAM"},  {"INSTALL", "INSTALL"},
      {"UNINSTALL", "INSTALL"},   {"COMPONENT", "COMPONENT"},  {"PLUGIN", "PLUGIN"},
      {"KILL", "KILL"},           {"RESET", "RESET"},          {"FLUSH", "FLUSH"},
      {"PURGE", "PURGE"},         {"BINLOG", "BINLOG"},        {"REPLICA", "REPLICATION"},
      {"SLAVE", "REPLICATION"},   {"XA", "XA"},                {"CLONE", "CLONE"},
      {"READ_ONLY", "READ_ONLY"},
  };
  std::set<std::string> out;
  for (const auto& t : significant_tokens(text)) {
    if (t.kind != TokenKind::Word) continue;
    auto it = kFlags.find(to_upper(t.text));
    if (it != kFlags.end()) out.insert(it->second);
  }
  return out;
}

namespace {

const std::regex& schema_re() {
  static const std::regex re(
      R"(^\s*(?:CREATE\s+(?:(?:TEMP|TEMPORARY)\s+)?(?:TABLE|VIEW)\s+(?:IF\s+NOT\s+EXISTS\s+)?|INSERT\s+INTO\s+)[`"\[]?([tv][0-9]+)[`"\]]?(?:[\s(;]|$))",
      std::regex::icase);
  return re;
}

}  // namespace

std::string schema_target(std::string_view text) {
  std::cmatch m;
  if (!std::regex_search(text.data(), text.data() + text.size(), m, schema_re())) return {};
  return to_lower(m[1].str());
}

bool is_schema_init(std::string_view text) { return !schema_target(text).empty(); }

Statement Statement::from(std::string text) {
  Statement s;
  s.text = std::move(text);
  s.feature_flags = sqlfuzz::feature_flags(s.text);
  if (is_schema_init(s.text)) {
    s.kind = StatementKind::SchemaInit;
    return s;
  }
  if (!s.feature_flags.empty()) {
    s.kind = StatementKind::Feature;
    return s;
  }
  const auto words = leading_words(s.text, 1);
  const std::string head = words.empty() ? "" : words[0];
  static const std::set<std::string> kSelect = {"SELECT", "WITH", "VALUES", "EXPLAIN", "TABLE"};
  static const std::set<std::string> kDml = {"INSERT", "UPDATE", "DELETE", "REPLACE", "MERGE", "UPSERT"};
  static const std::set<std::string> kDdl = {"CREATE", "ALTER", "DROP", "RENAME", "TRUNCATE"};
  static const std::set<std::string> kAdmin = {"ANALYZE", "VACUUM",   "REINDEX", "PRAGMA",   "SET",    "SHOW",
                                               "OPTIMIZE", "CHECK",   "REPAIR",  "BEGIN",    "COMMIT", "END",
                                               "ROLLBACK", "SAVEPOINT", "RELEASE", "USE",    "GRANT",  "REVOKE",
                                               "LOCK",     "UNLOCK",  "START",   "ATTACH",   "DETACH", "DESCRIBE"};
  if (kSelect.count(head)) s.kind = StatementKind::Select;
  else if (kDml.count(head)) s.kind = StatementKind::Dml;
  else if (kDdl.count(head)) s.kind = StatementKind::Ddl;
  else if (kAdmin.count(head)) s.kind = StatementKind::Admin;
  else s.kind = StatementKind::Other;
  return s;
}

TestCase TestCase::from_texts(const std::vector<std::string>& texts) {
  TestCase tc;
  for (const auto& t : texts) {
    auto s = Statement::from(t);
    (s.kind == StatementKind::SchemaInit ? tc.schema_part : tc.op_part).push_back(std::move(s));
  }
  return tc;
}

TestCase TestCase::from_ordered_texts(const std::vector<std::string>& texts) {
  TestCase tc;
  for (const auto& t : texts) {
    auto s = Statement::from(t);
    const bool leading = tc.op_part.empty() && s.kind == StatementKind::SchemaInit;
    (leading ? tc.schema_part : tc.op_part).push_back(std::move(s));
  }
  return tc;
}

std::vector<Statement> TestCase::statements() const {
  std::vector<Statement> out = schema_part;
  out.insert(out.end(), op_part.begin(), op_part.end());
  return out;
}

std::vector<std::string> TestCase::texts() const {
  std::vector<std::string> out;
  out.reserve(size());
  for (const auto& s : schema_part) out.push_back(s.text);
  for (const auto& s : op_part) out.push_back(s.text);
  return out;
}

const Statement& TestCase::at(std::size_t flat_index) const {
  if (flat_index < schema_part.size()) return schema_part[flat_index];
  if (flat_index - schema_part.size() < op_part.size()) return op_part[flat_index - schema_part.size()];
  throw Error(Errc::IndexOutOfRange, "statement index " + std::to_string(flat_index) + " out of range");
}

}  // namespace sqlfuzz
