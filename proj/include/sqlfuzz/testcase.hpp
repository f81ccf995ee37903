#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sqlfuzz {

enum class StatementKind { SchemaInit, Select, Dml, Ddl, Admin, Feature, Other };

std::string_view to_string(StatementKind kind);

struct Statement {
  std::string text;
  StatementKind kind = StatementKind::Other;
  std::set<std::string> feature_flags;  // e.g. GTID, PROCEDURE, HISTOGRAM

  /// Classifies `text`. SchemaInit wins over Feature.
  static Statement from(std::string text);
  bool operator==(const Statement& o) const { return text == o.text; }
};

/// Vendor feature flags carried by the statement's keywords (literals ignored).
std::set<std::string> feature_flags(std::string_view text);

/// CREATE TABLE/VIEW or INSERT INTO a t<k>/v<k> object.
bool is_schema_init(std::string_view text);

/// Table/view name targeted by a schema_init statement; empty otherwise.
std::string schema_target(std::string_view text);

struct TestCase {
  std::uint64_t id = 0;
  std::vector<Statement> schema_part;
  std::vector<Statement> op_part;
  std::vector<std::uint64_t> lineage;

  /// Partitions a flat statement list by kind, keeping relative order.
  static TestCase from_texts(const std::vector<std::string>& texts);
  /// Keeps the given order: the leading run of schema statements becomes
  /// schema_part, everything after it op_part.
  static TestCase from_ordered_texts(const std::vector<std::string>& texts);

  std::size_t size() const { return schema_part.size() + op_part.size(); }
  bool empty() const { return size() == 0; }
  /// schema_part followed by op_part: the execution order.
  std::vector<Statement> statements() const;
  std::vector<std::string> texts() const;
  const Statement& at(std::size_t flat_index) const;
};

}  // namespace sqlfuzz
