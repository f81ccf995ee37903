#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/dialect.hpp"

namespace sqlfuzz {

struct ColumnDef {
  std::string name;
  std::string data_type;  // spelled form, e.g. NUMERIC(10,2)
  bool not_null = false;
  bool unique = false;
  bool primary_key = false;
  std::optional<std::string> default_value;
};

enum class ObjectKind { Table, View, Procedure };

std::string_view to_string(ObjectKind kind);

struct SchemaObject {
  std::string name;
  ObjectKind kind = ObjectKind::Table;
  std::vector<ColumnDef> columns;
  std::string create_text;
};

/// Objects keep creation order; lookup is case-insensitive.
struct SchemaContext {
  std::vector<SchemaObject> objects;
  std::vector<std::string> init_statements;

  const SchemaObject* find(std::string_view name) const;
  SchemaObject* find(std::string_view name);
  std::vector<const SchemaObject*> tables() const;
};

struct SchemaConfig {
  int min_tables = 1;
  int max_tables = 3;
  int min_columns = 2;
  int max_columns = 5;
  int min_rows = 1;
  int max_rows = 3;
  double view_probability = 0.3;      // per table, one view over it
  double primary_key_probability = 0.3;
  double not_null_probability = 0.2;
  double unique_probability = 0.15;
  double default_probability = 0.2;
  double null_probability = 0.1;      // NULL literal in a nullable column
  std::vector<std::string> type_pool;  // empty = every dialect type

  void validate() const;
};

struct GeneratedSchema {
  std::vector<std::string> statements;
  SchemaContext context;
};

GeneratedSchema generate_schema(const Dialect& dialect, const SchemaConfig& config, Rng& rng);

/// Applies a CREATE TABLE/VIEW/PROCEDURE, ALTER TABLE ADD/RENAME or DROP to
/// the context. Returns false and leaves the context untouched when the
/// statement is not one of those or cannot be read.
bool register_statement(SchemaContext& context, std::string_view statement);

/// init_statements joined with newlines.
std::string render_context(const SchemaContext& context);

}  // namespace sqlfuzz
