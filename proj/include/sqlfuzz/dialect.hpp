#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sqlfuzz {

struct TypeSpec {
  std::string name;                // pool name, e.g. NUMERIC
  std::string kind;                // literal family: int, real, text, ...
  std::vector<std::string> forms;  // spellings with parameters, e.g. NUMERIC(10,2)
  std::vector<std::string> literals;
  bool indexable = true;  // may carry UNIQUE, PRIMARY KEY or a literal DEFAULT
};

struct SettingSpec {
  std::string name;
  std::string default_value;
  double min = 0;
  double max = 0;
};

/// Per-dialect tables loaded from dialects/<id>.json.
struct Dialect {
  std::string id;
  std::string display_name;
  bool client_server = false;
  std::vector<TypeSpec> types;
  std::string null_literal = "NULL";
  std::string geometry_literal;
  std::string datetime_literal;
  std::string json_literal;
  std::vector<SettingSpec> settings;
  std::string fallback_module;
  std::string fallback_engine;
  std::string fallback_component;  // known-good component URN literal

  const TypeSpec* type(const std::string& name) const;
  const SettingSpec* setting(const std::string& name) const;
  /// Pool name of a spelled type ("NUMERIC(10,2)" -> "NUMERIC"); empty if outside the pool.
  std::string pool_name(const std::string& spelled) const;
};

/// Default data root compiled into the library.
std::string default_data_dir();

/// Throws Error(UnknownDialect) if dialects/<id>.json is absent or malformed.
Dialect load_dialect(const std::string& id, const std::string& data_dir = default_data_dir());

}  // namespace sqlfuzz
