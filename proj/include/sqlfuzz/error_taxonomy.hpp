#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace sqlfuzz {

enum class ErrorCategory {
  Syntax,
  DuplicateDefinition,
  UnsupportedFeature,
  PluginComponent,
  InappropriateSetting,
  Formattable,
  InvalidObjectReference,
  PreconditionsMissing,
  IncorrectFeatureUsage,
  ViolateConstraints,
  Unknown,
};

inline constexpr std::array<ErrorCategory, 11> kAllErrorCategories = {
    ErrorCategory::Syntax,
    ErrorCategory::DuplicateDefinition,
    ErrorCategory::UnsupportedFeature,
    ErrorCategory::PluginComponent,
    ErrorCategory::InappropriateSetting,
    ErrorCategory::Formattable,
    ErrorCategory::InvalidObjectReference,
    ErrorCategory::PreconditionsMissing,
    ErrorCategory::IncorrectFeatureUsage,
    ErrorCategory::ViolateConstraints,
    ErrorCategory::Unknown,
};

std::string_view to_string(ErrorCategory c);
/// Throws Error(Config) on an unknown name.
ErrorCategory parse_error_category(std::string_view name);

/// Syntax-aware filtering, rule-based repair, semantic (model) repair.
enum class RepairRoute { Saf, Rbr, Sar };

std::string_view to_string(RepairRoute r);
RepairRoute route_of(ErrorCategory c);

struct ErrorRecord {
  std::size_t statement_index = 0;  // flat index into schema_part ++ op_part
  std::optional<int> code;
  std::string message;
  ErrorCategory category = ErrorCategory::Unknown;
  std::optional<std::string> suggestion;
  std::string fix;  // rule-based repair kind named by the classifier rule, empty if none
};

}  // namespace sqlfuzz
