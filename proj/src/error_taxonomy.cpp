#include "sqlfuzz/error_taxonomy.hpp"

#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Syntax: return "Syntax";
    case ErrorCategory::DuplicateDefinition: return "DuplicateDefinition";
    case ErrorCategory::UnsupportedFeature: return "UnsupportedFeature";
    case ErrorCategory::PluginComponent: return "PluginComponent";
    case ErrorCategory::InappropriateSetting: return "InappropriateSetting";
    case ErrorCategory::Formattable: return "Formattable";
    case ErrorCategory::InvalidObjectReference: return "InvalidObjectReference";
    case ErrorCategory::PreconditionsMissing: return "PreconditionsMissing";
    case ErrorCategory::IncorrectFeatureUsage: return "IncorrectFeatureUsage";
    case ErrorCategory::ViolateConstraints: return "ViolateConstraints";
    case ErrorCategory::Unknown: return "Unknown";
  }
  return "Unknown";
}

ErrorCategory parse_error_category(std::string_view name) {
  for (auto c : kAllErrorCategories)
    if (iequals(to_string(c), name)) return c;
  throw Error(Errc::Config, "unknown error category '" + std::string(name) + "'");
}

std::string_view to_string(RepairRoute r) {
  switch (r) {
    case RepairRoute::Saf: return "SAF";
    case RepairRoute::Rbr: return "RBR";
    case RepairRoute::Sar: return "SAR";
  }
  return "?";
}

RepairRoute route_of(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Syntax:
    case ErrorCategory::DuplicateDefinition:
    case ErrorCategory::UnsupportedFeature: return RepairRoute::Saf;
    case ErrorCategory::PluginComponent:
    case ErrorCategory::InappropriateSetting:
    case ErrorCategory::Formattable: return RepairRoute::Rbr;
    case ErrorCategory::InvalidObjectReference:
    case ErrorCategory::PreconditionsMissing:
    case ErrorCategory::IncorrectFeatureUsage:
    case ErrorCategory::ViolateConstraints:
    case ErrorCategory::Unknown: return RepairRoute::Sar;
  }
  return RepairRoute::Sar;
}

}  // namespace sqlfuzz
