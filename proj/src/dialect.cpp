#include "sqlfuzz/dialect.hpp"

#include <filesystem>
#include <json.hpp>

#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

const TypeSpec* Dialect::type(const std::string& name) const {
  for (const auto& t : types)
    if (iequals(t.name, name)) return &t;
  return nullptr;
}

const SettingSpec* Dialect::setting(const std::string& name) const {
  for (const auto& s : settings)
    if (iequals(s.name, name)) return &s;
  return nullptr;
}

std::string Dialect::pool_name(const std::string& spelled) const {
  const auto base = trim(spelled.substr(0, spelled.find('(')));
  const auto* t = type(base);
  return t ? t->name : std::string();
}

std::string default_data_dir() {
  if (const char* env = std::getenv("SQLFUZZ_DATA_DIR"); env && *env) return env;
  return SQLFUZZ_DATA_DIR;
}

Dialect load_dialect(const std::string& id, const std::string& data_dir) {
  if (id.empty() || id.find_first_of("/\\.") != std::string::npos)
    throw Error(Errc::UnknownDialect, "unknown dialect '" + id + "'");
  const auto path = std::filesystem::path(data_dir) / "dialects" / (id + ".json");
  if (!std::filesystem::exists(path)) throw Error(Errc::UnknownDialect, "unknown dialect '" + id + "'");

  Dialect d;
  try {
    const auto j = nlohmann::json::parse(read_file(path.string()));
    d.id = j.at("id").get<std::string>();
    d.display_name = j.at("display_name").get<std::string>();
    d.client_server = j.value("execution", "embedded") == "client_server";
    for (const auto& t : j.at("types")) {
      TypeSpec ts;
      ts.name = t.at("name").get<std::string>();
      ts.kind = t.at("kind").get<std::string>();
      ts.forms = t.at("forms").get<std::vector<std::string>>();
      ts.literals = t.at("literals").get<std::vector<std::string>>();
      ts.indexable = t.value("indexable", true);
      if (ts.forms.empty() || ts.literals.empty())
        throw Error(Errc::UnknownDialect, "type " + ts.name + " needs forms and literals");
      d.types.push_back(std::move(ts));
    }
    d.null_literal = j.value("null_literal", "NULL");
    d.geometry_literal = j.value("geometry_literal", "");
    d.datetime_literal = j.value("datetime_literal", "");
    d.json_literal = j.value("json_literal", "");
    for (const auto& s : j.value("settings", nlohmann::json::array()))
      d.settings.push_back({s.at("name").get<std::string>(), s.at("default").get<std::string>(),
                            s.value("min", 0.0), s.value("max", 0.0)});
    d.fallback_module = j.value("fallback_module", "");
    d.fallback_engine = j.value("fallback_engine", "");
    d.fallback_component = j.value("fallback_component", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::UnknownDialect, path.string() + ": " + e.what());
  }
  if (d.id != id) throw Error(Errc::UnknownDialect, path.string() + ": id mismatch");
  if (d.types.empty()) throw Error(Errc::UnknownDialect, path.string() + ": empty type pool");
  return d;
}

}  // namespace sqlfuzz
