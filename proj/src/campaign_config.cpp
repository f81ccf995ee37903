#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <set>
#include <sstream>

#include "sqlfuzz/campaign.hpp"
#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::chrono::milliseconds parse_duration(const std::string& text) {
  const std::string t = trim(text);
  std::size_t pos = 0;
  double value = 0;
  try {
    value = std::stod(t, &pos);
  } catch (const std::exception&) {
    throw Error(Errc::Config, "bad duration '" + text + "'");
  }
  const std::string unit = to_lower(trim(t.substr(pos)));
  double ms = 0;
  if (unit.empty() || unit == "s") {
    ms = value * 1000;
  } else if (unit == "ms") {
    ms = value;
  } else if (unit == "m" || unit == "min") {
    ms = value * 60000;
  } else if (unit == "h") {
    ms = value * 3600000;
  } else {
    throw Error(Errc::Config, "bad duration unit in '" + text + "'");
  }
  if (ms < 0) throw Error(Errc::Config, "negative duration '" + text + "'");
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

std::vector<std::string> load_leaf_file(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& line : split(read_file(path), '\n')) {
    const std::string l = trim(line);
    if (l.empty() || l[0] == '#') continue;
    out.push_back(l);
  }
  return out;
}

namespace {

std::vector<std::string> list_value(const std::string& v) {
  std::vector<std::string> out;
  for (auto& item : split(v, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

/// Typed reads that reject unknown keys, so typos surface as errors.
class Section {
 public:
  Section(const pt::ptree& root, std::string name) : name_(std::move(name)) {
    if (auto child = root.get_child_optional(name_)) tree_ = *child;
  }
  ~Section() = default;

  bool has(const std::string& key) {
    used_.insert(key);
    return tree_.find(key) != tree_.not_found();
  }
  std::string str(const std::string& key, const std::string& def) {
    return has(key) ? trim(tree_.get<std::string>(key)) : def;
  }
  template <typename T>
  T num(const std::string& key, T def) {
    if (!has(key)) return def;
    const std::string raw = trim(tree_.get<std::string>(key));
    try {
      std::size_t pos = 0;
      T v{};
      if constexpr (std::is_floating_point_v<T>) {
        v = static_cast<T>(std::stod(raw, &pos));
      } else if constexpr (std::is_signed_v<T>) {
        v = static_cast<T>(std::stoll(raw, &pos));
      } else {
        if (!raw.empty() && raw[0] == '-') throw std::invalid_argument("negative");
        v = static_cast<T>(std::stoull(raw, &pos));
      }
      if (pos != raw.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw Error(Errc::Config, "[" + name_ + "] " + key + ": not a number: '" + raw + "'");
    }
  }
  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const std::string v = to_lower(trim(tree_.get<std::string>(key)));
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw Error(Errc::Config, "[" + name_ + "] " + key + ": expected a boolean");
  }
  void check_unknown() const {
    for (const auto& [k, _] : tree_)
      if (!used_.count(k)) throw Error(Errc::Config, "unknown key [" + name_ + "] " + k);
  }

 private:
  std::string name_;
  pt::ptree tree_;
  std::set<std::string> used_;
};

pt::ptree parse_ini(const std::string& text) {
  pt::ptree root;
  std::istringstream in(text);
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::Config, std::string("config: ") + e.what());
  }
  static const std::set<std::string> known{"campaign", "target", "grammar", "schema", "mutation", "repair", "model"};
  for (const auto& [k, _] : root)
    if (!known.count(k)) throw Error(Errc::Config, "unknown config section [" + k + "]");
  return root;
}

void read_target(const pt::ptree& root, const std::string& base, CampaignConfig& c) {
  Section s(root, "target");
  c.dialect = s.str("dialect", c.dialect);
  c.driver = to_lower(s.str("driver", c.driver));
  c.target.binary = s.str("binary", c.target.binary);
  if (s.has("args")) c.target.args = split_ws(s.str("args", ""));
  const std::string kind = to_lower(s.str("kind", c.target.kind == DriverKind::Embedded ? "embedded" : "client-server"));
  if (kind == "embedded") {
    c.target.kind = DriverKind::Embedded;
  } else if (kind == "client-server") {
    c.target.kind = DriverKind::ClientServer;
  } else {
    throw Error(Errc::Config, "[target] kind must be embedded or client-server");
  }
  c.target.statement_timeout = std::chrono::milliseconds(s.num<long long>("timeout_ms", c.target.statement_timeout.count()));
  const std::string cov = to_lower(s.str("coverage", "behavioral"));
  if (cov == "behavioral") {
    c.target.coverage = CoverageMode::Behavioral;
  } else if (cov == "shared-map") {
    c.target.coverage = CoverageMode::SharedMap;
  } else {
    throw Error(Errc::Config, "[target] coverage must be behavioral or shared-map");
  }
  c.target.work_dir = resolve(base, s.str("work_dir", c.target.work_dir));
  if (s.has("prelude")) c.target.prelude_override = s.str("prelude", "");
  for (const auto& kv : split(s.str("env", ""), ';')) {
    const std::string t = trim(kv);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(Errc::Config, "[target] env entries are NAME=VALUE separated by ';'");
    c.target.env.emplace_back(t.substr(0, eq), t.substr(eq + 1));
  }
  c.fake_rules_path = resolve(base, s.str("fake_rules", c.fake_rules_path));
  s.check_unknown();
}

}  // namespace

CampaignConfig parse_target_config(const std::string& ini_text, const std::string& base_dir) {
  CampaignConfig c;
  read_target(parse_ini(ini_text), base_dir, c);
  return c;
}

CampaignConfig parse_campaign_config(const std::string& ini_text, const std::string& base_dir) {
  const pt::ptree root = parse_ini(ini_text);
  CampaignConfig c;
  {
    Section s(root, "campaign");
    c.seed = s.num<std::uint64_t>("seed", c.seed);
    if (s.has("budget")) c.budget = parse_duration(s.str("budget", ""));
    c.max_cases = s.num<std::size_t>("max_cases", c.max_cases);
    c.out_dir = resolve(base_dir, s.str("out_dir", c.out_dir));
    c.data_dir = resolve(base_dir, s.str("data_dir", c.data_dir));
    c.generation_ratio = s.num<double>("generation_ratio", c.generation_ratio);
    c.pool_warmup = s.num<std::size_t>("pool_warmup", c.pool_warmup);
    c.pool_capacity = s.num<std::size_t>("pool_capacity", c.pool_capacity);
    c.interesting_threshold = s.num<std::size_t>("interesting_threshold", c.interesting_threshold);
    c.stats_interval = s.num<std::size_t>("stats_interval", c.stats_interval);
    c.reduce_hangs = s.flag("reduce_hangs", c.reduce_hangs);
    c.log_cases = s.flag("log_cases", c.log_cases);
    s.check_unknown();
  }
  read_target(root, base_dir, c);
  {
    Section s(root, "grammar");
    c.grammar_path = resolve(base_dir, s.str("path", c.grammar_path));
    if (s.has("leaves")) c.leaf_set = list_value(s.str("leaves", ""));
    if (s.has("start")) c.start_rules = list_value(s.str("start", ""));
    c.expansion.max_depth = s.num<int>("max_depth", c.expansion.max_depth);
    c.expansion.default_quota = s.num<int>("default_quota", c.expansion.default_quota);
    for (const auto& q : list_value(s.str("quotas", ""))) {
      const auto colon = q.find(':');
      if (colon == std::string::npos) throw Error(Errc::Config, "[grammar] quotas are rule:count pairs");
      try {
        c.expansion.rule_quota[trim(q.substr(0, colon))] = std::stoi(q.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(Errc::Config, "[grammar] bad quota '" + q + "'");
      }
    }
    c.expansion.optional_probability = s.num<double>("optional_probability", c.expansion.optional_probability);
    c.expansion.repeat_continue_probability =
        s.num<double>("repeat_probability", c.expansion.repeat_continue_probability);
    c.expansion.step_budget = s.num<std::size_t>("step_budget", c.expansion.step_budget);
    c.templates_per_case = s.num<std::size_t>("templates_per_case", c.templates_per_case);
    s.check_unknown();
  }
  {
    Section s(root, "schema");
    auto& k = c.schema;
    k.min_tables = s.num<int>("min_tables", k.min_tables);
    k.max_tables = s.num<int>("max_tables", k.max_tables);
    k.min_columns = s.num<int>("min_columns", k.min_columns);
    k.max_columns = s.num<int>("max_columns", k.max_columns);
    k.min_rows = s.num<int>("min_rows", k.min_rows);
    k.max_rows = s.num<int>("max_rows", k.max_rows);
    k.view_probability = s.num<double>("view_probability", k.view_probability);
    k.primary_key_probability = s.num<double>("primary_key_probability", k.primary_key_probability);
    k.not_null_probability = s.num<double>("not_null_probability", k.not_null_probability);
    k.unique_probability = s.num<double>("unique_probability", k.unique_probability);
    k.default_probability = s.num<double>("default_probability", k.default_probability);
    k.null_probability = s.num<double>("null_probability", k.null_probability);
    if (s.has("types")) k.type_pool = list_value(s.str("types", ""));
    s.check_unknown();
  }
  {
    Section s(root, "mutation");
    auto& m = c.mutation;
    m.crossover_bias = s.num<double>("crossover_bias", m.crossover_bias);
    m.drop_low = s.num<double>("drop_low", m.drop_low);
    m.drop_high = s.num<double>("drop_high", m.drop_high);
    m.rewrite_probability = s.num<double>("rewrite_probability", m.rewrite_probability);
    s.check_unknown();
  }
  {
    Section s(root, "repair");
    c.repair.max_rounds = s.num<int>("max_rounds", c.repair.max_rounds);
    s.check_unknown();
  }
  {
    Section s(root, "model");
    const std::string backend = to_lower(s.str("backend", "mock"));
    if (backend == "mock") {
      c.backend = ModelBackend::Mock;
    } else if (backend == "http") {
      c.backend = ModelBackend::Http;
    } else {
      throw Error(Errc::Config, "[model] backend must be mock or http");
    }
    c.model.endpoint = s.str("endpoint", c.model.endpoint);
    c.model.model_name = s.str("model", c.model.model_name);
    c.model.temperature = s.num<double>("temperature", c.model.temperature);
    c.model.max_context_tokens = s.num<int>("max_context_tokens", c.model.max_context_tokens);
    c.model.request_timeout = std::chrono::milliseconds(s.num<long long>("timeout_ms", c.model.request_timeout.count()));
    c.mock_script = resolve(base_dir, s.str("mock_script", c.mock_script));
    c.prefetch_workers = s.num<std::size_t>("workers", c.prefetch_workers);
    s.check_unknown();
  }
  return c;
}

std::string render_target_ini(const CampaignConfig& c) {
  auto abs = [](const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); };
  std::ostringstream o;
  o << "[target]\n";
  o << "dialect = " << c.dialect << "\n";
  o << "driver = " << c.driver << "\n";
  if (!c.target.binary.empty()) o << "binary = " << c.target.binary << "\n";
  if (!c.target.args.empty()) o << "args = " << join(c.target.args, " ") << "\n";
  o << "kind = " << (c.target.kind == DriverKind::Embedded ? "embedded" : "client-server") << "\n";
  o << "timeout_ms = " << c.target.statement_timeout.count() << "\n";
  o << "coverage = " << (c.target.coverage == CoverageMode::Behavioral ? "behavioral" : "shared-map") << "\n";
  if (c.target.prelude_override) o << "prelude = " << *c.target.prelude_override << "\n";
  if (!c.target.env.empty()) {
    std::vector<std::string> kv;
    for (const auto& [k, v] : c.target.env) kv.push_back(k + "=" + v);
    o << "env = " << join(kv, ";") << "\n";
  }
  if (!c.fake_rules_path.empty()) o << "fake_rules = " << abs(c.fake_rules_path) << "\n";
  return o.str();
}

CampaignConfig load_campaign_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::Config, "cannot read config " + path + ": " + e.what());
  }
  const std::string base = fs::absolute(path).parent_path().string();
  return parse_campaign_config(text, base);
}

void CampaignConfig::finalize() {
  if (grammar_path.empty()) grammar_path = (fs::path(data_dir) / "grammars" / (dialect + ".g4")).string();
  if (leaf_set.empty()) {
    const fs::path leaves = fs::path(grammar_path).replace_extension(".leaves");
    if (fs::exists(leaves)) leaf_set = load_leaf_file(leaves.string());
  }
  validate();
}

void CampaignConfig::validate() const {
  if (driver != "process" && driver != "fake") throw Error(Errc::Config, "[target] driver must be process or fake");
  if (driver == "process") target.validate();
  expansion.validate();
  schema.validate();
  mutation.validate();
  repair.validate();
  model.validate();
  if (!(generation_ratio >= 0.0 && generation_ratio <= 1.0))
    throw Error(Errc::Config, "generation_ratio must lie in [0, 1]");
  if (templates_per_case == 0) throw Error(Errc::Config, "templates_per_case must be positive");
  if (prefetch_workers == 0) throw Error(Errc::Config, "[model] workers must be positive");
  if (stats_interval == 0) throw Error(Errc::Config, "stats_interval must be positive");
  if (pool_capacity != 0 && pool_capacity < 2) throw Error(Errc::Config, "pool_capacity must be 0 or at least 2");
  if (out_dir.empty()) throw Error(Errc::Config, "out_dir must not be empty");
}

}  // namespace sqlfuzz
