#include <algorithm>
#include <cctype>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "sqlfuzz/llm.hpp"
#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

using nlohmann::json;

// ---------------------------------------------------------------------------
// HTTP

std::string HttpChatClient::complete(const Prompt& prompt, const ModelParams& params) {
  static const std::regex url_re(R"(^(\w+)://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(params.endpoint, m, url_re)) throw Error(Errc::Transport, "bad endpoint URL: " + params.endpoint);
  if (to_lower(m[1].str()) != "http") throw Error(Errc::Transport, "only http:// endpoints are supported");
  const int port = m[3].matched ? std::stoi(m[3].str()) : 80;
  const std::string path = m[4].matched ? m[4].str() : "/v1/chat/completions";

  httplib::Client cli(m[2].str(), port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(params.request_timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(params.request_timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* key = std::getenv("SQLFUZZ_API_KEY"); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  const json body = {{"model", params.model_name},
                     {"temperature", params.temperature},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt.text}}})}};
  const auto started = std::chrono::steady_clock::now();
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const bool slow = std::chrono::steady_clock::now() - started >= params.request_timeout;
    if (err == httplib::Error::ConnectionTimeout || (err == httplib::Error::Read && slow))
      throw Error(Errc::Timeout, "model request timed out");
    throw Error(Errc::Transport, "model request failed: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300)
    throw EndpointError(res->status, "model endpoint returned HTTP " + std::to_string(res->status));
  try {
    const auto reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw EndpointError(res->status, std::string("malformed completion body: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Response parsing

namespace {

// Index one past the `]` closing the array opened at `open`, honouring JSON
// strings; npos if unclosed.
std::size_t json_array_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

}  // namespace

std::vector<std::string> parse_sql_array(std::string_view response) {
  for (std::size_t open = response.find('['); open != std::string_view::npos; open = response.find('[', open + 1)) {
    const auto end = json_array_end(response, open);
    if (end == std::string_view::npos) continue;
    const auto parsed = json::parse(response.substr(open, end - open), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_array()) continue;
    if (!std::all_of(parsed.begin(), parsed.end(), [](const json& e) { return e.is_string(); })) continue;
    std::vector<std::string> out;
    for (const auto& e : parsed) {
      auto s = trim(e.get<std::string>());
      if (!s.empty()) out.push_back(std::move(s));
    }
    return out;
  }
  throw Error(Errc::NoJsonArray, "no JSON string array in model response");
}

// ---------------------------------------------------------------------------
// Placeholder filler

namespace {

int next_suffix(const SchemaContext& ctx, char prefix, const SchemaObject* within = nullptr) {
  int best = -1;
  auto scan = [&](const std::string& name) {
    if (name.size() < 2 || std::tolower(static_cast<unsigned char>(name[0])) != prefix) return;
    if (!std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      return;
    best = std::max(best, std::stoi(name.substr(1)));
  };
  if (within) {
    for (const auto& c : within->columns) scan(c.name);
  } else {
    for (const auto& o : ctx.objects) scan(o.name);
  }
  return best + 1;
}

}  // namespace

std::string fill_template(std::string_view templ, const SchemaContext& context, std::size_t table_choice) {
  const auto tables = context.tables();
  const SchemaObject* current = tables.empty() ? nullptr : tables[table_choice % tables.size()];
  std::size_t table_uses = 0, column_uses = 0;
  int fresh_table = next_suffix(context, 't');
  int fresh_view = next_suffix(context, 'v');
  int fresh_column = current ? next_suffix(context, 'c', current) : 1;
  int alias_no = 0;

  auto column = [&]() -> std::string {
    if (!current || current->columns.empty()) return "1";
    return current->columns[column_uses++ % current->columns.size()].name;
  };

  std::string out;
  std::size_t i = 0;
  while (i < templ.size()) {
    if (templ[i] != '[') {
      out += templ[i++];
      continue;
    }
    const auto close = templ.find(']', i);
    if (close == std::string_view::npos) {
      out += templ.substr(i);
      break;
    }
    const std::string name(templ.substr(i + 1, close - i - 1));
    i = close + 1;
    const auto n = to_lower(name);
    std::string v;
    if (n == "tablename" || n == "objectname") {
      if (!tables.empty()) current = tables[(table_choice + table_uses++) % tables.size()];
      v = current ? current->name : "t0";
    } else if (n == "columnname" || n == "fullcolumnname" || n == "uid" || n == "expr" || n == "expression") {
      v = column();
    } else if (n == "newtablename") {
      v = "t" + std::to_string(fresh_table++);
    } else if (n == "newcolumnname") {
      v = "c" + std::to_string(fresh_column++);
    } else if (n == "viewname") {
      v = "v" + std::to_string(fresh_view++);
    } else if (n == "alterspecification") {
      v = "ADD COLUMN c" + std::to_string(fresh_column++) + " INT";
    } else if (n == "tablealias") {
      v = "a" + std::to_string(alias_no++);
    } else if (n == "columnalias") {
      v = "x" + std::to_string(alias_no++);
    } else if (n == "indexname") {
      v = "i0";
    } else if (n == "triggername") {
      v = "tr0";
    } else if (n == "windowname") {
      v = "w0";
    } else if (n == "collationname") {
      v = "NOCASE";
    } else if (n == "savepointname") {
      v = "sp0";
    } else if (n == "typename" || n == "datatype") {
      v = "INT";
    } else if (n == "pragmaname") {
      v = "cache_size";
    } else if (n == "variablename") {
      v = "sort_buffer_size";
    } else if (n == "componentname") {
      v = "'file://component_validate_password'";
    } else if (n == "partitiondefinitions") {
      v = "";
    } else {
      v = "1";
    }
    out += v;
  }
  // collapse runs of spaces left by empty substitutions
  std::string squeezed;
  for (char c : out)
    if (!(c == ' ' && !squeezed.empty() && squeezed.back() == ' ')) squeezed += c;
  return ensure_terminated(trim(squeezed));
}

// ---------------------------------------------------------------------------
// Mock client

MockClient MockClient::from_script_text(std::string_view text) {
  MockClient c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::Config, std::string("mock script: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::Config, "mock script must be a JSON object");
  for (auto kind : {PromptKind::Instantiation, PromptKind::Repair}) {
    const auto key = std::string(to_string(kind));
    if (!j.contains(key)) continue;
    for (const auto& e : j.at(key)) {
      Entry entry;
      entry.kind = kind;
      if (e.contains("match")) entry.match = e.at("match").get<std::string>();
      if (e.contains("response")) entry.responses.push_back(e.at("response").get<std::string>());
      if (e.contains("responses"))
        for (const auto& r : e.at("responses")) entry.responses.push_back(r.is_string() ? r.get<std::string>() : r.dump());
      if (entry.responses.empty()) throw Error(Errc::Config, "mock script entry without responses");
      c.entries_.push_back(std::move(entry));
    }
  }
  c.filler_fallback_ = j.value("filler_fallback", true);
  return c;
}

MockClient MockClient::from_script_file(const std::string& path) { return from_script_text(read_file(path)); }

std::string MockClient::complete(const Prompt& prompt, const ModelParams&) {
  std::lock_guard<std::mutex> lock(*mu_);
  std::optional<std::string> response;
  for (auto& e : entries_) {
    if (e.kind != prompt.kind) continue;
    if (e.match && prompt.text.find(*e.match) == std::string::npos) continue;
    response = e.responses[std::min(e.served, e.responses.size() - 1)];
    ++e.served;
    break;
  }
  if (!response) {
    if (!filler_fallback_) throw EndpointError(404, "mock script has no response for this prompt");
    response = prompt.kind == PromptKind::Instantiation ? fill_instantiation(prompt) : fill_repair(prompt);
  }
  calls_.push_back({prompt.kind, prompt.text, *response});
  return *response;
}

std::vector<MockClient::CallRecord> MockClient::calls() const {
  std::lock_guard<std::mutex> lock(*mu_);
  return calls_;
}

std::size_t MockClient::call_count() const {
  std::lock_guard<std::mutex> lock(*mu_);
  return calls_.size();
}

std::size_t MockClient::call_count(PromptKind kind) const {
  std::lock_guard<std::mutex> lock(*mu_);
  return static_cast<std::size_t>(
      std::count_if(calls_.begin(), calls_.end(), [&](const CallRecord& r) { return r.kind == kind; }));
}

std::string MockClient::fill_instantiation(const Prompt& prompt) {
  const auto slots = extract_slots(PromptTemplates::shared().instantiation, prompt.text);
  if (!slots) return "I could not read the prompt.";
  SchemaContext ctx;
  for (const auto& s : split_statements(slots->at("init_schema_statements"))) register_statement(ctx, s);
  json out = json::array();
  for (const auto& line : split(slots->at("sql_templates"), '\n')) {
    if (trim(line).empty()) continue;
    out.push_back(fill_template(trim(line), ctx, rotate_tables_ ? rotation_++ : 0));
  }
  return out.dump();
}

// Rule-derived repair: a missing table or procedure is created in front of
// the failing statement; any other marked statement is removed.
std::string MockClient::fill_repair(const Prompt& prompt) {
  const auto slots = extract_slots(PromptTemplates::shared().repair, prompt.text);
  if (!slots) return "I could not read the prompt.";
  const auto lines = split(slots->at("casecontent"), '\n');
  static const std::regex missing_table(R"((?:no such table: |Table '(?:\w+\.)?)(\w+))", std::regex::icase);
  static const std::regex missing_proc(R"(PROCEDURE (?:\w+\.)?(\w+) does not exist)", std::regex::icase);

  json out = json::array();
  std::string plain;
  auto flush_plain = [&] {
    for (const auto& s : split_statements(plain)) out.push_back(s);
    plain.clear();
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]) != "-- [Need to repair<") {
      plain += lines[i] + "\n";
      continue;
    }
    flush_plain();
    std::vector<std::string> block;
    std::size_t j = i + 1;
    while (j < lines.size() && trim(lines[j]) != "-- >Need to repair]") block.push_back(lines[j++]);
    i = j;
    std::size_t last_sql = 0;
    for (std::size_t k = 0; k < block.size(); ++k)
      if (!starts_with_icase(trim(block[k]), "--")) last_sql = k;
    std::vector<std::string> sql(block.begin(), block.begin() + static_cast<std::ptrdiff_t>(std::min(last_sql + 1, block.size())));
    std::string message;
    if (last_sql + 1 < block.size()) message = block[last_sql + 1];
    const auto stmt = trim(join(sql, "\n"));
    std::smatch m;
    if (std::regex_search(message, m, missing_proc)) {
      out.push_back("CREATE PROCEDURE " + m[1].str() + "() BEGIN SELECT 1; END;");
      out.push_back(stmt);
    } else if (std::regex_search(message, m, missing_table) && message.find("already exists") == std::string::npos) {
      out.push_back("CREATE TABLE " + m[1].str() + " (c0 INT);");
      out.push_back(stmt);
    }
  }
  flush_plain();
  return out.dump();
}

}  // namespace sqlfuzz
