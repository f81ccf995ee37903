#include "sqlfuzz/repair.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>

#include <nlohmann/json.hpp>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Classification

ClassifierTable ClassifierTable::parse(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(Errc::Config, std::string("classifier table is not valid JSON: ") + e.what());
  }
  ClassifierTable t;
  t.dialect = j.value("dialect", "");
  if (j.contains("category_suggestions")) {
    for (const auto& [name, text] : j["category_suggestions"].items())
      t.category_suggestions[parse_error_category(name)] = text.get<std::string>();
  }
  if (!j.contains("rules") || !j["rules"].is_array() || j["rules"].empty())
    throw Error(Errc::Config, "classifier table has no rules");
  for (const auto& r : j["rules"]) {
    ClassifierRule rule;
    rule.category = parse_error_category(r.at("category").get<std::string>());
    if (r.contains("code")) rule.code = r["code"].get<int>();
    rule.pattern = r.value("pattern", "");
    try {
      rule.re = std::regex(rule.pattern, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw Error(Errc::Config, "bad classifier pattern '" + rule.pattern + "': " + e.what());
    }
    if (r.contains("suggestion")) rule.suggestion = r["suggestion"].get<std::string>();
    rule.fix = r.value("fix", "");
    t.rules.push_back(std::move(rule));
  }
  const auto& last = t.rules.back();
  if (last.category != ErrorCategory::Unknown || last.code || (last.pattern != ".*" && !last.pattern.empty()))
    throw Error(Errc::Config, "classifier table must end with a catch-all Unknown rule");
  return t;
}

ClassifierTable ClassifierTable::load(const std::string& dialect, const std::string& data_dir) {
  const fs::path p = fs::path(data_dir) / "errors" / (dialect + ".rules");
  if (!fs::exists(p)) throw Error(Errc::Config, "no classifier table for dialect " + dialect + " at " + p.string());
  auto t = parse(read_file(p.string()));
  if (t.dialect != dialect) throw Error(Errc::Config, "classifier table " + p.string() + " is for " + t.dialect);
  return t;
}

Classification ClassifierTable::classify(std::optional<int> code, std::string_view message) const {
  const std::string msg(message);
  for (const auto& rule : rules) {
    if (rule.code && (!code || *code != *rule.code)) continue;
    std::smatch m;
    if (!rule.pattern.empty() && !std::regex_search(msg, m, rule.re)) continue;
    Classification c;
    c.category = rule.category;
    c.fix = rule.fix;
    if (rule.suggestion) {
      c.suggestion = rule.pattern.empty() ? *rule.suggestion : m.format(*rule.suggestion);
    } else if (auto it = category_suggestions.find(rule.category); it != category_suggestions.end()) {
      c.suggestion = it->second;
    }
    return c;
  }
  return {};
}

std::vector<ErrorRecord> tag_errors(const ExecutionOutcome& outcome, const TestCase& testcase,
                                    const ClassifierTable& table) {
  std::vector<ErrorRecord> out;
  const std::size_t n = std::min(outcome.per_statement.size(), testcase.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = outcome.per_statement[i];
    if (r.status != StatementStatus::Error) continue;
    auto c = table.classify(r.code, r.message);
    ErrorRecord rec;
    rec.statement_index = i;
    rec.code = r.code;
    rec.message = r.message;
    rec.category = c.category;
    rec.suggestion = std::move(c.suggestion);
    rec.fix = std::move(c.fix);
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Syntax-aware filtering

int select_depth(std::string_view statement) {
  static const std::set<std::string> kClauses = {"FROM",  "WHERE",     "GROUP",  "HAVING", "ORDER", "LIMIT",
                                                 "UNION", "INTERSECT", "EXCEPT", "JOIN",   "WINDOW"};
  auto toks = significant_tokens(statement);
  std::vector<bool> subquery;  // per open paren
  int nesting = 0, max_nesting = 0, clauses = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.text == "(") {
      const bool sub = i + 1 < toks.size() && (toks[i + 1].is_word("SELECT") || toks[i + 1].is_word("WITH") ||
                                               toks[i + 1].is_word("VALUES"));
      subquery.push_back(sub);
      if (sub) max_nesting = std::max(max_nesting, ++nesting);
    } else if (t.text == ")") {
      if (!subquery.empty()) {
        if (subquery.back()) --nesting;
        subquery.pop_back();
      }
    } else if (t.kind == TokenKind::Word && kClauses.count(to_upper(t.text))) {
      ++clauses;
    }
  }
  return 1 + max_nesting + clauses;
}

namespace {

bool is_select(const Statement& s) {
  auto w = leading_words(s.text, 1);
  if (w.empty()) return trim(s.text).rfind('(', 0) == 0;
  return w[0] == "SELECT" || w[0] == "WITH" || w[0] == "VALUES";
}

}  // namespace

FilterResult syntax_filter(const TestCase& testcase, const std::vector<ErrorRecord>& records) {
  FilterResult out;
  std::set<std::size_t> dropped;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    const Statement& st = testcase.at(rec.statement_index);
    FilterDecision d{k, FilterAction::Repair, ""};
    const bool flagged = !st.feature_flags.empty();
    switch (rec.category) {
      case ErrorCategory::Syntax:
        if (flagged) {
          d.reason = "feature statement";
        } else if (is_select(st) && select_depth(st.text) < kMinSelectDepth) {
          d.action = FilterAction::Drop;
          d.reason = "shallow select";
        }
        break;
      case ErrorCategory::DuplicateDefinition:
      case ErrorCategory::UnsupportedFeature:
        d.action = flagged ? FilterAction::KeepAsIs : FilterAction::Drop;
        d.reason = flagged ? "feature statement" : std::string(to_string(rec.category));
        break;
      default:
        break;
    }
    if (d.action == FilterAction::Drop) dropped.insert(rec.statement_index);
    if (d.action == FilterAction::Repair) out.retained.push_back(rec);
    out.decisions.push_back(std::move(d));
  }
  out.dropped_statements.assign(dropped.begin(), dropped.end());
  return out;
}

TestCase drop_statements(const TestCase& testcase, const std::vector<std::size_t>& flat_indices,
                         std::vector<ErrorRecord>& records) {
  const std::set<std::size_t> gone(flat_indices.begin(), flat_indices.end());
  TestCase out;
  out.id = testcase.id;
  out.lineage = testcase.lineage;
  const std::size_t ns = testcase.schema_part.size();
  for (std::size_t i = 0; i < testcase.size(); ++i) {
    if (gone.count(i)) continue;
    (i < ns ? out.schema_part : out.op_part).push_back(testcase.at(i));
  }
  std::vector<ErrorRecord> kept;
  for (auto& r : records) {
    if (gone.count(r.statement_index)) continue;
    r.statement_index -= static_cast<std::size_t>(
        std::distance(gone.begin(), gone.lower_bound(r.statement_index)));
    kept.push_back(std::move(r));
  }
  records = std::move(kept);
  return out;
}

// ---------------------------------------------------------------------------
// Rule-based repair

namespace {

struct Edit {
  std::size_t offset, length;
  std::string text;
};

std::string apply_edits(std::string_view text, std::vector<Edit> edits) {
  std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) { return a.offset > b.offset; });
  std::string out(text);
  for (const auto& e : edits) out.replace(e.offset, e.length, e.text);
  return out;
}

std::string unquote(const std::string& lit) {
  if (lit.size() >= 2 && lit.front() == '\'' && lit.back() == '\'') return lit.substr(1, lit.size() - 2);
  return lit;
}

bool looks_numeric(const std::string& s) {
  static const std::regex re(R"(^\s*[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?\s*$)");
  return std::regex_match(s, re);
}

bool looks_wkt(const std::string& s) {
  static const std::regex re(
      R"(^\s*(POINT|LINESTRING|POLYGON|MULTIPOINT|MULTILINESTRING|MULTIPOLYGON|GEOMETRYCOLLECTION)\s*\()",
      std::regex::icase);
  return std::regex_search(s, re);
}

/// First quoted value in a diagnostic, e.g. 'abc' in "Incorrect integer value: 'abc' for column".
std::optional<std::string> quoted_in_message(const std::string& message) {
  static const std::regex re(R"('([^']*)')");
  std::smatch m;
  if (std::regex_search(message, m, re)) return m[1].str();
  return std::nullopt;
}

std::vector<Token> string_literals(const std::vector<Token>& toks) {
  std::vector<Token> out;
  for (const auto& t : toks)
    if (t.kind == TokenKind::String && !t.text.empty() && t.text.front() == '\'') out.push_back(t);
  return out;
}

/// Replaces the literal the message names, else the first literal `bad` accepts.
std::optional<std::string> replace_literal(const Statement& st, const std::string& message, const std::string& with,
                                           const std::function<bool(const std::string&)>& bad) {
  auto toks = significant_tokens(st.text);
  auto lits = string_literals(toks);
  if (auto named = quoted_in_message(message)) {
    for (const auto& t : lits)
      if (unquote(t.text) == *named) return apply_edits(st.text, {{t.offset, t.text.size(), with}});
  }
  for (const auto& t : lits)
    if (bad(unquote(t.text))) return apply_edits(st.text, {{t.offset, t.text.size(), with}});
  return std::nullopt;
}

std::optional<std::string> fix_geometry(const Statement& st, const Dialect& d) {
  if (d.geometry_literal.empty()) return std::nullopt;
  auto lits = string_literals(significant_tokens(st.text));
  const auto paren = d.geometry_literal.find('(');
  const auto quote = d.geometry_literal.find('\'');
  const bool has_ctor = paren != std::string::npos && (quote == std::string::npos || paren < quote);
  auto toks = significant_tokens(st.text);
  std::vector<Edit> edits;
  for (const auto& t : lits) {
    if (!looks_wkt(unquote(t.text))) continue;
    // Already an argument of a constructor call?
    auto it = std::find_if(toks.begin(), toks.end(), [&](const Token& x) { return x.offset == t.offset; });
    if (it != toks.begin() && it != toks.end() && std::prev(it)->text == "(" && std::prev(it) != toks.begin() &&
        std::prev(it, 2)->kind == TokenKind::Word)
      continue;
    if (has_ctor) edits.push_back({t.offset, t.text.size(), d.geometry_literal.substr(0, paren) + "(" + t.text + ")"});
  }
  if (edits.empty()) {
    for (const auto& t : lits) {
      if (unquote(t.text) == unquote(d.geometry_literal)) continue;
      edits.push_back({t.offset, t.text.size(), d.geometry_literal});
      break;
    }
  }
  if (edits.empty()) return std::nullopt;
  return apply_edits(st.text, edits);
}

/// Setting name and the byte span of its value inside SET/PRAGMA text.
std::optional<std::string> fix_setting(const ErrorRecord& rec, const Statement& st, const Dialect& d) {
  auto toks = significant_tokens(st.text);
  std::optional<std::string> wanted = quoted_in_message(rec.message);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].kind != TokenKind::Word) continue;
    const SettingSpec* spec = d.setting(to_lower(toks[i].text));
    if (!spec) continue;
    if (wanted && !iequals(*wanted, toks[i].text)) continue;
    std::size_t j = i + 1;
    if (j < toks.size() && (toks[j].text == "=" || toks[j].text == ":=" || toks[j].text == "(")) ++j;
    else continue;
    std::size_t k = j;
    while (k < toks.size() && toks[k].text != "," && toks[k].text != ";" && toks[k].text != ")") ++k;
    if (k == j) continue;
    const std::size_t begin = toks[j].offset;
    const std::size_t end = toks[k - 1].offset + toks[k - 1].text.size();
    if (st.text.substr(begin, end - begin) == spec->default_value) return std::nullopt;
    return apply_edits(st.text, {{begin, end - begin, spec->default_value}});
  }
  return std::nullopt;
}

std::optional<std::string> replace_after(const Statement& st, std::string_view keyword, const std::string& with,
                                         bool skip_equals) {
  auto toks = significant_tokens(st.text);
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    if (!toks[i].is_word(keyword)) continue;
    std::size_t j = i + 1;
    if (skip_equals && toks[j].text == "=" && j + 1 < toks.size()) ++j;
    if (toks[j].kind != TokenKind::Word && toks[j].kind != TokenKind::QuotedIdent && toks[j].kind != TokenKind::String)
      continue;
    if (iequals(unquote(toks[j].text), unquote(with))) return std::nullopt;
    return apply_edits(st.text, {{toks[j].offset, toks[j].text.size(), with}});
  }
  return std::nullopt;
}

std::optional<std::string> fix_component(const Statement& st, const Dialect& d) {
  if (d.fallback_component.empty()) return std::nullopt;
  auto toks = significant_tokens(st.text);
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    if (!toks[i].is_word("COMPONENT")) continue;
    std::vector<Edit> edits;
    for (std::size_t j = i + 1; j < toks.size() && toks[j].kind == TokenKind::String; j += 2) {
      if (toks[j].text != d.fallback_component) edits.push_back({toks[j].offset, toks[j].text.size(), d.fallback_component});
      if (j + 1 >= toks.size() || toks[j + 1].text != ",") break;
    }
    if (edits.empty()) return std::nullopt;
    return apply_edits(st.text, {edits.front()});
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> rule_repair(const ErrorRecord& record, const Statement& statement, const Dialect& dialect) {
  const std::string& fix = record.fix;
  std::optional<std::string> out;
  if (fix == "geometry") {
    out = fix_geometry(statement, dialect);
  } else if (fix == "setting") {
    out = fix_setting(record, statement, dialect);
  } else if (fix == "datetime") {
    if (!dialect.datetime_literal.empty())
      out = replace_literal(statement, record.message, dialect.datetime_literal, [](const std::string&) { return true; });
  } else if (fix == "integer") {
    out = replace_literal(statement, record.message, "0", [](const std::string& v) { return !looks_numeric(v); });
  } else if (fix == "json") {
    if (!dialect.json_literal.empty())
      out = replace_literal(statement, "", dialect.json_literal,
                            [](const std::string& v) { return v.rfind('$', 0) != 0 && !json::accept(v); });
  } else if (fix == "json_path") {
    out = replace_literal(statement, record.message, "'$'", [](const std::string& v) { return v.rfind('$', 0) != 0; });
  } else if (fix == "module") {
    if (!dialect.fallback_module.empty()) out = replace_after(statement, "USING", dialect.fallback_module, false);
  } else if (fix == "engine") {
    if (!dialect.fallback_engine.empty()) out = replace_after(statement, "ENGINE", dialect.fallback_engine, true);
  } else if (fix == "component") {
    out = fix_component(statement, dialect);
  }
  if (out && *out == statement.text) return std::nullopt;
  return out;
}

// ---------------------------------------------------------------------------
// Semantic repair

namespace {

constexpr std::string_view kDefaultObjectSuggestion =
    "Create the referenced object and insert its definition in front of this statement.";

std::string strip_markers(const std::string& text) {
  std::vector<std::string> keep;
  for (const auto& line : split(text, '\n')) {
    const std::string t = trim(line);
    if (t.rfind("-- [Need to repair<", 0) == 0 || t.rfind("-- >Need to repair]", 0) == 0) continue;
    keep.push_back(line);
  }
  return trim(join(keep, "\n"));
}

}  // namespace

SarResult semantic_repair(const TestCase& testcase, std::vector<ErrorRecord> records, SchemaContext& context,
                          ModelClient& client, const ModelParams& params, const Dialect& dialect) {
  SarResult out{testcase, false, ""};
  if (records.empty()) throw Error(Errc::Config, "semantic repair needs at least one record");
  for (auto& r : records)
    if (r.category == ErrorCategory::InvalidObjectReference && !r.suggestion)
      r.suggestion = std::string(kDefaultObjectSuggestion);
  try {
    const Prompt prompt = build_repair_prompt(testcase, records, dialect);
    const std::string reply = client.complete(prompt, params);
    std::vector<std::string> texts;
    for (const auto& s : parse_sql_array(reply)) {
      std::string t = strip_markers(s);
      if (!t.empty()) texts.push_back(ensure_terminated(t));
    }
    if (texts.empty()) {
      out.repair_failed = true;
      out.failure = "model returned an empty case";
      return out;
    }
    TestCase fixed = TestCase::from_ordered_texts(texts);
    fixed.id = testcase.id;
    fixed.lineage = testcase.lineage;
    for (const auto& t : texts) register_statement(context, t);
    out.testcase = std::move(fixed);
  } catch (const Error& e) {
    out.repair_failed = true;
    out.failure = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loop

void RepairConfig::validate() const {
  if (max_rounds < 1) throw Error(Errc::Config, "max_rounds must be at least 1");
}

RepairResult repair_loop(const TestCase& testcase, Driver& driver, const ClassifierTable& table, ModelClient& client,
                         const ModelParams& params, SchemaContext& context, const Dialect& dialect,
                         const RepairConfig& config, CoverageOracle* oracle) {
  config.validate();
  RepairResult res;
  TestCase current = testcase;
  // Rounds without a model call only shrink or locally rewrite the case; the
  // cap guards against rewrites that keep producing fresh rule-level errors.
  const int max_executions = 3 * config.max_rounds + 3;
  for (;;) {
    driver.reset_environment();
    ExecutionOutcome outcome = execute(driver, current, oracle);
    ++res.executions;
    if (config.on_execute) config.on_execute(current, outcome);
    res.new_coverage += outcome.coverage_new_edges;
    res.testcase = current;
    res.outcome = outcome;
    if (outcome.crash) return res;

    auto records = tag_errors(outcome, current, table);
    RepairRound round;
    round.errors = records.size();
    if (records.empty()) {
      res.rounds.push_back(round);
      return res;
    }
    auto filtered = syntax_filter(current, records);
    round.dropped = filtered.dropped_statements.size();
    std::vector<ErrorRecord> retained = filtered.retained;
    TestCase next = drop_statements(current, filtered.dropped_statements, retained);

    std::vector<ErrorRecord> for_model;
    bool rewritten = false;
    for (auto& rec : retained) {
      const RepairRoute route = rec.category == ErrorCategory::Syntax ? RepairRoute::Sar : route_of(rec.category);
      if (route == RepairRoute::Rbr) {
        if (auto fixed = rule_repair(rec, next.at(rec.statement_index), dialect)) {
          const std::size_t ns = next.schema_part.size();
          Statement repl = Statement::from(*fixed);
          if (rec.statement_index < ns) next.schema_part[rec.statement_index] = std::move(repl);
          else next.op_part[rec.statement_index - ns] = std::move(repl);
          ++round.rule_fixed;
          rewritten = true;
          continue;
        }
      }
      if (route != RepairRoute::Saf) for_model.push_back(rec);
    }
    round.sent_to_model = for_model.size();

    if (rewritten) {
      // Later errors often cascade from the rewritten statement; re-run
      // before spending a model call on them.
      round.sent_to_model = 0;
      res.rounds.push_back(round);
    } else if (for_model.empty()) {
      res.rounds.push_back(round);
      if (round.dropped == 0) return res;  // only kept-as-is records remain
    } else {
      res.rounds.push_back(round);
      if (res.model_calls >= config.max_rounds) {
        res.repair_failed = true;
        return res;
      }
      ++res.model_calls;
      auto sar = semantic_repair(next, for_model, context, client, params, dialect);
      if (sar.repair_failed) {
        res.repair_failed = true;
        return res;
      }
      next = std::move(sar.testcase);
    }
    if (next.empty() || res.executions >= max_executions) {
      res.repair_failed = true;  // nothing worth keeping, or no convergence
      return res;
    }
    current = std::move(next);
  }
}

}  // namespace sqlfuzz
