#include "sqlfuzz/mutation.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

#include <json.hpp>

#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

std::string_view to_string(RewriteCategory c) {
  switch (c) {
    case RewriteCategory::Predicate: return "predicate";
    case RewriteCategory::Order: return "order";
    case RewriteCategory::Join: return "join";
  }
  return "?";
}

namespace {

std::vector<std::string> words_of(const std::string& spelled) {
  std::vector<std::string> out;
  for (const auto& w : split(spelled, ' '))
    if (!w.empty()) out.push_back(to_upper(w));
  return out;
}

}  // namespace

RewriteRuleSet RewriteRuleSet::load(const std::string& dialect, const std::string& data_dir) {
  const auto path = std::filesystem::path(data_dir) / "rewrites" / (dialect + ".json");
  if (dialect.empty() || dialect.find_first_of("/\\.") != std::string::npos || !std::filesystem::exists(path))
    throw Error(Errc::UnknownDialect, "no rewrite rules for dialect '" + dialect + "'");
  RewriteRuleSet set;
  set.dialect = dialect;
  try {
    const auto j = nlohmann::json::parse(read_file(path.string()));
    if (j.value("dialect", dialect) != dialect) throw Error(Errc::Config, path.string() + ": dialect mismatch");
    auto add_group = [&](const char* key, RewriteCategory cat) {
      for (const auto& r : j.value(key, nlohmann::json::array())) {
        RewriteRule rule;
        rule.category = cat;
        rule.from = words_of(r.at("from").get<std::string>());
        for (const auto& t : r.at("to")) rule.to.push_back(words_of(t.get<std::string>()));
        rule.dialect_mask = {dialect};
        set.rules.push_back(std::move(rule));
      }
    };
    add_group("predicate", RewriteCategory::Predicate);
    add_group("order", RewriteCategory::Order);
    set.joins = j.value("joins", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, path.string() + ": " + e.what());
  }
  for (const auto& spelled : set.joins) {
    RewriteRule rule;
    rule.category = RewriteCategory::Join;
    rule.from = words_of(spelled);
    for (const auto& other : set.joins)
      if (words_of(other) != rule.from) rule.to.push_back(words_of(other));
    rule.dialect_mask = {dialect};
    if (!rule.to.empty()) set.rules.push_back(std::move(rule));
  }
  for (const auto& r : set.rules) {
    if (r.from.empty() || r.to.empty()) throw Error(Errc::Config, path.string() + ": empty rewrite rule");
    for (const auto& t : r.to)
      if (t == r.from) throw Error(Errc::Config, path.string() + ": rewrite maps " + join(r.from, " ") + " to itself");
  }
  return set;
}

void MutationConfig::validate() const {
  if (!(0.0 <= drop_low && drop_low <= drop_high && drop_high <= 1.0))
    throw Error(Errc::Config, "drop range must satisfy 0 <= drop_low <= drop_high <= 1");
  if (crossover_bias < 0.0 || crossover_bias > 1.0) throw Error(Errc::Config, "crossover_bias must lie in [0,1]");
  if (rewrite_probability < 0.0 || rewrite_probability > 1.0)
    throw Error(Errc::Config, "rewrite_probability must lie in [0,1]");
}

std::vector<Statement> unify_schemas(const std::vector<Statement>& s1, const std::vector<Statement>& s2, Rng& rng) {
  struct Groups {
    std::map<std::string, std::vector<Statement>> by_name;
    std::vector<std::string> order;
  };
  auto group = [](const std::vector<Statement>& part, const std::string& tag) {
    Groups g;
    for (std::size_t i = 0; i < part.size(); ++i) {
      auto key = schema_target(part[i].text);
      if (key.empty()) key = "#" + tag + std::to_string(i);  // unreadable: carried on its own
      if (!g.by_name.count(key)) g.order.push_back(key);
      g.by_name[key].push_back(part[i]);
    }
    return g;
  };
  const auto g1 = group(s1, "a");
  const auto g2 = group(s2, "b");

  std::vector<std::string> names;
  for (const auto& n : g1.order) names.push_back(n);
  for (const auto& n : g2.order)
    if (!g1.by_name.count(n)) names.push_back(n);
  // views may read tables that only the second parent defines
  std::stable_partition(names.begin(), names.end(), [](const std::string& n) { return n[0] != 'v'; });

  std::vector<Statement> out;
  for (const auto& n : names) {
    const auto in1 = g1.by_name.find(n);
    const auto in2 = g2.by_name.find(n);
    const std::vector<Statement>* chosen;
    if (in1 != g1.by_name.end() && in2 != g2.by_name.end())
      chosen = uniform01(rng) < 0.5 ? &in1->second : &in2->second;
    else
      chosen = in1 != g1.by_name.end() ? &in1->second : &in2->second;
    out.insert(out.end(), chosen->begin(), chosen->end());
  }
  return out;
}

std::vector<Statement> crossover(const std::vector<Statement>& o1, const std::vector<Statement>& o2,
                                 const MutationConfig& config, Rng& rng) {
  std::vector<Statement> out;
  out.reserve(o1.size() + o2.size());
  std::size_t i = 0, j = 0;
  while (i < o1.size() || j < o2.size()) {
    if (i < o1.size() && (j >= o2.size() || uniform01(rng) < config.crossover_bias))
      out.push_back(o1[i++]);
    else
      out.push_back(o2[j++]);
  }
  return out;
}

std::vector<Statement> drop_filter(const std::vector<Statement>& ops, const MutationConfig& config, Rng& rng) {
  config.validate();
  std::vector<Statement> out;
  for (const auto& s : ops) {
    const double p = uniform(rng, config.drop_low, config.drop_high);
    if (uniform01(rng) < p) continue;
    out.push_back(s);
  }
  if (out.empty() && !ops.empty()) out.push_back(ops[uniform_index(rng, ops.size())]);
  return out;
}

namespace {

bool token_matches(const Token& t, const std::string& pat) {
  if (pat.empty()) return false;
  if (std::isalpha(static_cast<unsigned char>(pat[0])) || pat[0] == '_')
    return t.kind == TokenKind::Word && to_upper(t.text) == pat;
  return t.kind == TokenKind::Operator && t.text == pat;
}

bool is_join_modifier(const Token& t) {
  for (const char* w : {"NATURAL", "LEFT", "RIGHT", "FULL", "INNER", "OUTER", "CROSS", "STRAIGHT_JOIN"})
    if (t.is_word(w)) return true;
  return false;
}

struct Edit {
  std::size_t begin, end;
  std::string text;
};

}  // namespace

Statement logic_shift(const Statement& stmt, const RewriteRuleSet& rules, const std::string& dialect,
                      const MutationConfig& config, Rng& rng) {
  const auto lexed = lex_sql(stmt.text);
  std::vector<const Token*> sig;
  for (const auto& t : lexed.tokens)
    if (t.significant()) sig.push_back(&t);

  std::vector<const RewriteRule*> legal;
  for (const auto& r : rules.rules)
    if (r.dialect_mask.count(dialect)) legal.push_back(&r);

  std::vector<std::string> clause{"none"};
  std::vector<int> between{0};
  std::vector<Edit> edits;

  auto next_is = [&](std::size_t k, const char* w) { return k + 1 < sig.size() && sig[k + 1]->is_word(w); };

  for (std::size_t k = 0; k < sig.size(); ++k) {
    const Token& t = *sig[k];
    if (t.text == "(") {
      clause.push_back(clause.back());
      between.push_back(0);
      continue;
    }
    if (t.text == ")") {
      if (clause.size() > 1) {
        clause.pop_back();
        between.pop_back();
      }
      continue;
    }
    if (t.kind == TokenKind::Word) {
      const auto u = to_upper(t.text);
      if (u == "SELECT") clause.back() = "select";
      else if (u == "FROM") clause.back() = "from";
      else if (u == "WHERE") clause.back() = "where";
      else if (u == "HAVING") clause.back() = "having";
      else if (u == "ORDER" && next_is(k, "BY")) clause.back() = "order";
      else if (u == "GROUP" && next_is(k, "BY")) clause.back() = "group";
      else if (u == "PARTITION" && next_is(k, "BY")) clause.back() = "partition";
      else if (u == "ON") clause.back() = (next_is(k, "CONFLICT") || next_is(k, "DUPLICATE")) ? "conflict" : "on";
      else if (u == "LIMIT" || u == "OFFSET" || u == "SET" || u == "VALUES" || u == "USING" || u == "RETURNING" ||
               u == "WINDOW" || u == "BEGIN" || u == "END" || u == "DO" || u == "UNION" || u == "INTERSECT" ||
               u == "EXCEPT" || u == "INSERT" || u == "UPDATE" || u == "DELETE" || u == "CREATE" || u == "ALTER" ||
               u == "DROP" || u == "WITH" || u == "INTO")
        clause.back() = "none";
      if (u == "BETWEEN") {
        ++between.back();
        continue;
      }
      if (u == "AND" && between.back() > 0) {  // BETWEEN x AND y
        --between.back();
        continue;
      }
    }
    if (t.kind != TokenKind::Word && t.kind != TokenKind::Operator) continue;

    const RewriteRule* best = nullptr;
    for (const auto* r : legal) {
      if (r->from.size() > sig.size() - k) continue;
      if (best && r->from.size() <= best->from.size()) continue;
      bool ok = true;
      for (std::size_t m = 0; m < r->from.size() && ok; ++m) ok = token_matches(*sig[k + m], r->from[m]);
      if (!ok) continue;
      const auto& ctx = clause.back();
      if (r->category == RewriteCategory::Predicate && ctx != "where" && ctx != "having" && ctx != "on") continue;
      if (r->category == RewriteCategory::Order && ctx != "order") continue;
      if (r->category == RewriteCategory::Join &&
          ((ctx != "from" && ctx != "on") || (k > 0 && is_join_modifier(*sig[k - 1]))))
        continue;
      best = r;
    }
    if (!best) continue;
    const std::size_t last = k + best->from.size() - 1;
    if (best->category == RewriteCategory::Join) clause.back() = "from";
    if (uniform01(rng) < config.rewrite_probability) {
      const auto& repl = best->to[uniform_index(rng, best->to.size())];
      edits.push_back({sig[k]->offset, sig[last]->offset + sig[last]->text.size(), join(repl, " ")});
    }
    k = last;
  }

  std::string text = stmt.text;
  for (auto it = edits.rbegin(); it != edits.rend(); ++it) text.replace(it->begin, it->end - it->begin, it->text);
  return Statement::from(std::move(text));
}

TestCase mutate(const TestCase& t1, const TestCase& t2, const MutationConfig& config, const RewriteRuleSet& rules,
                const std::string& dialect, Rng& rng) {
  config.validate();
  TestCase out;
  out.schema_part = unify_schemas(t1.schema_part, t2.schema_part, rng);
  for (const auto& s : drop_filter(crossover(t1.op_part, t2.op_part, config, rng), config, rng)) {
    auto shifted = logic_shift(s, rules, dialect, config, rng);
    // A rewrite cannot turn an operation into schema-initialisation; keep the partition.
    if (shifted.kind == StatementKind::SchemaInit) shifted = s;
    out.op_part.push_back(std::move(shifted));
  }
  out.lineage = {t1.id, t2.id};
  return out;
}

}  // namespace sqlfuzz
