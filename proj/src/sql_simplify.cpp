// Tolerant clause-level parser used by the reducer. It does not build a tree;
// it finds token ranges that can be cut while the remainder stays readable.
#include <algorithm>
#include <cctype>
#include <set>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/sql_lexer.hpp"
#include "sqlfuzz/validation.hpp"

namespace sqlfuzz {
namespace {

struct View {
  std::vector<Token> toks;  // significant only
  std::vector<int> depth;   // paren depth outside the token; parens carry the outer depth

  std::size_t begin_of(std::size_t i) const { return toks[i].offset; }
  std::size_t end_of(std::size_t i) const { return toks[i].offset + toks[i].text.size(); }
  bool word(std::size_t i, std::string_view kw) const { return i < toks.size() && toks[i].is_word(kw); }
  bool punct(std::size_t i, std::string_view p) const {
    return i < toks.size() && toks[i].kind == TokenKind::Punct && toks[i].text == p;
  }
};

View make_view(std::string_view text) {
  View v;
  v.toks = significant_tokens(text);
  int d = 0;
  for (const auto& t : v.toks) {
    if (t.kind == TokenKind::Punct && t.text == "(") {
      v.depth.push_back(d++);
    } else if (t.kind == TokenKind::Punct && t.text == ")") {
      v.depth.push_back(--d);
    } else {
      v.depth.push_back(d);
    }
  }
  return v;
}

std::size_t matching_paren(const View& v, std::size_t open) {
  for (std::size_t j = open + 1; j < v.toks.size(); ++j)
    if (v.punct(j, ")") && v.depth[j] == v.depth[open]) return j;
  return v.toks.size();
}

using Range = std::pair<std::size_t, std::size_t>;  // token indices [b, e)

/// Splits [b, e) at depth d on separator tokens chosen by `is_sep`, which
/// returns the separator's token count (0 when not a separator).
template <typename Pred>
std::vector<Range> split_at(const View& v, std::size_t b, std::size_t e, int d, Pred is_sep,
                            std::vector<Range>* seps = nullptr) {
  std::vector<Range> parts;
  std::size_t start = b;
  for (std::size_t i = b; i < e;) {
    std::size_t n = v.depth[i] == d ? is_sep(i) : 0;
    if (n > 0) {
      parts.emplace_back(start, i);
      if (seps) seps->emplace_back(i, i + n);
      i += n;
      start = i;
    } else {
      ++i;
    }
  }
  parts.emplace_back(start, e);
  return parts;
}

/// One unit per list element; the neighbouring separator goes with it.
void list_units(const View& v, const std::vector<Range>& items, const std::string& kind, std::vector<PruneUnit>& out) {
  if (items.size() < 2) return;
  for (const auto& it : items)
    if (it.first >= it.second) return;  // empty element, leave alone
  for (std::size_t k = 0; k < items.size(); ++k) {
    PruneUnit u;
    u.kind = kind;
    if (k == 0) {
      u.spans.emplace_back(v.begin_of(items[0].first), v.begin_of(items[1].first));
    } else {
      u.spans.emplace_back(v.end_of(items[k - 1].second - 1), v.end_of(items[k].second - 1));
    }
    out.push_back(std::move(u));
  }
}

void clause_unit(const View& v, std::size_t b, std::size_t e, const std::string& kind, std::vector<PruneUnit>& out) {
  if (b >= e) return;
  out.push_back({kind, {{v.begin_of(b), v.end_of(e - 1)}}});
}

void conjunct_units(const View& v, std::size_t b, std::size_t e, int d, std::vector<PruneUnit>& out) {
  bool pending_between = false;
  auto parts = split_at(v, b, e, d, [&](std::size_t i) -> std::size_t {
    if (v.word(i, "BETWEEN")) pending_between = true;
    if (!v.word(i, "AND")) return 0;
    if (pending_between) {
      pending_between = false;
      return 0;
    }
    return 1;
  });
  list_units(v, parts, "conjunct", out);
}

const std::set<std::string>& join_words() {
  static const std::set<std::string> w{"NATURAL", "LEFT", "RIGHT", "FULL", "INNER", "OUTER", "CROSS", "JOIN", "STRAIGHT_JOIN"};
  return w;
}

void from_units(const View& v, std::size_t b, std::size_t e, int d, std::vector<PruneUnit>& out) {
  std::vector<Range> seps;
  auto arms = split_at(
      v, b, e, d,
      [&](std::size_t i) -> std::size_t {
        if (v.punct(i, ",")) return 1;
        if (v.toks[i].kind != TokenKind::Word || !join_words().count(to_upper(v.toks[i].text))) return 0;
        std::size_t j = i;
        while (j < e && v.toks[j].kind == TokenKind::Word && join_words().count(to_upper(v.toks[j].text))) {
          if (v.word(j, "JOIN") || v.word(j, "STRAIGHT_JOIN")) return j - i + 1;
          ++j;
        }
        return 0;
      },
      &seps);
  if (arms.size() < 2) return;
  for (std::size_t k = 1; k < arms.size(); ++k) {
    if (arms[k].first >= arms[k].second) continue;
    out.push_back({"join_arm", {{v.end_of(arms[k - 1].second - 1), v.end_of(arms[k].second - 1)}}});
  }
}

struct Clause {
  std::string name;
  std::size_t kw = 0;    // first keyword token
  std::size_t body = 0;  // first token after the keyword(s)
};

/// Finds clause keywords at depth d inside [b, e).
std::vector<Clause> find_clauses(const View& v, std::size_t b, std::size_t e, int d,
                                 const std::vector<std::string>& names) {
  std::vector<Clause> out;
  for (std::size_t i = b; i < e; ++i) {
    if (v.depth[i] != d || v.toks[i].kind != TokenKind::Word) continue;
    for (const auto& n : names) {
      if (!v.word(i, n)) continue;
      std::size_t body = i + 1;
      if ((n == "GROUP" || n == "ORDER" || n == "PARTITION") && v.word(i + 1, "BY")) {
        body = i + 2;
      } else if (n == "GROUP" || n == "ORDER" || n == "PARTITION") {
        break;
      }
      if (n == "ON" && !(v.word(i + 1, "CONFLICT") || v.word(i + 1, "DUPLICATE"))) break;
      out.push_back({n, i, body});
      break;
    }
  }
  return out;
}

void select_core_units(const View& v, std::size_t b, std::size_t e, int d, std::vector<PruneUnit>& out) {
  if (b >= e) return;
  if (v.word(b, "VALUES")) {
    auto rows = split_at(v, b + 1, e, d, [&](std::size_t i) -> std::size_t { return v.punct(i, ",") ? 1 : 0; });
    list_units(v, rows, "values_row", out);
    return;
  }
  if (!v.word(b, "SELECT")) return;
  auto clauses = find_clauses(v, b + 1, e, d, {"FROM", "WHERE", "GROUP", "HAVING", "WINDOW", "ORDER", "LIMIT"});
  std::size_t list_b = b + 1;
  while (list_b < e && (v.word(list_b, "DISTINCT") || v.word(list_b, "ALL"))) ++list_b;
  const std::size_t list_e = clauses.empty() ? e : clauses.front().kw;
  auto items = split_at(v, list_b, list_e, d, [&](std::size_t i) -> std::size_t { return v.punct(i, ",") ? 1 : 0; });
  list_units(v, items, "select_item", out);
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    const std::size_t ce = c + 1 < clauses.size() ? clauses[c + 1].kw : e;
    const auto& cl = clauses[c];
    if (cl.name == "FROM") {
      from_units(v, cl.body, ce, d, out);
      continue;  // dropping FROM wholesale rarely leaves anything readable
    }
    if (cl.name == "WHERE") conjunct_units(v, cl.body, ce, d, out);
    if (cl.name == "HAVING") conjunct_units(v, cl.body, ce, d, out);
    clause_unit(v, cl.kw, ce, "clause", out);
  }
}

void select_units(const View& v, std::size_t b, std::size_t e, int d, std::vector<PruneUnit>& out) {
  if (v.word(b, "WITH")) {
    // Skip the CTE list; its bodies are reached through the parenthesis scan.
    std::size_t i = b + 1;
    while (i < e && !(v.depth[i] == d && (v.word(i, "SELECT") || v.word(i, "VALUES")))) ++i;
    b = i;
  }
  std::vector<Range> ops;
  auto arms = split_at(
      v, b, e, d,
      [&](std::size_t i) -> std::size_t {
        if (v.word(i, "UNION")) return v.word(i + 1, "ALL") || v.word(i + 1, "DISTINCT") ? 2 : 1;
        if (v.word(i, "INTERSECT") || v.word(i, "EXCEPT")) return v.word(i + 1, "ALL") ? 2 : 1;
        return 0;
      },
      &ops);
  if (arms.size() >= 2) {
    // A trailing ORDER BY / LIMIT belongs to the whole compound, not the last arm.
    for (std::size_t k = 1; k < arms.size(); ++k) {
      if (arms[k].first >= arms[k].second) continue;
      out.push_back({"compound_arm", {{v.end_of(arms[k - 1].second - 1), v.end_of(arms[k].second - 1)}}});
    }
  }
  for (const auto& a : arms) select_core_units(v, a.first, a.second, d, out);
}

void tail_clause_units(const View& v, std::size_t b, std::size_t e, const std::vector<std::string>& names,
                       std::vector<PruneUnit>& out) {
  auto clauses = find_clauses(v, b, e, 0, names);
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    const std::size_t ce = c + 1 < clauses.size() ? clauses[c + 1].kw : e;
    if (clauses[c].name == "WHERE") conjunct_units(v, clauses[c].body, ce, 0, out);
    clause_unit(v, clauses[c].kw, ce, "clause", out);
  }
}

void statement_units(const View& v, std::size_t e, std::vector<PruneUnit>& out) {
  if (e == 0) return;
  const std::size_t b = 0;
  if (v.word(b, "SELECT") || v.word(b, "WITH") || v.word(b, "VALUES")) {
    select_units(v, b, e, 0, out);
    return;
  }
  if (v.word(b, "CREATE")) {
    std::size_t i = 1;
    while (i < e && v.toks[i].kind == TokenKind::Word && !v.word(i, "TABLE") && !v.word(i, "VIEW") &&
           !v.word(i, "TRIGGER"))
      ++i;
    if (v.word(i, "TRIGGER")) return;
    for (std::size_t j = i; j < e; ++j) {
      if (v.depth[j] != 0) continue;
      if (v.word(j, "AS") && (v.word(j + 1, "SELECT") || v.word(j + 1, "WITH") || v.word(j + 1, "VALUES"))) {
        select_units(v, j + 1, e, 0, out);
        return;
      }
      if (v.word(i, "TABLE") && v.punct(j, "(")) {
        const std::size_t close = matching_paren(v, j);
        auto defs = split_at(v, j + 1, std::min(close, e), 1,
                             [&](std::size_t k) -> std::size_t { return v.punct(k, ",") ? 1 : 0; });
        list_units(v, defs, "column_def", out);
        return;
      }
    }
    return;
  }
  if (v.word(b, "INSERT") || v.word(b, "REPLACE")) {
    auto tails = find_clauses(v, b, e, 0, {"ON", "RETURNING"});
    const std::size_t body_e = tails.empty() ? e : tails.front().kw;
    for (std::size_t j = 1; j < body_e; ++j) {
      if (v.depth[j] != 0) continue;
      if (v.word(j, "VALUES")) {
        select_core_units(v, j, body_e, 0, out);
        break;
      }
      if (v.word(j, "SELECT") || v.word(j, "WITH")) {
        select_units(v, j, body_e, 0, out);
        break;
      }
    }
    for (std::size_t c = 0; c < tails.size(); ++c)
      clause_unit(v, tails[c].kw, c + 1 < tails.size() ? tails[c + 1].kw : e, "clause", out);
    return;
  }
  if (v.word(b, "UPDATE")) {
    auto clauses = find_clauses(v, b, e, 0, {"SET", "FROM", "WHERE", "RETURNING", "ORDER", "LIMIT"});
    for (std::size_t c = 0; c < clauses.size(); ++c) {
      const std::size_t ce = c + 1 < clauses.size() ? clauses[c + 1].kw : e;
      if (clauses[c].name == "SET") {
        auto assigns = split_at(v, clauses[c].body, ce, 0,
                                [&](std::size_t k) -> std::size_t { return v.punct(k, ",") ? 1 : 0; });
        list_units(v, assigns, "assignment", out);
        continue;
      }
      if (clauses[c].name == "WHERE") conjunct_units(v, clauses[c].body, ce, 0, out);
      clause_unit(v, clauses[c].kw, ce, "clause", out);
    }
    return;
  }
  if (v.word(b, "DELETE")) {
    tail_clause_units(v, b, e, {"WHERE", "RETURNING", "ORDER", "LIMIT"}, out);
    return;
  }
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<PruneUnit> prune_units(std::string_view statement) {
  std::vector<PruneUnit> out;
  if (!is_balanced(statement)) return out;
  const View v = make_view(statement);
  std::size_t e = v.toks.size();
  while (e > 0 && v.punct(e - 1, ";")) --e;
  // Any other top-level `;` means several statements; not ours to cut.
  for (std::size_t i = 0; i < e; ++i)
    if (v.punct(i, ";") && v.depth[i] == 0 && !v.word(0, "CREATE")) return out;
  statement_units(v, e, out);
  for (std::size_t i = 0; i < e; ++i) {
    if (!v.punct(i, "(")) continue;
    if (!(v.word(i + 1, "SELECT") || v.word(i + 1, "WITH") || v.word(i + 1, "VALUES"))) continue;
    const std::size_t close = matching_paren(v, i);
    select_units(v, i + 1, std::min(close, e), v.depth[i] + 1, out);
  }
  return out;
}

std::string remove_unit(std::string_view statement, const PruneUnit& unit) {
  std::string s(statement);
  auto spans = unit.spans;
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [b, e] : spans) {
    if (b >= e || e > s.size()) continue;
    s.erase(b, e - b);
    // Tidy the seam only; literals elsewhere are left byte-exact.
    std::size_t a = b;
    while (a > 0 && a < s.size() && is_space(s[a - 1]) && is_space(s[a])) s.erase(a, 1);
    if (a > 0 && a < s.size() && is_space(s[a - 1]) && (s[a] == ')' || s[a] == ';' || s[a] == ',')) {
      s.erase(a - 1, 1);
      --a;
    }
    if (a > 0 && a < s.size() && s[a - 1] == '(' && is_space(s[a])) s.erase(a, 1);
    if (a == 0) {
      while (!s.empty() && is_space(s[0])) s.erase(0, 1);
    }
  }
  return s;
}

std::string simplify_statement(const std::string& statement, const std::function<bool(const std::string&)>& oracle,
                               std::vector<SimplifyStep>* log) {
  std::string current = statement;
  std::set<std::string> tried;
  for (bool progress = true; progress;) {
    progress = false;
    for (const auto& unit : prune_units(current)) {
      std::string cand = remove_unit(current, unit);
      if (cand == current || trim(cand).empty() || !is_balanced(cand)) continue;
      if (!tried.insert(cand).second) continue;
      const bool ok = oracle(cand);
      if (log) log->push_back({unit.kind, cand, ok});
      if (ok) {
        current = std::move(cand);
        progress = true;
        break;
      }
    }
  }
  return current;
}

}  // namespace sqlfuzz
