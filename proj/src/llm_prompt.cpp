#include <algorithm>
#include <cctype>
#include <filesystem>

#include "sqlfuzz/llm.hpp"
#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

void ModelParams::validate() const {
  if (temperature < 0.0 || temperature > 2.0) throw Error(Errc::Config, "temperature must lie in [0,2]");
  if (max_context_tokens <= 0) throw Error(Errc::Config, "max_context_tokens must be positive");
  if (request_timeout.count() <= 0) throw Error(Errc::Config, "request_timeout must be positive");
}

std::string_view to_string(PromptKind kind) {
  return kind == PromptKind::Instantiation ? "instantiation" : "repair";
}

PromptTemplates PromptTemplates::load(const std::string& data_dir) {
  const auto dir = std::filesystem::path(data_dir) / "prompts";
  return {read_file((dir / "instantiation.txt").string()), read_file((dir / "repair.txt").string())};
}

const PromptTemplates& PromptTemplates::shared() {
  static const PromptTemplates t = load();
  return t;
}

namespace {

struct Piece {
  bool slot;
  std::string text;  // literal text or slot name
};

// `{name}` with an identifier name is a slot; every other brace is literal.
std::vector<Piece> pieces_of(std::string_view skeleton) {
  std::vector<Piece> out;
  std::string lit;
  std::size_t i = 0;
  while (i < skeleton.size()) {
    if (skeleton[i] == '{') {
      std::size_t j = i + 1;
      while (j < skeleton.size() && (std::isalnum(static_cast<unsigned char>(skeleton[j])) || skeleton[j] == '_')) ++j;
      if (j < skeleton.size() && skeleton[j] == '}' && j > i + 1) {
        out.push_back({false, lit});
        lit.clear();
        out.push_back({true, std::string(skeleton.substr(i + 1, j - i - 1))});
        i = j + 1;
        continue;
      }
    }
    lit += skeleton[i++];
  }
  out.push_back({false, lit});
  return out;
}

}  // namespace

std::string interpolate(std::string_view skeleton, const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& p : pieces_of(skeleton)) {
    if (!p.slot) {
      out += p.text;
      continue;
    }
    auto it = values.find(p.text);
    out += it == values.end() ? "{" + p.text + "}" : it->second;
  }
  return out;
}

std::optional<std::map<std::string, std::string>> extract_slots(std::string_view skeleton, std::string_view text) {
  const auto ps = pieces_of(skeleton);
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].slot) {
      if (text.substr(pos, ps[i].text.size()) != ps[i].text) return std::nullopt;
      pos += ps[i].text.size();
      continue;
    }
    // slot: up to the next literal (always present, possibly empty at the end)
    const auto& next = ps[i + 1].text;
    std::size_t end;
    if (i + 2 == ps.size()) {
      if (text.size() < next.size() || text.substr(text.size() - next.size()) != next) return std::nullopt;
      end = text.size() - next.size();
      if (end < pos) return std::nullopt;
    } else {
      end = next.empty() ? pos : text.find(next, pos);
      if (end == std::string_view::npos) return std::nullopt;
    }
    out[ps[i].text] = std::string(text.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

Prompt build_instantiation_prompt(const SchemaContext& context, const std::vector<std::string>& templates,
                                  const Dialect& dialect, std::size_t max_chars, const PromptTemplates& skeletons) {
  if (templates.empty()) throw Error(Errc::EmptyTemplates, "instantiation needs at least one template");
  std::vector<std::string> init = context.init_statements;
  Prompt p;
  p.kind = PromptKind::Instantiation;
  p.target_dialect = dialect.id;
  const auto templ_block = join(templates, "\n");
  for (;;) {
    p.text = interpolate(skeletons.instantiation, {{"init_schema_statements", join(init, "\n")},
                                                   {"sql_templates", templ_block},
                                                   {"targetDB", dialect.display_name}});
    if (max_chars == 0 || p.text.size() <= max_chars) break;
    auto oldest = std::find_if(init.begin(), init.end(), [](const std::string& s) { return starts_with_icase(trim(s), "INSERT"); });
    if (oldest == init.end()) break;
    init.erase(oldest);
    ++p.dropped_inserts;
  }
  return p;
}

Prompt build_instantiation_prompt(const SchemaContext& context, const std::vector<SqlTemplate>& templates,
                                  const Dialect& dialect, std::size_t max_chars, const PromptTemplates& skeletons) {
  std::vector<std::string> texts;
  for (const auto& t : templates) texts.push_back(t.text);
  return build_instantiation_prompt(context, texts, dialect, max_chars, skeletons);
}

namespace {

std::string one_line(std::string_view s) {
  std::string out;
  for (char c : s) out += (c == '\n' || c == '\r') ? ' ' : c;
  return trim(out);
}

}  // namespace

std::string render_marked_case(const TestCase& testcase, const std::vector<ErrorRecord>& errors) {
  const auto stmts = testcase.texts();
  std::map<std::size_t, std::vector<const ErrorRecord*>> by_index;
  for (const auto& e : errors) {
    if (e.statement_index >= stmts.size())
      throw Error(Errc::IndexOutOfRange, "error index " + std::to_string(e.statement_index) + " outside a " +
                                             std::to_string(stmts.size()) + "-statement case");
    by_index[e.statement_index].push_back(&e);
  }
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < stmts.size(); ++i) {
    auto it = by_index.find(i);
    if (it == by_index.end()) {
      lines.push_back(stmts[i]);
      continue;
    }
    lines.push_back("-- [Need to repair<");
    lines.push_back(ensure_terminated(stmts[i]));
    for (const auto* e : it->second) lines.push_back("-- " + one_line(e->message));
    for (const auto* e : it->second)
      if (e->suggestion && !e->suggestion->empty()) lines.push_back("-- (" + one_line(*e->suggestion) + ")");
    lines.push_back("-- >Need to repair]");
  }
  return join(lines, "\n");
}

Prompt build_repair_prompt(const TestCase& testcase, const std::vector<ErrorRecord>& errors, const Dialect& dialect,
                           const PromptTemplates& skeletons) {
  if (errors.empty()) throw Error(Errc::Config, "repair prompt needs at least one error record");
  Prompt p;
  p.kind = PromptKind::Repair;
  p.target_dialect = dialect.id;
  p.text = interpolate(skeletons.repair,
                       {{"casecontent", render_marked_case(testcase, errors)}, {"targetDB", dialect.display_name}});
  return p;
}

}  // namespace sqlfuzz
