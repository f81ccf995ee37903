#include "sqlfuzz/schema.hpp"

#include <algorithm>
#include <cstdio>

#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

std::string_view to_string(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::Table: return "table";
    case ObjectKind::View: return "view";
    case ObjectKind::Procedure: return "procedure";
  }
  return "?";
}

const SchemaObject* SchemaContext::find(std::string_view name) const {
  for (const auto& o : objects)
    if (iequals(o.name, name)) return &o;
  return nullptr;
}

SchemaObject* SchemaContext::find(std::string_view name) {
  for (auto& o : objects)
    if (iequals(o.name, name)) return &o;
  return nullptr;
}

std::vector<const SchemaObject*> SchemaContext::tables() const {
  std::vector<const SchemaObject*> out;
  for (const auto& o : objects)
    if (o.kind == ObjectKind::Table) out.push_back(&o);
  return out;
}

void SchemaConfig::validate() const {
  if (min_tables < 1 || max_tables < min_tables) throw Error(Errc::Config, "table count range must satisfy 1 <= min <= max");
  if (min_columns < 1 || max_columns < min_columns)
    throw Error(Errc::Config, "column count range must satisfy 1 <= min <= max");
  if (min_rows < 1 || max_rows < min_rows) throw Error(Errc::Config, "row count range must satisfy 1 <= min <= max");
}

namespace {

// Row-distinct literal for UNIQUE / PRIMARY KEY columns; empty when the type
// family has no cheap distinct spelling.
std::string distinct_literal(const TypeSpec& t, int row) {
  char buf[64];
  if (t.kind == "int") return std::to_string(row + 1);
  if (t.kind == "real") return std::to_string(row) + ".5";
  if (t.kind == "numeric") return std::to_string(row) + ".25";
  if (t.kind == "text" || t.kind == "binary") return "'u" + std::to_string(row) + "'";
  if (t.kind == "blob") {
    std::snprintf(buf, sizeof buf, "X'%02x'", row & 0xff);
    return buf;
  }
  if (t.kind == "datetime") {
    std::snprintf(buf, sizeof buf, "'2024-01-01 %02d:%02d:%02d'", (row / 3600) % 24, (row / 60) % 60, row % 60);
    return buf;
  }
  return {};
}

bool can_be_unique(const TypeSpec& t) { return t.indexable && !distinct_literal(t, 0).empty(); }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform_index(rng, v.size())];
}

}  // namespace

GeneratedSchema generate_schema(const Dialect& dialect, const SchemaConfig& config, Rng& rng) {
  config.validate();
  std::vector<const TypeSpec*> pool;
  if (config.type_pool.empty()) {
    for (const auto& t : dialect.types) pool.push_back(&t);
  } else {
    for (const auto& name : config.type_pool) {
      const auto* t = dialect.type(name);
      if (!t) throw Error(Errc::Config, "type " + name + " is not in the " + dialect.id + " pool");
      pool.push_back(t);
    }
  }

  GeneratedSchema out;
  auto emit = [&](std::string stmt) {
    out.statements.push_back(stmt);
    out.context.init_statements.push_back(std::move(stmt));
  };

  const int n_tables = uniform_int(rng, config.min_tables, config.max_tables);
  std::vector<std::size_t> table_slots;
  for (int ti = 0; ti < n_tables; ++ti) {
    SchemaObject table;
    table.name = "t" + std::to_string(ti);
    const int n_cols = uniform_int(rng, config.min_columns, config.max_columns);
    std::vector<const TypeSpec*> types;
    bool have_pk = false;
    for (int ci = 0; ci < n_cols; ++ci) {
      const TypeSpec* t = pick(rng, pool);
      ColumnDef col;
      col.name = "c" + std::to_string(ci);
      col.data_type = pick(rng, t->forms);
      if (!have_pk && can_be_unique(*t) && uniform01(rng) < config.primary_key_probability) {
        col.primary_key = true;
        have_pk = true;
      } else {
        col.not_null = uniform01(rng) < config.not_null_probability;
        col.unique = can_be_unique(*t) && uniform01(rng) < config.unique_probability;
        if (t->indexable && !col.unique && uniform01(rng) < config.default_probability)
          col.default_value = pick(rng, t->literals);
      }
      types.push_back(t);
      table.columns.push_back(std::move(col));
    }

    std::string create = "CREATE TABLE " + table.name + " (";
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
      const auto& c = table.columns[i];
      if (i) create += ", ";
      create += c.name + " " + c.data_type;
      if (c.primary_key) create += " PRIMARY KEY";
      if (c.not_null) create += " NOT NULL";
      if (c.unique) create += " UNIQUE";
      if (c.default_value) create += " DEFAULT " + *c.default_value;
    }
    create += ");";
    table.create_text = create;
    emit(create);

    const int n_rows = uniform_int(rng, config.min_rows, config.max_rows);
    for (int r = 0; r < n_rows; ++r) {
      std::vector<std::string> values;
      for (std::size_t i = 0; i < table.columns.size(); ++i) {
        const auto& c = table.columns[i];
        const auto& t = *types[i];
        if (c.primary_key || c.unique)
          values.push_back(distinct_literal(t, r));
        else if (!c.not_null && uniform01(rng) < config.null_probability)
          values.push_back(dialect.null_literal);
        else
          values.push_back(pick(rng, t.literals));
      }
      emit("INSERT INTO " + table.name + " VALUES (" + join(values, ", ") + ");");
    }
    table_slots.push_back(out.context.objects.size());
    out.context.objects.push_back(std::move(table));
  }

  int view_no = 0;
  for (std::size_t slot : table_slots) {
    if (uniform01(rng) >= config.view_probability) continue;
    const auto& base = out.context.objects[slot];
    SchemaObject view;
    view.kind = ObjectKind::View;
    view.name = "v" + std::to_string(view_no++);
    std::vector<std::string> names;
    for (const auto& c : base.columns) {
      if (names.empty() || uniform01(rng) < 0.5) {
        ColumnDef vc;
        vc.name = c.name;
        vc.data_type = c.data_type;
        view.columns.push_back(vc);
        names.push_back(c.name);
      }
    }
    view.create_text = "CREATE VIEW " + view.name + " AS SELECT " + join(names, ", ") + " FROM " + base.name + ";";
    emit(view.create_text);
    out.context.objects.push_back(std::move(view));
  }
  return out;
}

std::string render_context(const SchemaContext& context) { return join(context.init_statements, "\n"); }

// ---------------------------------------------------------------------------
// Shallow DDL recognizer

namespace {

struct Cursor {
  std::vector<Token> toks;
  std::size_t i = 0;

  bool done() const { return i >= toks.size() || toks[i].text == ";"; }
  const Token* peek(std::size_t ahead = 0) const {
    return i + ahead < toks.size() ? &toks[i + ahead] : nullptr;
  }
  bool word(std::string_view kw, std::size_t ahead = 0) const {
    const auto* t = peek(ahead);
    return t && t->is_word(kw);
  }
  bool accept(std::string_view kw) {
    if (!word(kw)) return false;
    ++i;
    return true;
  }
  bool punct(std::string_view p) const {
    const auto* t = peek();
    return t && t->text == p;
  }
};

std::string unquote(const Token& t) {
  if (t.kind == TokenKind::QuotedIdent && t.text.size() >= 2) return t.text.substr(1, t.text.size() - 2);
  return t.text;
}

// Reads `name` or `schema.name`; returns empty on anything else.
std::string read_name(Cursor& c) {
  const auto* t = c.peek();
  if (!t || (t->kind != TokenKind::Word && t->kind != TokenKind::QuotedIdent)) return {};
  std::string name = unquote(*t);
  ++c.i;
  while (c.punct(".")) {
    const auto* n = c.peek(1);
    if (!n || (n->kind != TokenKind::Word && n->kind != TokenKind::QuotedIdent)) break;
    name = unquote(*n);
    c.i += 2;
  }
  return name;
}

bool skip_if_not_exists(Cursor& c) {
  if (c.word("IF") && c.word("NOT", 1) && c.word("EXISTS", 2)) {
    c.i += 3;
    return true;
  }
  return false;
}

bool skip_if_exists(Cursor& c) {
  if (c.word("IF") && c.word("EXISTS", 1)) {
    c.i += 2;
    return true;
  }
  return false;
}

// Top-level comma-separated items of the parenthesised group at the cursor.
std::vector<std::vector<Token>> paren_items(Cursor& c) {
  std::vector<std::vector<Token>> items;
  if (!c.punct("(")) return items;
  ++c.i;
  int depth = 1;
  items.emplace_back();
  while (c.i < c.toks.size()) {
    const auto& t = c.toks[c.i++];
    if (t.text == "(") ++depth;
    if (t.text == ")" && --depth == 0) return items;
    if (t.text == "," && depth == 1) {
      items.emplace_back();
      continue;
    }
    items.back().push_back(t);
  }
  return {};  // unbalanced
}

bool is_constraint_word(const Token& t) {
  static const char* kWords[] = {"CONSTRAINT", "PRIMARY", "NOT",     "NULL",  "UNIQUE",  "CHECK",
                                 "DEFAULT",    "COLLATE", "REFERENCES", "GENERATED", "AS", "AUTO_INCREMENT",
                                 "AUTOINCREMENT", "COMMENT", "ON", "KEY", "INVISIBLE", "VISIBLE"};
  for (const char* w : kWords)
    if (t.is_word(w)) return true;
  return false;
}

bool is_table_constraint(const Token& t) {
  static const char* kWords[] = {"CONSTRAINT", "PRIMARY", "UNIQUE", "CHECK", "FOREIGN",
                                 "KEY",        "INDEX",   "FULLTEXT", "SPATIAL"};
  for (const char* w : kWords)
    if (t.is_word(w)) return true;
  return false;
}

std::string glue_tokens(const std::vector<Token>& ts, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    const bool tight = ts[i].kind == TokenKind::Punct || (i > from && ts[i - 1].kind == TokenKind::Punct);
    if (!out.empty() && !tight) out += ' ';
    out += ts[i].text;
  }
  return out;
}

std::optional<ColumnDef> parse_column(const std::vector<Token>& item) {
  if (item.empty() || (item[0].kind != TokenKind::Word && item[0].kind != TokenKind::QuotedIdent)) return std::nullopt;
  ColumnDef col;
  col.name = unquote(item[0]);
  std::size_t i = 1;
  int depth = 0;
  while (i < item.size() && (depth > 0 || !is_constraint_word(item[i]))) {
    if (item[i].text == "(") ++depth;
    if (item[i].text == ")") --depth;
    ++i;
  }
  col.data_type = glue_tokens(item, 1, i);
  for (; i < item.size(); ++i) {
    if (item[i].is_word("PRIMARY")) col.primary_key = true;
    else if (item[i].is_word("UNIQUE")) col.unique = true;
    else if (item[i].is_word("NOT") && i + 1 < item.size() && item[i + 1].is_word("NULL")) col.not_null = true;
    else if (item[i].is_word("DEFAULT") && i + 1 < item.size()) col.default_value = item[i + 1].text;
  }
  return col;
}

void apply_table_constraint(SchemaObject& table, const std::vector<Token>& item) {
  const bool pk = !item.empty() && std::any_of(item.begin(), item.end(), [](const Token& t) { return t.is_word("PRIMARY"); });
  const bool uq = !item.empty() && std::any_of(item.begin(), item.end(), [](const Token& t) { return t.is_word("UNIQUE"); });
  if (!pk && !uq) return;
  bool inside = false;
  for (const auto& t : item) {
    if (t.text == "(") inside = true;
    else if (t.text == ")") inside = false;
    else if (inside && (t.kind == TokenKind::Word || t.kind == TokenKind::QuotedIdent)) {
      for (auto& c : table.columns)
        if (iequals(c.name, unquote(t))) (pk ? c.primary_key : c.unique) = true;
    }
  }
}

// `SELECT a, b AS x FROM ...`: simple select lists only.
std::vector<ColumnDef> select_columns(Cursor c, const SchemaContext& ctx) {
  std::vector<ColumnDef> out;
  if (!c.accept("SELECT")) return out;
  c.accept("DISTINCT");
  c.accept("ALL");
  std::vector<std::vector<Token>> items(1);
  int depth = 0;
  while (!c.done()) {
    const auto& t = c.toks[c.i];
    if (depth == 0 && t.is_word("FROM")) break;
    ++c.i;
    if (t.text == "(") ++depth;
    if (t.text == ")") --depth;
    if (depth == 0 && t.text == ",") {
      items.emplace_back();
      continue;
    }
    items.back().push_back(t);
  }
  std::string source;
  if (c.accept("FROM")) source = read_name(c);
  const auto* base = ctx.find(source);
  for (const auto& item : items) {
    if (item.empty()) return {};
    const Token& last = item.back();
    if (last.kind != TokenKind::Word && last.kind != TokenKind::QuotedIdent) return {};
    ColumnDef col;
    col.name = unquote(last);
    if (item.size() == 1 && base)
      for (const auto& bc : base->columns)
        if (iequals(bc.name, col.name)) col.data_type = bc.data_type;
    out.push_back(std::move(col));
  }
  return out;
}

bool add_object(SchemaContext& ctx, SchemaObject obj) {
  if (obj.name.empty() || ctx.find(obj.name)) return false;
  ctx.objects.push_back(std::move(obj));
  return true;
}

bool register_create(SchemaContext& ctx, Cursor& c, const std::string& text) {
  // Skip modifiers (TEMP, OR REPLACE, ALGORITHM=..., DEFINER=...) up to the object keyword.
  ObjectKind kind;
  for (int guard = 0;; ++guard) {
    if (c.done() || guard > 16) return false;
    if (c.accept("TABLE")) { kind = ObjectKind::Table; break; }
    if (c.accept("VIEW")) { kind = ObjectKind::View; break; }
    if (c.accept("PROCEDURE")) { kind = ObjectKind::Procedure; break; }
    const auto& t = *c.peek();
    for (const char* stop : {"INDEX", "TRIGGER", "DATABASE", "SCHEMA", "FUNCTION", "EVENT", "USER", "ROLE"})
      if (t.is_word(stop)) return false;
    ++c.i;
  }
  skip_if_not_exists(c);
  SchemaObject obj;
  obj.kind = kind;
  obj.name = read_name(c);
  obj.create_text = trim(text);
  if (obj.name.empty()) return false;

  if (kind == ObjectKind::Table) {
    if (c.accept("USING")) {  // virtual table: module arguments name the columns
      read_name(c);
      for (const auto& item : paren_items(c))
        if (!item.empty() && item[0].kind == TokenKind::Word && item[0].text.find('=') == std::string::npos &&
            (item.size() == 1 || item[1].text != "="))
          obj.columns.push_back({unquote(item[0]), "", false, false, false, std::nullopt});
    } else if (c.punct("(")) {
      const auto items = paren_items(c);
      if (items.empty()) return false;
      for (const auto& item : items) {
        if (item.empty()) return false;
        if (is_table_constraint(item[0])) continue;
        auto col = parse_column(item);
        if (!col) return false;
        obj.columns.push_back(std::move(*col));
      }
      for (const auto& item : items)
        if (!item.empty() && is_table_constraint(item[0])) apply_table_constraint(obj, item);
    } else if (c.accept("AS")) {
      obj.columns = select_columns(c, ctx);
    } else {
      return false;
    }
  } else if (kind == ObjectKind::View) {
    std::vector<std::string> names;
    if (c.punct("(")) {
      for (const auto& item : paren_items(c))
        if (item.size() == 1) names.push_back(unquote(item[0]));
    }
    if (!c.accept("AS")) return false;
    obj.columns = select_columns(c, ctx);
    if (!names.empty()) {
      obj.columns.clear();
      for (auto& n : names) obj.columns.push_back({n, "", false, false, false, std::nullopt});
    }
  }
  return add_object(ctx, std::move(obj));
}

bool register_drop(SchemaContext& ctx, Cursor& c) {
  ObjectKind kind;
  if (c.accept("TABLE")) kind = ObjectKind::Table;
  else if (c.accept("VIEW")) kind = ObjectKind::View;
  else if (c.accept("PROCEDURE")) kind = ObjectKind::Procedure;
  else return false;
  skip_if_exists(c);
  bool changed = false;
  while (!c.done()) {  // DROP TABLE a, b
    const auto name = read_name(c);
    if (name.empty()) break;
    auto it = std::find_if(ctx.objects.begin(), ctx.objects.end(),
                           [&](const SchemaObject& o) { return o.kind == kind && iequals(o.name, name); });
    if (it != ctx.objects.end()) {
      ctx.objects.erase(it);
      changed = true;
    }
    if (!c.punct(",")) break;
    ++c.i;
  }
  return changed;
}

bool register_alter(SchemaContext& ctx, Cursor& c) {
  if (!c.accept("TABLE")) return false;
  auto* table = ctx.find(read_name(c));
  if (!table || table->kind != ObjectKind::Table) return false;
  SchemaObject updated = *table;
  bool changed = false;
  while (!c.done()) {
    if (c.accept("RENAME")) {
      if (c.accept("TO") || c.accept("AS")) {
        const auto name = read_name(c);
        if (name.empty() || (ctx.find(name) && !iequals(name, updated.name))) return false;
        updated.name = name;
        changed = true;
      } else {
        c.accept("COLUMN");
        const auto from = read_name(c);
        if (!c.accept("TO")) return false;
        const auto to = read_name(c);
        auto col = std::find_if(updated.columns.begin(), updated.columns.end(),
                                [&](const ColumnDef& d) { return iequals(d.name, from); });
        if (col == updated.columns.end() || to.empty()) return false;
        col->name = to;
        changed = true;
      }
    } else if (c.accept("ADD")) {
      c.accept("COLUMN");
      std::vector<Token> item;
      int depth = 0;
      while (!c.done() && !(depth == 0 && c.punct(","))) {
        const auto& t = c.toks[c.i++];
        if (t.text == "(") ++depth;
        if (t.text == ")") --depth;
        item.push_back(t);
      }
      if (item.empty() || is_table_constraint(item[0])) {
        // constraints do not change the column set
      } else if (auto col = parse_column(item)) {
        updated.columns.push_back(std::move(*col));
        changed = true;
      } else {
        return false;
      }
    } else if (c.accept("DROP")) {
      c.accept("COLUMN");
      const auto name = read_name(c);
      auto col = std::find_if(updated.columns.begin(), updated.columns.end(),
                              [&](const ColumnDef& d) { return iequals(d.name, name); });
      if (col == updated.columns.end()) return false;
      updated.columns.erase(col);
      changed = true;
    } else {
      // other specifications: skip to the next top-level comma
      int depth = 0;
      while (!c.done() && !(depth == 0 && c.punct(","))) {
        const auto& t = c.toks[c.i++];
        if (t.text == "(") ++depth;
        if (t.text == ")") --depth;
      }
    }
    if (!c.punct(",")) break;
    ++c.i;
  }
  if (changed) *table = std::move(updated);
  return changed;
}

}  // namespace

bool register_statement(SchemaContext& context, std::string_view statement) {
  const auto lexed = lex_sql(statement);
  if (!lexed.complete) return false;
  Cursor c;
  for (auto& t : lexed.tokens)
    if (t.significant()) c.toks.push_back(t);
  if (c.accept("CREATE")) return register_create(context, c, std::string(statement));
  if (c.accept("DROP")) return register_drop(context, c);
  if (c.accept("ALTER")) return register_alter(context, c);
  return false;
}

}  // namespace sqlfuzz
