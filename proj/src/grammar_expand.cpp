#include <algorithm>
#include <climits>
#include <functional>
#include <numeric>

#include "sqlfuzz/grammar.hpp"

namespace sqlfuzz {

int ExpansionConfig::quota_for(const std::string& name) const {
  auto it = rule_quota.find(name);
  return it == rule_quota.end() ? default_quota : it->second;
}

void ExpansionConfig::validate() const {
  if (max_depth < 1) throw Error(Errc::Config, "max_depth must be >= 1");
  if (default_quota < 1) throw Error(Errc::Config, "default quota must be >= 1");
  for (const auto& [name, q] : rule_quota)
    if (q < 1) throw Error(Errc::Config, "quota for " + name + " must be >= 1");
  if (optional_probability < 0.0 || optional_probability > 1.0)
    throw Error(Errc::Config, "optional_probability must lie in [0,1]");
  if (repeat_continue_probability < 0.0 || repeat_continue_probability >= 1.0)
    throw Error(Errc::Config, "repeat_continue_probability must lie in [0,1)");
}

std::map<std::string, int> SqlTemplate::nonterminal_uses() const {
  std::map<std::string, int> uses;
  for (const auto& step : derivation_trace)
    if (step.choice == TraceStep::kEnter) ++uses[step.rule];
  return uses;
}

std::vector<std::string> SqlTemplate::placeholders() const {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string::npos) {
    const auto end = text.find(']', pos);
    if (end == std::string::npos) break;
    out.push_back(text.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return out;
}

std::string render_pieces(const std::vector<std::string>& pieces) {
  auto glue_before = [](const std::string& p) { return p == "," || p == ")" || p == ";" || p == "."; };
  auto glue_after = [](const std::string& p) { return p == "(" || p == "," || p == "."; };
  std::string out;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].empty()) continue;
    if (!out.empty() && !glue_before(pieces[i]) && !(i > 0 && glue_after(pieces[i - 1]))) out += ' ';
    out += pieces[i];
  }
  return out;
}

namespace {

struct Partial {
  std::vector<std::string> pieces;
  std::vector<TraceStep> trace;
  std::map<std::string, int> uses;
  int depth = 0;
};

using Continuation = std::function<bool(Partial&)>;

/// Continuation-passing derivation search shared by sampling, replay and
/// exhaustive enumeration. Failing continuations trigger backtracking.
class Deriver {
 public:
  enum class Mode { Sample, Replay, Enumerate };

  Deriver(const Grammar& g, const ExpansionConfig& cfg, Mode mode)
      : g_(g), cfg_(cfg), mode_(mode), md_(min_depths(g)) {}

  Rng* rng = nullptr;
  const std::vector<TraceStep>* expected = nullptr;
  // Sample mode: abandon an attempt after this many steps (0 = no limit).
  std::size_t attempt_limit = 0;
  // Sample mode: prefer the smallest expansion at every decision.
  bool conservative = false;

  struct AttemptAbandoned {};

  void begin_attempt() { attempt_start_ = steps_; }

  bool derive(const std::string& start, Partial& st, const Continuation& done) {
    if (!g_.rules.count(start) || g_.is_leaf(start))
      throw Error(Errc::UnresolvedReference, start);
    if (md_.at(start) == INT_MAX || md_.at(start) > cfg_.max_depth)
      throw Error(Errc::DepthExhausted,
                  "no derivation of '" + start + "' fits within depth " + std::to_string(cfg_.max_depth));
    return nonterminal(start, 0, st, done);
  }

 private:
  void tick() {
    if (++steps_ > cfg_.step_budget) throw Error(Errc::BudgetExceeded, "derivation step budget exhausted");
    if (attempt_limit != 0 && steps_ - attempt_start_ > attempt_limit) throw AttemptAbandoned{};
  }

  int sym_depth(const Symbol& s) const {
    switch (s.kind) {
      case Symbol::Kind::Terminal: return 0;
      case Symbol::Kind::NonTerminal: return g_.is_leaf(s.text) ? 0 : md_.at(s.text);
      case Symbol::Kind::Nested: return node_depth(*s.nested);
    }
    return 0;
  }
  int node_depth(const GrammarRule& r) const {
    switch (r.kind) {
      case RuleKind::Optional: return 0;
      case RuleKind::Repeat: return sym_depth(r.children[0]);
      case RuleKind::Choice: {
        int best = INT_MAX;
        for (const auto& c : r.children) best = std::min(best, sym_depth(c));
        return best;
      }
      case RuleKind::Sequence: {
        int worst = 0;
        for (const auto& c : r.children) worst = std::max(worst, sym_depth(c));
        return worst;
      }
    }
    return 0;
  }
  bool fits(const Symbol& s, int depth) const {
    const int need = sym_depth(s);
    return need != INT_MAX && depth + need <= cfg_.max_depth;
  }

  // Replay: the next expected step must be a decision owned by `owner`.
  std::optional<int> recorded(const Partial& st, const std::string& owner) const {
    const auto pos = st.trace.size();
    if (pos >= expected->size()) return std::nullopt;
    const auto& step = (*expected)[pos];
    if (step.choice == TraceStep::kEnter || step.rule != owner) return std::nullopt;
    return step.choice;
  }

  bool nonterminal(const std::string& name, int depth, Partial& st, const Continuation& k) {
    tick();
    if (st.uses[name] + 1 > cfg_.quota_for(name)) return false;
    if (mode_ == Mode::Replay) {
      const auto pos = st.trace.size();
      if (pos >= expected->size() || !((*expected)[pos] == TraceStep{name, TraceStep::kEnter})) return false;
    }
    const bool leaf = g_.is_leaf(name);
    const int child_depth = depth + 1;
    if (!leaf && (md_.at(name) == INT_MAX || depth + md_.at(name) > cfg_.max_depth)) return false;

    ++st.uses[name];
    st.trace.push_back({name, TraceStep::kEnter});
    bool ok;
    if (leaf) {
      st.pieces.push_back("[" + name + "]");
      ok = k(st);
      if (!ok) st.pieces.pop_back();
    } else {
      const int saved = st.depth;
      st.depth = std::max(st.depth, child_depth);
      ok = node(g_.rules.at(name), child_depth, name, st, k);
      if (!ok) st.depth = saved;
    }
    if (!ok) {
      st.trace.pop_back();
      --st.uses[name];
    }
    return ok;
  }

  bool symbol(const Symbol& s, int depth, const std::string& owner, Partial& st, const Continuation& k) {
    switch (s.kind) {
      case Symbol::Kind::Terminal: {
        st.pieces.push_back(s.text);
        if (k(st)) return true;
        st.pieces.pop_back();
        return false;
      }
      case Symbol::Kind::NonTerminal: return nonterminal(s.text, depth, st, k);
      case Symbol::Kind::Nested: return node(*s.nested, depth, owner, st, k);
    }
    return false;
  }

  bool sequence(const std::vector<Symbol>& items, std::size_t i, int depth, const std::string& owner,
                Partial& st, const Continuation& k) {
    if (i == items.size()) return k(st);
    return symbol(items[i], depth, owner, st,
                  [&, i](Partial& s) { return sequence(items, i + 1, depth, owner, s, k); });
  }

  bool repeat(const GrammarRule& r, int remaining, bool first, int depth, const std::string& owner,
              Partial& st, const Continuation& k) {
    if (remaining == 0) return k(st);
    const bool sep = !first && r.separator.has_value();
    if (sep) st.pieces.push_back(*r.separator);
    const bool ok = symbol(r.children[0], depth, owner, st, [&, remaining](Partial& s) {
      return repeat(r, remaining - 1, false, depth, owner, s, k);
    });
    if (!ok && sep) st.pieces.pop_back();
    return ok;
  }

  bool decide(int value, const std::string& owner, Partial& st, const std::function<bool()>& body) {
    st.trace.push_back({owner, value});
    if (body()) return true;
    st.trace.pop_back();
    return false;
  }

  bool node(const GrammarRule& r, int depth, const std::string& owner, Partial& st, const Continuation& k) {
    tick();
    switch (r.kind) {
      case RuleKind::Sequence: return sequence(r.children, 0, depth, owner, st, k);

      case RuleKind::Optional: {
        std::vector<int> order;
        if (mode_ == Mode::Replay) {
          auto v = recorded(st, owner);
          if (!v || (*v != 0 && *v != 1)) return false;
          order = {*v};
        } else if (mode_ == Mode::Enumerate) {
          order = {0, 1};
        } else if (conservative) {
          order = {0, 1};
        } else {
          order = uniform01(*rng) < cfg_.optional_probability ? std::vector<int>{1, 0} : std::vector<int>{0, 1};
        }
        for (int v : order) {
          if (v == 1 && !fits(r.children[0], depth)) continue;
          const bool ok = decide(v, owner, st, [&] {
            return v == 1 ? symbol(r.children[0], depth, owner, st, k) : k(st);
          });
          if (ok) return true;
        }
        return false;
      }

      case RuleKind::Choice: {
        std::vector<int> order(r.children.size());
        std::iota(order.begin(), order.end(), 0);
        if (mode_ == Mode::Replay) {
          auto v = recorded(st, owner);
          if (!v || *v < 0 || *v >= static_cast<int>(r.children.size())) return false;
          order = {*v};
        } else if (mode_ == Mode::Sample) {
          std::vector<int> feasible;
          for (int i : order)
            if (fits(r.children[static_cast<std::size_t>(i)], depth)) feasible.push_back(i);
          std::shuffle(feasible.begin(), feasible.end(), *rng);
          if (conservative)
            std::stable_sort(feasible.begin(), feasible.end(), [&](int a, int b) {
              return sym_depth(r.children[static_cast<std::size_t>(a)]) <
                     sym_depth(r.children[static_cast<std::size_t>(b)]);
            });
          order = std::move(feasible);
        }
        for (int i : order) {
          const auto& child = r.children[static_cast<std::size_t>(i)];
          if (!fits(child, depth)) continue;
          if (decide(i, owner, st, [&] { return symbol(child, depth, owner, st, k); })) return true;
        }
        return false;
      }

      case RuleKind::Repeat: {
        const int cap = cfg_.quota_for(owner);
        std::vector<int> order;
        if (mode_ == Mode::Replay) {
          auto v = recorded(st, owner);
          if (!v || *v < 1 || *v > cap) return false;
          order = {*v};
        } else if (mode_ == Mode::Enumerate || conservative) {
          for (int c = 1; c <= cap; ++c) order.push_back(c);
        } else {
          int count = 1;
          while (count < cap && uniform01(*rng) < cfg_.repeat_continue_probability) ++count;
          for (int c = count; c >= 1; --c) order.push_back(c);
          for (int c = count + 1; c <= cap; ++c) order.push_back(c);
        }
        if (!fits(r.children[0], depth)) return false;
        for (int c : order) {
          if (decide(c, owner, st, [&] { return repeat(r, c, true, depth, owner, st, k); })) return true;
        }
        return false;
      }
    }
    return false;
  }

  const Grammar& g_;
  const ExpansionConfig& cfg_;
  Mode mode_;
  std::map<std::string, int> md_;
  std::size_t steps_ = 0;
  std::size_t attempt_start_ = 0;
};

constexpr int kSampleAttempts = 8;

SqlTemplate finish(const std::string& start, const Partial& st) {
  SqlTemplate t;
  t.start = start;
  t.text = render_pieces(st.pieces);
  t.derivation_trace = st.trace;
  t.depth = st.depth;
  return t;
}

}  // namespace

SqlTemplate expand(const Grammar& grammar, const std::string& start, const ExpansionConfig& config,
                   Rng& rng) {
  config.validate();
  Deriver d(grammar, config, Deriver::Mode::Sample);
  d.rng = &rng;
  // Random attempts get a slice of the budget each; deep backtracking under
  // tight quotas is cheaper to restart than to exhaust. The last attempt
  // takes the smallest expansion everywhere and the remaining budget.
  d.attempt_limit = std::max<std::size_t>(config.step_budget / (2 * kSampleAttempts), 1);
  for (int attempt = 0; attempt <= kSampleAttempts; ++attempt) {
    if (attempt == kSampleAttempts) {
      d.attempt_limit = 0;
      d.conservative = true;
    }
    d.begin_attempt();
    Partial st;
    try {
      if (!d.derive(start, st, [](Partial&) { return true; }))
        throw Error(Errc::DepthExhausted,
                    "no derivation of '" + start + "' satisfies the depth and quota bounds");
      return finish(start, st);
    } catch (const Deriver::AttemptAbandoned&) {
    }
  }
  throw Error(Errc::BudgetExceeded, "derivation step budget exhausted");
}

std::vector<SqlTemplate> expand_batch(const Grammar& grammar, const std::vector<std::string>& starts,
                                      const ExpansionConfig& config, Rng& rng, std::size_t count) {
  if (count == 0) throw Error(Errc::Config, "expand_batch count must be >= 1");
  if (starts.empty()) throw Error(Errc::Config, "expand_batch needs at least one start symbol");
  std::vector<SqlTemplate> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& start = starts[uniform_index(rng, starts.size())];
    out.push_back(expand(grammar, start, config, rng));
  }
  return out;
}

std::vector<SqlTemplate> enumerate_all(const Grammar& grammar, const std::string& start,
                                       const ExpansionConfig& config, std::size_t cap) {
  config.validate();
  Deriver d(grammar, config, Deriver::Mode::Enumerate);
  std::map<std::string, SqlTemplate> found;
  Partial st;
  d.derive(start, st, [&](Partial& s) {
    auto t = finish(start, s);
    found.emplace(t.text, std::move(t));
    if (found.size() > cap) throw Error(Errc::BudgetExceeded, "enumeration exceeded " + std::to_string(cap));
    return false;  // keep exploring
  });
  std::vector<SqlTemplate> out;
  out.reserve(found.size());
  for (auto& [text, t] : found) out.push_back(std::move(t));
  return out;
}

std::string replay_trace(const Grammar& grammar, const std::string& start, const ExpansionConfig& config,
                         const std::vector<TraceStep>& trace) {
  Deriver d(grammar, config, Deriver::Mode::Replay);
  d.expected = &trace;
  Partial st;
  const bool ok = d.derive(start, st, [&](Partial& s) { return s.trace.size() == trace.size(); });
  if (!ok) throw Error(Errc::Syntax, "trace does not describe a derivation of '" + start + "'");
  return render_pieces(st.pieces);
}

}  // namespace sqlfuzz
