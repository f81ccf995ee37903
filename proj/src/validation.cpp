#include "sqlfuzz/validation.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

namespace fs = std::filesystem;

std::string_view to_string(CrashClass c) {
  switch (c) {
    case CrashClass::Isolated: return "Isolated";
    case CrashClass::StateDependent: return "StateDependent";
    case CrashClass::NonReproducible: return "NonReproducible";
  }
  return "?";
}

void ExecutionHistory::record(std::uint64_t case_id, std::vector<std::string> sent, std::uint64_t generation) {
  if (generation != generation_) {
    entries_.clear();
    generation_ = generation;
  }
  entries_.push_back({case_id, std::move(sent)});
}

void ExecutionHistory::clear() { entries_.clear(); }

std::vector<std::string> ExecutionHistory::flat() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.insert(out.end(), e.statements.begin(), e.statements.end());
  return out;
}

std::size_t ExecutionHistory::statement_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.statements.size();
  return n;
}

std::vector<ReplayStatement> as_replay(const std::vector<std::string>& statements, std::size_t group) {
  std::vector<ReplayStatement> out;
  out.reserve(statements.size());
  for (const auto& s : statements) out.push_back({s, group});
  return out;
}

std::vector<ReplayStatement> as_replay(const ExecutionHistory& history) {
  std::vector<ReplayStatement> out;
  for (std::size_t g = 0; g < history.entries().size(); ++g)
    for (const auto& s : history.entries()[g].statements) out.push_back({s, g});
  return out;
}

std::optional<CrashEvidence> replay(Driver& driver, const std::vector<ReplayStatement>& sequence) {
  driver.restart();
  std::size_t i = 0;
  while (i < sequence.size()) {
    const std::size_t group = sequence[i].group;
    std::vector<std::string> batch;
    const std::size_t first = i;
    while (i < sequence.size() && sequence[i].group == group) batch.push_back(sequence[i++].text);
    try {
      driver.reset_environment();
    } catch (const Error& e) {
      if (e.code() == Errc::SessionDead) return std::nullopt;
      throw;
    }
    ExecutionOutcome out = execute(driver, batch);
    if (out.crash) {
      CrashEvidence ev = *out.crash;
      ev.trigger_index += first;
      return ev;
    }
  }
  return std::nullopt;
}

namespace {

bool same_crash(const std::optional<CrashEvidence>& ev, const std::string& key) {
  return ev && (key.empty() || ev->dedup_key == key);
}

}  // namespace

ValidationResult validate_crash(const std::vector<std::string>& case_statements, const ExecutionHistory& history,
                                Driver& driver, const std::string& dedup_key) {
  ValidationResult res;
  if (auto ev = replay(driver, as_replay(case_statements)); same_crash(ev, dedup_key)) {
    res.crash_class = CrashClass::Isolated;
    res.evidence = ev;
    return res;
  }
  auto full = as_replay(history);
  // The history normally ends with the crashing execution; add it if not.
  const auto& entries = history.entries();
  if (entries.empty() || entries.back().statements != case_statements) {
    auto tail = as_replay(case_statements, entries.size());
    full.insert(full.end(), tail.begin(), tail.end());
  }
  if (auto ev = replay(driver, full); same_crash(ev, dedup_key)) {
    res.crash_class = CrashClass::StateDependent;
    res.evidence = ev;
    return res;
  }
  res.crash_class = CrashClass::NonReproducible;
  return res;
}

ValidationResult validate_crash(const TestCase& testcase, const ExecutionHistory& history, Driver& driver,
                                const std::string& dedup_key) {
  return validate_crash(testcase.texts(), history, driver, dedup_key);
}

// ---------------------------------------------------------------------------

namespace {

std::string sequence_key(const std::vector<ReplayStatement>& seq) {
  std::string k;
  for (const auto& s : seq) {
    k += std::to_string(s.group);
    k += '\x1f';
    k += s.text;
    k += '\x1e';
  }
  return k;
}

std::string render(const std::vector<ReplayStatement>& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0 && seq[i].group != seq[i - 1].group) out += "-- environment reset\n";
    out += seq[i].text;
    out += '\n';
  }
  return out;
}

/// Replay oracle with memoization; a hit must reproduce the original dedup key.
class ReplayOracle {
 public:
  ReplayOracle(Driver& driver, std::string key) : driver_(driver), key_(std::move(key)) {}

  bool operator()(const std::vector<ReplayStatement>& seq) {
    const std::string k = sequence_key(seq);
    if (auto it = cache_.find(k); it != cache_.end()) return it->second;
    const bool r = fresh(seq);
    cache_.emplace(k, r);
    return r;
  }

  /// Bypasses the cache; used where repeatability itself is in question.
  bool fresh(const std::vector<ReplayStatement>& seq) {
    ++calls_;
    if (seq.empty()) return false;
    return same_crash(replay(driver_, seq), key_);
  }

  std::size_t calls() const { return calls_; }

 private:
  Driver& driver_;
  std::string key_;
  std::map<std::string, bool> cache_;
  std::size_t calls_ = 0;
};

}  // namespace

PocReport reduce(const std::vector<ReplayStatement>& input, Driver& driver, const CrashEvidence& evidence,
                 CrashClass crash_class, std::uint64_t original_case_id) {
  PocReport rep;
  rep.statements = input;
  rep.crash_class = crash_class;
  rep.evidence = evidence;
  rep.original_case_id = original_case_id;
  rep.original_statements = input.size();
  ReplayOracle oracle(driver, evidence.dedup_key);
  auto note = [&](std::string phase, bool accepted, std::string detail) {
    rep.reduction_log.push_back({std::move(phase), accepted, std::move(detail)});
  };

  for (int i = 0; i < kConfirmationReplays; ++i) {
    const bool ok = oracle.fresh(input);
    note("confirm", ok, "replay " + std::to_string(i + 1) + " of " + std::to_string(kConfirmationReplays));
    if (!ok) {
      rep.flaky = true;
      rep.oracle_calls = oracle.calls();
      return rep;
    }
  }

  std::vector<ReplayStatement> current = input;
  const std::function<bool(const std::vector<ReplayStatement>&)> seq_oracle =
      [&](const std::vector<ReplayStatement>& s) { return oracle(s); };
  for (int round = 1;; ++round) {
    bool changed = false;
    std::vector<ReplayStatement> smaller;
    try {
      smaller = ddmin(current, seq_oracle);
    } catch (const Error& e) {
      if (e.code() != Errc::OracleFlaky) throw;
      rep.flaky = true;
      note("ddmin", false, "round " + std::to_string(round) + ": oracle no longer holds on the current sequence");
      break;
    }
    note("ddmin", smaller.size() < current.size(),
         "round " + std::to_string(round) + ": " + std::to_string(current.size()) + " -> " +
             std::to_string(smaller.size()) + " statements");
    if (smaller.size() < current.size()) changed = true;
    current = std::move(smaller);

    for (std::size_t i = current.size(); i-- > 0;) {
      std::vector<SimplifyStep> steps;
      const std::string before = current[i].text;
      std::string after = simplify_statement(
          before,
          [&](const std::string& cand) {
            auto trial = current;
            trial[i].text = cand;
            return oracle(trial);
          },
          &steps);
      for (const auto& s : steps)
        if (s.accepted) note("simplify", true, "statement " + std::to_string(i) + " " + s.kind + ": " + s.candidate);
      if (after != before) {
        current[i].text = std::move(after);
        changed = true;
      }
    }
    if (!changed) break;
  }

  // Emit-time checks: the result must still reproduce, and no single
  // statement may be removable. Nondeterminism can break either.
  for (bool swept = false; !swept && !rep.flaky;) {
    swept = true;
    for (std::size_t i = 0; i < current.size() && current.size() > 1; ++i) {
      auto trial = current;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
      if (oracle(trial)) {
        note("sweep", true, "statement " + std::to_string(i) + " removable: " + current[i].text);
        current = std::move(trial);
        swept = false;
        break;
      }
    }
  }
  rep.statements = current;
  rep.reproduced = oracle.fresh(current);
  note("sweep", rep.reproduced, rep.reproduced ? "final sequence reproduces" : "final sequence did not reproduce");
  rep.oracle_calls = oracle.calls();
  return rep;
}

void write_poc(const std::string& dir, const PocReport& report) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir + ": " + ec.message());

  write_file((fs::path(dir) / "poc.sql").string(), render(report.statements));

  nlohmann::json meta;
  meta["crash_class"] = std::string(to_string(report.crash_class));
  meta["dedup_key"] = report.evidence.dedup_key;
  meta["hang"] = report.evidence.hang;
  meta["by_signal"] = report.evidence.by_signal;
  meta["signal_or_exit"] = report.evidence.signal_or_exit;
  meta["trigger_index"] = report.evidence.trigger_index;
  meta["diagnostic_tail"] = report.evidence.diagnostic_tail;
  meta["original_case_id"] = report.original_case_id;
  meta["original_statements"] = report.original_statements;
  meta["reduced_statements"] = report.statements.size();
  meta["flaky"] = report.flaky;
  meta["reproduced"] = report.reproduced;
  meta["oracle_calls"] = report.oracle_calls;
  write_file((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");

  std::string log;
  for (const auto& e : report.reduction_log) {
    log += e.phase;
    log += e.accepted ? " + " : " - ";
    log += e.detail;
    log += '\n';
  }
  write_file((fs::path(dir) / "reduction.log").string(), log);
}

}  // namespace sqlfuzz
