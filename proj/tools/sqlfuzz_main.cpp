// sqlfuzz command-line front end: fuzz, replay, reduce, expand.
#include <unistd.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "sqlfuzz/campaign.hpp"
#include "sqlfuzz/common.hpp"
#include "sqlfuzz/grammar.hpp"
#include "sqlfuzz/validation.hpp"

using namespace sqlfuzz;
namespace fs = std::filesystem;

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::TargetUnavailable:
    case Errc::SessionDead: return 3;
    default: return 2;
  }
}

std::string scratch_dir() {
  std::string tmpl = (fs::temp_directory_path() / "sqlfuzz_XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) throw Error(Errc::Io, "cannot create a scratch directory");
  return tmpl;
}

CampaignConfig target_from(const std::string& path) {
  CampaignConfig c = parse_target_config(read_file(path), fs::absolute(path).parent_path().string());
  if (c.target.work_dir.empty()) c.target.work_dir = scratch_dir();
  return c;
}

int cmd_fuzz(const std::string& config_path, const std::string& budget, std::optional<std::uint64_t> seed,
             const std::string& mock, const std::string& out, std::optional<std::size_t> max_cases) {
  CampaignConfig cfg = load_campaign_config(config_path);
  if (!budget.empty()) cfg.budget = parse_duration(budget);
  if (seed) cfg.seed = *seed;
  if (!mock.empty()) {
    cfg.backend = ModelBackend::Mock;
    cfg.mock_script = mock;
  }
  if (!out.empty()) cfg.out_dir = out;
  if (max_cases) cfg.max_cases = *max_cases;
  const CampaignStats stats = run_campaign(cfg);
  std::cout << stats.summary();
  std::cout << "output: " << cfg.out_dir << "\n";
  return 0;
}

int cmd_replay(const std::string& poc_dir, const std::string& target_path) {
  const std::string tpath = target_path.empty() ? (fs::path(poc_dir) / "target.ini").string() : target_path;
  CampaignConfig cfg = target_from(tpath);
  cfg.validate();
  auto driver = make_driver(cfg);
  const auto seq = read_replay_file((fs::path(poc_dir) / "poc.sql").string());
  std::string expected;
  if (fs::exists(fs::path(poc_dir) / "meta.json"))
    expected = nlohmann::json::parse(read_file((fs::path(poc_dir) / "meta.json").string())).value("dedup_key", "");
  const auto crash = replay(*driver, seq);
  if (!crash) {
    std::cout << "no crash (" << seq.size() << " statements replayed)\n";
    return 1;
  }
  std::cout << "crash at statement " << crash->trigger_index << ": "
            << (crash->hang ? "hang" : (crash->by_signal ? "signal " : "exit ") + std::to_string(crash->signal_or_exit))
            << "\n";
  std::cout << "dedup key " << crash->dedup_key << "\n";
  for (const auto& l : crash->diagnostic_tail) std::cout << "  | " << l << "\n";
  if (!expected.empty() && expected != crash->dedup_key) {
    std::cout << "dedup key differs from the recorded " << expected << "\n";
    return 1;
  }
  return 0;
}

int cmd_reduce(const std::string& case_path, const std::string& target_path, const std::string& out) {
  CampaignConfig cfg = target_from(target_path);
  cfg.validate();
  auto driver = make_driver(cfg);
  const auto seq = read_replay_file(case_path);
  const auto crash = replay(*driver, seq);
  if (!crash) {
    std::cerr << "sqlfuzz: the case does not crash the target\n";
    return 1;
  }
  const CrashClass cls =
      !seq.empty() && seq.front().group != seq.back().group ? CrashClass::StateDependent : CrashClass::Isolated;
  const PocReport rep = reduce(seq, *driver, *crash, cls, 0);
  const std::string dir = out.empty() ? case_path + ".poc" : out;
  write_poc(dir, rep);
  write_file((fs::path(dir) / "target.ini").string(), render_target_ini(cfg));
  std::cout << rep.original_statements << " -> " << rep.statements.size() << " statements"
            << (rep.flaky ? " (flaky, not reduced)" : "") << (rep.reproduced ? "" : " (final replay did not reproduce)")
            << "\n";
  std::cout << "written to " << dir << "\n";
  return rep.reproduced ? 0 : 1;
}

int cmd_expand(const std::string& grammar_path, const std::string& start, std::size_t n, const std::string& leaves,
               int max_depth, std::uint64_t seed, bool trace) {
  std::vector<std::string> leaf_set;
  if (!leaves.empty()) {
    for (const auto& l : split(leaves, ','))
      if (!trim(l).empty()) leaf_set.push_back(trim(l));
  } else {
    const fs::path lf = fs::path(grammar_path).replace_extension(".leaves");
    if (fs::exists(lf)) leaf_set = load_leaf_file(lf.string());
  }
  const Grammar g = parse_grammar(read_file(grammar_path), leaf_set);
  ExpansionConfig cfg;
  if (max_depth > 0) cfg.max_depth = max_depth;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const SqlTemplate t = expand(g, start, cfg, rng);
    std::cout << t.text << "\n";
    if (trace) {
      std::cout << "  depth " << t.depth << ", trace:";
      for (const auto& s : t.derivation_trace)
        std::cout << ' ' << s.rule << (s.choice == TraceStep::kEnter ? "" : "/" + std::to_string(s.choice));
      std::cout << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grammar- and model-driven SQL fuzzer"};
  app.require_subcommand(1);

  auto* fuzz = app.add_subcommand("fuzz", "Run a fuzzing campaign");
  std::string config_path, budget, mock, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_cases;
  fuzz->add_option("--config", config_path, "Campaign INI file")->required()->check(CLI::ExistingFile);
  fuzz->add_option("--budget", budget, "Wall-clock budget, e.g. 90s, 10m, 2h");
  fuzz->add_option("--seed", seed, "RNG seed");
  fuzz->add_option("--mock", mock, "Mock model script (JSON); implies the mock backend")->check(CLI::ExistingFile);
  fuzz->add_option("--out", out, "Output directory");
  fuzz->add_option("--max-cases", max_cases, "Stop after this many cases");

  auto* rep = app.add_subcommand("replay", "Replay a PoC directory against its target");
  std::string poc_dir, replay_target;
  rep->add_option("--poc", poc_dir, "PoC directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--target", replay_target, "Target INI (default: <poc>/target.ini)");

  auto* red = app.add_subcommand("reduce", "Reduce a crashing SQL file");
  std::string case_path, reduce_target, reduce_out;
  red->add_option("--case", case_path, "SQL file; '-- environment reset' lines separate cases")
      ->required()
      ->check(CLI::ExistingFile);
  red->add_option("--target", reduce_target, "Target INI")->required()->check(CLI::ExistingFile);
  red->add_option("--out", reduce_out, "PoC directory (default: <case>.poc)");

  auto* exp = app.add_subcommand("expand", "Print grammar templates");
  std::string grammar_path, start, leaves;
  std::size_t count = 10;
  int max_depth = 0;
  std::uint64_t exp_seed = 1;
  bool trace = false;
  exp->add_option("--grammar", grammar_path, "Grammar file (.g4)")->required()->check(CLI::ExistingFile);
  exp->add_option("--start", start, "Start rule")->required();
  exp->add_option("-n", count, "Number of templates");
  exp->add_option("--leaves", leaves, "Comma-separated leaf set (default: <grammar>.leaves)");
  exp->add_option("--max-depth", max_depth, "Depth bound");
  exp->add_option("--seed", exp_seed, "RNG seed");
  exp->add_flag("--trace", trace, "Print derivation traces");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*fuzz) return cmd_fuzz(config_path, budget, seed, mock, out, max_cases);
    if (*rep) return cmd_replay(poc_dir, replay_target);
    if (*red) return cmd_reduce(case_path, reduce_target, reduce_out);
    if (*exp) return cmd_expand(grammar_path, start, count, leaves, max_depth, exp_seed, trace);
  } catch (const Error& e) {
    std::cerr << "sqlfuzz: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "sqlfuzz: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
