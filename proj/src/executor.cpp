#include "sqlfuzz/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <pty.h>
#include <signal.h>
#include <sys/ipc.h>
#include <sys/shm.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <regex>

#include "sqlfuzz/common.hpp"
#include "sqlfuzz/sql_lexer.hpp"

namespace sqlfuzz {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string_view to_string(DriverKind kind) {
  return kind == DriverKind::ClientServer ? "client_server" : "embedded";
}

std::string_view to_string(StatementStatus s) {
  switch (s) {
    case StatementStatus::Ok: return "ok";
    case StatementStatus::Error: return "error";
    case StatementStatus::Crash: return "crash";
    case StatementStatus::Hang: return "hang";
  }
  return "?";
}

bool ExecutionOutcome::clean() const {
  if (crash) return false;
  return std::all_of(per_statement.begin(), per_statement.end(),
                     [](const StatementResult& r) { return r.status == StatementStatus::Ok; });
}

namespace {

std::string mask_numbers(std::string_view line) {
  static const std::regex hex_re("0[xX][0-9a-fA-F]+");
  static const std::regex num_re("[0-9]+");
  std::string s = std::regex_replace(std::string(line), hex_re, "0x?");
  return std::regex_replace(s, num_re, "N");
}

std::string mask_message(std::string_view msg) {
  static const std::regex quoted_re(R"('[^']*'|"[^"]*"|`[^`]*`)");
  return mask_numbers(std::regex_replace(std::string(msg), quoted_re, "?"));
}

}  // namespace

std::string dedup_key(const std::vector<std::string>& tail, std::string_view event) {
  std::string material(event);
  for (const auto& line : tail) {
    material += '\n';
    material += mask_numbers(line);
  }
  return hex64(fnv1a64(material));
}

void TargetConfig::validate() const {
  if (binary.empty()) throw Error(Errc::Config, "target binary is empty");
  if (statement_timeout.count() <= 0) throw Error(Errc::Config, "statement timeout must be positive");
}

// ---------------------------------------------------------------------------
// Output classification

std::string strip_prompts(std::string_view line) {
  static const std::regex prompt_re(R"(^(?:(?:sqlite|mysql|MariaDB \[[^\]]*\])> |[ \t]+\.\.\.> |[ \t]+-> ))");
  std::string out(line);
  std::smatch m;
  while (std::regex_search(out, m, prompt_re)) out.erase(0, static_cast<std::size_t>(m.length(0)));
  return out;
}

ParsedOutput parse_cli_output(std::string_view output) {
  static const std::regex sqlite_re(R"(^(?:Parse error|Runtime error|Error)(?: near line [0-9]+)?: (.*)$)");
  static const std::regex mysql_re(R"(^ERROR ([0-9]+)(?: \(([0-9A-Z]+)\))?(?: at line [0-9]+)?: (.*)$)");
  ParsedOutput out;
  for (auto& raw : split(output, '\n')) {
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    line = strip_prompts(line);
    std::smatch m;
    if (std::regex_match(line, m, mysql_re)) {
      out.error = true;
      out.code = std::stoi(m[1].str());
      out.message = m[3].str();
      return out;
    }
    if (std::regex_match(line, m, sqlite_re)) {
      out.error = true;
      out.message = m[1].str();
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statement admission

namespace {

bool is_trigger(const std::vector<std::string>& words) {
  std::size_t i = 0;
  if (i < words.size() && words[i] == "CREATE") ++i; else return false;
  if (i < words.size() && (words[i] == "TEMP" || words[i] == "TEMPORARY")) ++i;
  return i < words.size() && words[i] == "TRIGGER";
}

// Text the session would not treat as one finished statement, or that would
// drive the CLI itself rather than the database.
std::optional<std::string> refuse(std::string_view stmt, DriverKind kind) {
  const std::string t = trim(stmt);
  if (t.empty()) return "empty statement";
  if (t.front() == '.') return "dot-commands are not allowed";
  if (kind == DriverKind::ClientServer) {
    if (t.front() == '\\') return "client commands are not allowed";
    static const std::vector<std::string> kClient = {"EXIT", "QUIT", "SOURCE", "SYSTEM", "DELIMITER",
                                                     "CONNECT", "PAGER", "TEE", "EDIT", "PROMPT"};
    auto w = leading_words(t, 1);
    if (!w.empty() && std::find(kClient.begin(), kClient.end(), w[0]) != kClient.end())
      return "client commands are not allowed";
  }
  auto lexed = lex_sql(t);
  if (!lexed.complete) return "incomplete input";
  std::vector<std::string> sig;
  for (const auto& tok : lexed.tokens)
    if (tok.significant()) sig.push_back(to_upper(tok.text));
  if (sig.empty() || sig.back() != ";") return "incomplete input";
  if (kind == DriverKind::Embedded && is_trigger(leading_words(t, 3))) {
    if (sig.size() < 2 || sig[sig.size() - 2] != "END") return "incomplete input";
  }
  return std::nullopt;
}

std::string lookup_path(const std::string& binary) {
  if (binary.find('/') != std::string::npos) return ::access(binary.c_str(), X_OK) == 0 ? binary : "";
  const char* path = std::getenv("PATH");
  if (!path) return "";
  for (const auto& dir : split(path, ':')) {
    if (dir.empty()) continue;
    std::string cand = dir + "/" + binary;
    if (::access(cand.c_str(), X_OK) == 0) return cand;
  }
  return "";
}

constexpr std::size_t kPendingCap = 4u << 20;
constexpr std::size_t kRawLogCap = 1u << 20;
constexpr std::chrono::milliseconds kGrace{1000};

}  // namespace

// ---------------------------------------------------------------------------
// ProcessDriver

ProcessDriver::ProcessDriver(TargetConfig config) : config_(std::move(config)) {
  config_.validate();
  ::signal(SIGPIPE, SIG_IGN);
}

ProcessDriver::~ProcessDriver() { kill_target(); }

void ProcessDriver::set_extra_env(std::string name, std::string value) {
  extra_env_.emplace_back(std::move(name), std::move(value));
}

void ProcessDriver::spawn() {
  const std::string exe = lookup_path(config_.binary);
  if (exe.empty()) throw Error(Errc::TargetUnavailable, "target binary not found: " + config_.binary);
  if (!config_.work_dir.empty()) fs::create_directories(config_.work_dir);

  std::vector<std::string> argv_s{exe};
  argv_s.insert(argv_s.end(), config_.args.begin(), config_.args.end());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);

  // Environment is assembled before fork: the child may only call
  // async-signal-safe functions since other threads can hold allocator locks.
  std::vector<std::pair<std::string, std::string>> overrides = config_.env;
  overrides.insert(overrides.end(), extra_env_.begin(), extra_env_.end());
  std::vector<std::string> env_s;
  for (char** e = environ; *e; ++e) {
    std::string_view kv(*e);
    auto eq = kv.find('=');
    std::string_view key = kv.substr(0, eq);
    if (std::none_of(overrides.begin(), overrides.end(), [&](const auto& o) { return o.first == key; }))
      env_s.emplace_back(kv);
  }
  for (const auto& [k, v] : overrides) env_s.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& e : env_s) envp.push_back(e.data());
  envp.push_back(nullptr);

  struct termios tio{};
  ::cfmakeraw(&tio);
  int master = -1;
  pid_t pid = ::forkpty(&master, nullptr, &tio, nullptr);
  if (pid < 0) throw Error(Errc::TargetUnavailable, std::string("forkpty failed: ") + std::strerror(errno));
  if (pid == 0) {
    if (!config_.work_dir.empty() && ::chdir(config_.work_dir.c_str()) != 0) ::_exit(126);
    ::execve(exe.c_str(), argv.data(), envp.data());
    ::_exit(127);
  }
  ::fcntl(master, F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  master_ = master;
  exited_ = false;
  ++generation_;
  sentinel_no_ = 0;
  pending_.clear();
  tail_.clear();
  partial_line_.clear();
  sent_.clear();
}

void ProcessDriver::kill_target() {
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    int st = 0;
    ::waitpid(pid_, &st, 0);
  }
  if (master_ >= 0) ::close(master_);
  pid_ = -1;
  master_ = -1;
}

void ProcessDriver::reap(bool block) {
  if (pid_ <= 0) return;
  int st = 0;
  pid_t r = ::waitpid(pid_, &st, block ? 0 : WNOHANG);
  if (r == pid_) {
    exited_ = true;
    exit_by_signal_ = WIFSIGNALED(st);
    exit_status_ = exit_by_signal_ ? WTERMSIG(st) : WEXITSTATUS(st);
    if (master_ >= 0) ::close(master_);
    master_ = -1;
    pid_ = -1;
  }
}

void ProcessDriver::ensure_started() {
  if (pid_ <= 0) spawn();
}

void ProcessDriver::restart() {
  kill_target();
  spawn();
}

void ProcessDriver::write_all(std::string_view bytes) {
  raw_log_.append(bytes);
  if (raw_log_.size() > kRawLogCap) raw_log_.erase(0, raw_log_.size() - kRawLogCap / 2);
  std::size_t off = 0;
  while (off < bytes.size()) {
    ssize_t n = ::write(master_, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return;  // target gone; the read side reports it
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string ProcessDriver::next_sentinel() {
  return "__SQLFUZZ_" + std::to_string(generation_) + "_" + std::to_string(++sentinel_no_) + "__";
}

std::string ProcessDriver::sentinel_command(const std::string& sentinel) const {
  if (config_.kind == DriverKind::Embedded) return ".print " + sentinel;
  return "SELECT '" + sentinel + "';";
}

void ProcessDriver::note_output(std::string_view chunk) {
  for (char c : chunk) {
    if (c == '\r') continue;
    if (c == '\n') {
      // Where an interactive prompt lands depends on timing; keeping it would
      // make tails, and so dedup keys, differ between identical runs.
      std::string line = strip_prompts(partial_line_);
      partial_line_.clear();
      if (line.empty() && !tail_.empty() && tail_.back().empty()) continue;
      tail_.push_back(std::move(line));
      if (tail_.size() > kDiagnosticTailLines) tail_.pop_front();
    } else {
      partial_line_ += c;
    }
  }
}

std::vector<std::string> ProcessDriver::diagnostic_tail() const {
  std::vector<std::string> out(tail_.begin(), tail_.end());
  if (std::string last = strip_prompts(partial_line_); !last.empty()) out.push_back(std::move(last));
  if (out.size() > kDiagnosticTailLines) out.erase(out.begin(), out.end() - kDiagnosticTailLines);
  return out;
}

ProcessDriver::Segment ProcessDriver::read_until(const std::string& sentinel, std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  char buf[8192];
  for (;;) {
    auto pos = pending_.find(sentinel);
    if (pos != std::string::npos) {
      Segment seg{Segment::End::Sentinel, pending_.substr(0, pos)};
      auto eol = pending_.find('\n', pos);
      pending_.erase(0, eol == std::string::npos ? pending_.size() : eol + 1);
      return seg;
    }
    if (master_ < 0) return {Segment::End::Died, std::exchange(pending_, {})};
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return {Segment::End::Timeout, pending_};
    struct pollfd pfd{master_, POLLIN, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(left));
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::Io, std::string("poll failed: ") + std::strerror(errno));
    }
    if (pr == 0) continue;
    ssize_t n = ::read(master_, buf, sizeof buf);
    if (n > 0) {
      std::string_view chunk(buf, static_cast<std::size_t>(n));
      pending_.append(chunk);
      if (pending_.size() > kPendingCap) pending_.erase(0, pending_.size() - kPendingCap / 2);
      // Keep our own sentinel lines out of the diagnostic tail.
      std::string kept;
      std::size_t start = 0;
      while (start < chunk.size()) {
        auto nl = chunk.find('\n', start);
        auto end = nl == std::string_view::npos ? chunk.size() : nl + 1;
        auto line = chunk.substr(start, end - start);
        if (line.find("__SQLFUZZ_") == std::string_view::npos) kept.append(line);
        start = end;
      }
      note_output(kept);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    // EOF or EIO: the slave side is closed, the target has exited.
    reap(true);
  }
}

DriverReply ProcessDriver::control(std::string_view command) {
  const std::string s = next_sentinel();
  write_all(std::string(command) + "\n" + sentinel_command(s) + "\n");
  auto seg = read_until(s, config_.statement_timeout);
  DriverReply r;
  if (seg.end == Segment::End::Died) {
    r.kind = DriverReply::Kind::Died;
    r.signal_or_exit = exit_status_;
    r.by_signal = exit_by_signal_;
  } else if (seg.end == Segment::End::Timeout) {
    r.kind = DriverReply::Kind::Hang;
  } else {
    auto parsed = parse_cli_output(seg.output);
    if (parsed.error) {
      r.kind = DriverReply::Kind::Error;
      r.code = parsed.code;
      r.message = parsed.message;
    }
  }
  return r;
}

void ProcessDriver::reset_environment() {
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (pid_ <= 0) spawn();
    tail_.clear();
    partial_line_.clear();
    bool ok = true;
    if (config_.kind == DriverKind::Embedded) {
      DriverReply a = control(".open tmp.db");
      ok = a.kind == DriverReply::Kind::Ok;
      if (ok) {
        const fs::path dir = config_.work_dir.empty() ? fs::current_path() : fs::path(config_.work_dir);
        for (const char* suffix : {"", "-journal", "-wal", "-shm"}) {
          std::error_code ec;
          fs::remove(dir / (std::string("test.db") + suffix), ec);
        }
        ok = control(".open test.db").kind == DriverReply::Kind::Ok;
      }
    } else {
      DriverReply a = control(config_.prelude_override ? *config_.prelude_override : std::string(kClientServerPrelude));
      ok = a.kind == DriverReply::Kind::Ok;
    }
    if (ok) return;
    kill_target();
  }
  throw Error(Errc::SessionDead, "target session could not be reset: " + config_.binary);
}

DriverReply ProcessDriver::send(std::string_view statement) {
  ensure_started();
  tail_.clear();
  partial_line_.clear();
  pending_.clear();
  DriverReply r;
  if (auto why = refuse(statement, config_.kind)) {
    r.kind = DriverReply::Kind::Error;
    r.message = *why;
    return r;
  }
  const std::string stmt = trim(statement);
  sent_.push_back(stmt);
  const std::string s = next_sentinel();
  write_all(stmt + "\n" + sentinel_command(s) + "\n");
  auto seg = read_until(s, config_.statement_timeout);
  if (seg.end == Segment::End::Timeout) {
    // The target may be waiting for more input rather than hung.
    const std::string s2 = next_sentinel();
    write_all("\n;\n" + sentinel_command(s2) + "\n");
    auto grace = read_until(s2, kGrace);
    if (grace.end == Segment::End::Sentinel) {
      auto parsed = parse_cli_output(grace.output);
      r.kind = DriverReply::Kind::Error;
      r.code = parsed.code;
      r.message = parsed.error ? parsed.message : "incomplete input";
      return r;
    }
    if (grace.end == Segment::End::Timeout) {
      r.kind = DriverReply::Kind::Hang;
      kill_target();
      return r;
    }
    seg = grace;
  }
  if (seg.end == Segment::End::Died) {
    r.kind = DriverReply::Kind::Died;
    r.signal_or_exit = exit_status_;
    r.by_signal = exit_by_signal_;
    return r;
  }
  auto parsed = parse_cli_output(seg.output);
  if (parsed.error) {
    r.kind = DriverReply::Kind::Error;
    r.code = parsed.code;
    r.message = parsed.message;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Case execution

ExecutionOutcome execute(Driver& driver, const std::vector<std::string>& statements, CoverageOracle* oracle) {
  driver.ensure_started();
  ExecutionOutcome out;
  out.session_generation = driver.generation();
  for (std::size_t i = 0; i < statements.size(); ++i) {
    const Statement st = Statement::from(statements[i]);
    StatementResult r;
    r.kind = st.kind;
    auto head = leading_words(st.text, 1);
    r.head = head.empty() ? "" : head[0];
    const auto t0 = Clock::now();
    DriverReply reply = driver.send(st.text);
    r.elapsed = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0);
    r.code = reply.code;
    r.message = reply.message;
    switch (reply.kind) {
      case DriverReply::Kind::Ok: r.status = StatementStatus::Ok; break;
      case DriverReply::Kind::Error: r.status = StatementStatus::Error; break;
      case DriverReply::Kind::Died:
      case DriverReply::Kind::Hang: {
        const bool hang = reply.kind == DriverReply::Kind::Hang;
        r.status = hang ? StatementStatus::Hang : StatementStatus::Crash;
        CrashEvidence ev;
        ev.trigger_index = i;
        ev.hang = hang;
        ev.by_signal = reply.by_signal;
        ev.signal_or_exit = reply.signal_or_exit;
        ev.diagnostic_tail = driver.diagnostic_tail();
        const std::string event = hang ? std::string("hang")
                                       : (reply.by_signal ? "signal:" : "exit:") + std::to_string(reply.signal_or_exit);
        ev.dedup_key = dedup_key(ev.diagnostic_tail, event);
        out.crash = std::move(ev);
        break;
      }
    }
    out.per_statement.push_back(std::move(r));
    if (out.crash) break;
  }
  if (oracle) out.coverage_new_edges = oracle->update(out);
  return out;
}

ExecutionOutcome execute(Driver& driver, const TestCase& testcase, CoverageOracle* oracle) {
  return execute(driver, testcase.texts(), oracle);
}

bool is_interesting(const ExecutionOutcome& outcome, std::size_t threshold) {
  return outcome.crash.has_value() || outcome.coverage_new_edges > threshold;
}

// ---------------------------------------------------------------------------
// Coverage oracles

std::string BehavioralOracle::key_of(const StatementResult& r) {
  std::string key(to_string(r.kind));
  key += ':';
  key += r.head;
  key += '|';
  switch (r.status) {
    case StatementStatus::Ok: key += "ok"; break;
    case StatementStatus::Error:
      key += r.code ? "E" + std::to_string(*r.code) : "M" + hex64(fnv1a64(mask_message(r.message)));
      break;
    case StatementStatus::Crash: key += "crash"; break;
    case StatementStatus::Hang: key += "hang"; break;
  }
  return key;
}

std::size_t BehavioralOracle::update(const ExecutionOutcome& outcome) {
  std::size_t fresh = 0;
  for (const auto& r : outcome.per_statement)
    if (seen_.insert(key_of(r)).second) ++fresh;
  return fresh;
}

std::uint8_t bucket_class(std::uint8_t hits) {
  if (hits == 0) return 0;
  if (hits == 1) return 1;
  if (hits == 2) return 2;
  if (hits == 3) return 4;
  if (hits <= 7) return 8;
  if (hits <= 15) return 16;
  if (hits <= 31) return 32;
  if (hits <= 127) return 64;
  return 128;
}

std::size_t fold_map(const std::uint8_t* map, std::vector<std::uint8_t>& virgin) {
  std::size_t fresh = 0;
  for (std::size_t i = 0; i < virgin.size(); ++i) {
    if (!map[i]) continue;
    const std::uint8_t c = bucket_class(map[i]);
    if (c & virgin[i]) {
      ++fresh;
      virgin[i] &= static_cast<std::uint8_t>(~c);
    }
  }
  return fresh;
}

SharedMapOracle::SharedMapOracle(std::size_t map_size) : size_(map_size), virgin_(map_size, 0xff) {
  shm_id_ = ::shmget(IPC_PRIVATE, size_, IPC_CREAT | IPC_EXCL | 0600);
  if (shm_id_ < 0) return;
  void* p = ::shmat(shm_id_, nullptr, 0);
  if (p == reinterpret_cast<void*>(-1)) {
    ::shmctl(shm_id_, IPC_RMID, nullptr);
    shm_id_ = -1;
    return;
  }
  map_ = static_cast<std::uint8_t*>(p);
  std::memset(map_, 0, size_);
}

SharedMapOracle::~SharedMapOracle() {
  if (map_) ::shmdt(map_);
  if (shm_id_ >= 0) ::shmctl(shm_id_, IPC_RMID, nullptr);
}

std::size_t SharedMapOracle::update(const ExecutionOutcome& outcome) {
  const bool touched = map_ && std::any_of(map_, map_ + size_, [](std::uint8_t b) { return b != 0; });
  if (!touched) {
    ++fallback_cases_;
    return fallback_.update(outcome);
  }
  const std::size_t fresh = fold_map(map_, virgin_);
  covered_ = static_cast<std::size_t>(
      std::count_if(virgin_.begin(), virgin_.end(), [](std::uint8_t v) { return v != 0xff; }));
  std::memset(map_, 0, size_);
  return fresh;
}

std::size_t SharedMapOracle::covered() const { return covered_ + fallback_.covered(); }

std::unique_ptr<CoverageOracle> make_oracle(CoverageMode mode) {
  if (mode == CoverageMode::SharedMap) return std::make_unique<SharedMapOracle>();
  return std::make_unique<BehavioralOracle>();
}

}  // namespace sqlfuzz
