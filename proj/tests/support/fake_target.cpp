// Stand-in for a database CLI, driven over a pty by the executor tests.
// Statements end at a line whose trimmed text ends in ';'. Magic words:
//   CRASH_NOW  sanitizer-style report on stderr, then SIGSEGV
//   ABORT_NOW  SIGABRT          EXIT_NOW  exit(3)
//   HANG_NOW   never answers    FAIL_NOW  one error line
//   ARM        sets a flag that survives resets; FIRE crashes only when armed
// Every byte read is appended to $FAKE_TARGET_LOG when set.

#include <signal.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>

namespace {

bool client_server = false;
bool armed = false;

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void say(const std::string& line) {
  std::fputs((line + "\n").c_str(), stdout);
  std::fflush(stdout);
}

void error_line(const std::string& msg) {
  std::string line = client_server ? "ERROR 1064 (42000) at line 1: " + msg : "Parse error near line 1: " + msg;
  std::fputs((line + "\n").c_str(), stderr);
  std::fflush(stderr);
}

[[noreturn]] void crash() {
  std::fprintf(stderr, "==%d==ERROR: AddressSanitizer: SEGV on unknown address %p\n", static_cast<int>(getpid()),
               static_cast<void*>(&armed));
  std::fprintf(stderr, "    #0 %p in fake_crash_site fake_target.cpp:%d\n", static_cast<void*>(&armed), 42);
  std::fprintf(stderr, "SUMMARY: AddressSanitizer: SEGV fake_target.cpp:42 in fake_crash_site\n");
  std::fflush(stderr);
  ::signal(SIGSEGV, SIG_DFL);
  ::raise(SIGSEGV);
  std::abort();
}

void statement(const std::string& text) {
  const std::string u = upper(text);
  if (u.find("CRASH_NOW") != std::string::npos) crash();
  if (u.find("ABORT_NOW") != std::string::npos) std::abort();
  if (u.find("EXIT_NOW") != std::string::npos) std::exit(3);
  if (u.find("HANG_NOW") != std::string::npos)
    for (;;) ::pause();
  if (u.find("FIRE") != std::string::npos && armed) crash();
  if (u.find("ARM") != std::string::npos) armed = true;
  if (u.find("FAIL_NOW") != std::string::npos) return error_line("simulated failure");
  if (client_server && u.rfind("SELECT '", 0) == 0) {
    auto e = text.find('\'', 8);
    std::string v = text.substr(8, e - 8);
    say(v);
    say(v);
  }
}

void dot(const std::string& line) {
  if (line.rfind(".print ", 0) == 0) return say(line.substr(7));
  if (line.rfind(".open ", 0) == 0) {
    std::ofstream(trim(line.substr(6)), std::ios::app);
    return;
  }
  error_line("unknown command");
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--client-server") == 0) client_server = true;
  const char* log_path = std::getenv("FAKE_TARGET_LOG");
  std::ofstream log;
  if (log_path) log.open(log_path, std::ios::app | std::ios::binary);

  std::string line, buffer;
  char c;
  while (::read(0, &c, 1) == 1) {
    if (log.is_open()) log.put(c).flush();
    if (c != '\n') {
      line += c;
      continue;
    }
    const std::string t = trim(line);
    line.clear();
    if (buffer.empty() && !client_server && !t.empty() && t[0] == '.') {
      dot(t);
      continue;
    }
    if (!buffer.empty()) buffer += '\n';
    buffer += t;
    if (!t.empty() && t.back() == ';') {
      statement(trim(buffer));
      buffer.clear();
    }
  }
  return 0;
}
