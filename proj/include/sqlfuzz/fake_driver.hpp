#pragma once

#include <optional>
#include <string_view>
#include <set>
#include <string>
#include <vector>

#include "sqlfuzz/executor.hpp"

namespace sqlfuzz {

/// One scripted reaction: the first rule whose `match` occurs in a statement
/// (case-insensitive) and whose conditions hold decides the reply.
struct FakeRule {
  enum class Action { Error, Crash, Hang, Arm };
  std::string match;
  Action action = Action::Error;
  std::string message = "simulated failure";
  std::optional<int> code;
  int signal = 11;
  std::string flag;           // Arm: flag to raise; survives resets, cleared by restarts
  std::string requires_flag;  // rule applies only while this flag is up
  int times = -1;             // firings left over the driver's lifetime, -1 = unlimited
  std::vector<std::string> tail{"fake crash report"};
};

/// In-process scripted target for deterministic tests and dry runs.
class FakeDriver : public Driver {
 public:
  explicit FakeDriver(std::vector<FakeRule> rules = {}, DriverKind kind = DriverKind::Embedded);

  DriverKind kind() const override { return kind_; }
  void ensure_started() override;
  void restart() override;
  void reset_environment() override;
  DriverReply send(std::string_view statement) override;
  bool alive() const override { return alive_; }
  std::uint64_t generation() const override { return generation_; }
  std::vector<std::string> diagnostic_tail() const override { return tail_; }
  const std::vector<std::string>& sent_statements() const override { return sent_; }

  std::size_t resets() const { return resets_; }
  std::size_t restarts() const { return restarts_; }
  const std::set<std::string>& flags() const { return flags_; }

 private:
  std::vector<FakeRule> rules_;
  DriverKind kind_;
  bool alive_ = false;
  std::uint64_t generation_ = 0;
  std::set<std::string> flags_;
  std::vector<std::string> tail_;
  std::vector<std::string> sent_;
  std::size_t resets_ = 0;
  std::size_t restarts_ = 0;
};

}  // namespace sqlfuzz

namespace sqlfuzz {

/// Rules from a JSON array of objects with the FakeRule field names; "action"
/// is one of error, crash, hang, arm. Throws Error(Config).
std::vector<FakeRule> parse_fake_rules(std::string_view json_text);

}  // namespace sqlfuzz
