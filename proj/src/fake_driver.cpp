#include "sqlfuzz/fake_driver.hpp"

#include <nlohmann/json.hpp>

#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

FakeDriver::FakeDriver(std::vector<FakeRule> rules, DriverKind kind) : rules_(std::move(rules)), kind_(kind) {}

void FakeDriver::ensure_started() {
  if (alive_) return;
  alive_ = true;
  ++generation_;
  flags_.clear();
  sent_.clear();
  tail_.clear();
}

void FakeDriver::restart() {
  alive_ = false;
  ++restarts_;
  ensure_started();
}

void FakeDriver::reset_environment() {
  if (!alive_) restart();
  ++resets_;
}

DriverReply FakeDriver::send(std::string_view statement) {
  ensure_started();
  tail_.clear();
  sent_.emplace_back(trim(statement));
  const std::string upper = to_upper(statement);
  DriverReply r;
  for (auto& rule : rules_) {
    if (rule.times == 0) continue;
    if (upper.find(to_upper(rule.match)) == std::string::npos) continue;
    if (!rule.requires_flag.empty() && !flags_.count(rule.requires_flag)) continue;
    if (rule.times > 0) --rule.times;
    switch (rule.action) {
      case FakeRule::Action::Arm:
        flags_.insert(rule.flag);
        return r;
      case FakeRule::Action::Error:
        r.kind = DriverReply::Kind::Error;
        r.code = rule.code;
        r.message = rule.message;
        return r;
      case FakeRule::Action::Crash:
        r.kind = DriverReply::Kind::Died;
        r.by_signal = true;
        r.signal_or_exit = rule.signal;
        tail_ = rule.tail;
        alive_ = false;
        return r;
      case FakeRule::Action::Hang:
        r.kind = DriverReply::Kind::Hang;
        alive_ = false;
        return r;
    }
  }
  return r;
}

}  // namespace sqlfuzz

namespace sqlfuzz {

std::vector<FakeRule> parse_fake_rules(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, std::string("fake rules: ") + e.what());
  }
  if (!j.is_array()) throw Error(Errc::Config, "fake rules: expected a JSON array");
  std::vector<FakeRule> out;
  try {
    for (const auto& e : j) {
      FakeRule r;
      r.match = e.at("match").get<std::string>();
      const std::string action = to_lower(e.value("action", std::string("error")));
      if (action == "error") {
        r.action = FakeRule::Action::Error;
      } else if (action == "crash") {
        r.action = FakeRule::Action::Crash;
      } else if (action == "hang") {
        r.action = FakeRule::Action::Hang;
      } else if (action == "arm") {
        r.action = FakeRule::Action::Arm;
      } else {
        throw Error(Errc::Config, "fake rules: unknown action '" + action + "'");
      }
      r.message = e.value("message", r.message);
      if (e.contains("code")) r.code = e.at("code").get<int>();
      r.signal = e.value("signal", r.signal);
      r.flag = e.value("flag", std::string());
      r.requires_flag = e.value("requires_flag", std::string());
      r.times = e.value("times", -1);
      if (e.contains("tail")) r.tail = e.at("tail").get<std::vector<std::string>>();
      if (r.action == FakeRule::Action::Arm && r.flag.empty()) throw Error(Errc::Config, "fake rules: arm without flag");
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, std::string("fake rules: ") + e.what());
  }
  return out;
}

}  // namespace sqlfuzz
