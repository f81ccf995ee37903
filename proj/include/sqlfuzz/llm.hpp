#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlfuzz/dialect.hpp"
#include "sqlfuzz/error_taxonomy.hpp"
#include "sqlfuzz/grammar.hpp"
#include "sqlfuzz/schema.hpp"
#include "sqlfuzz/testcase.hpp"

namespace sqlfuzz {

struct ModelParams {
  double temperature = 0.4;
  int max_context_tokens = 8192;
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model_name = "default";
  std::chrono::milliseconds request_timeout{60000};

  void validate() const;
  /// Prompt character budget: a 4-characters-per-token heuristic.
  std::size_t char_budget() const { return static_cast<std::size_t>(max_context_tokens) * 4; }
};

enum class PromptKind { Instantiation, Repair };

std::string_view to_string(PromptKind kind);

struct Prompt {
  PromptKind kind = PromptKind::Instantiation;
  std::string text;
  std::string target_dialect;
  std::size_t dropped_inserts = 0;  // truncation to fit the character budget
};

/// Prompt skeletons with {init_schema_statements}, {sql_templates},
/// {casecontent} and {targetDB} slots, read from prompts/*.txt.
struct PromptTemplates {
  std::string instantiation;
  std::string repair;

  static PromptTemplates load(const std::string& data_dir = default_data_dir());
  /// Loaded once from the default data directory.
  static const PromptTemplates& shared();
};

/// Fills the slots of `skeleton`; unknown slots are left verbatim.
std::string interpolate(std::string_view skeleton, const std::map<std::string, std::string>& values);

/// Inverse of interpolate for a text produced from `skeleton`; nullopt if the
/// literal parts do not line up.
std::optional<std::map<std::string, std::string>> extract_slots(std::string_view skeleton, std::string_view text);

/// `max_chars` = 0 disables truncation; otherwise the oldest INSERTs of the
/// schema block are dropped until the prompt fits.
Prompt build_instantiation_prompt(const SchemaContext& context, const std::vector<std::string>& templates,
                                  const Dialect& dialect, std::size_t max_chars = 0,
                                  const PromptTemplates& skeletons = PromptTemplates::shared());
Prompt build_instantiation_prompt(const SchemaContext& context, const std::vector<SqlTemplate>& templates,
                                  const Dialect& dialect, std::size_t max_chars = 0,
                                  const PromptTemplates& skeletons = PromptTemplates::shared());

/// The marked test case body used inside the repair prompt.
std::string render_marked_case(const TestCase& testcase, const std::vector<ErrorRecord>& errors);

Prompt build_repair_prompt(const TestCase& testcase, const std::vector<ErrorRecord>& errors, const Dialect& dialect,
                           const PromptTemplates& skeletons = PromptTemplates::shared());

/// Error carrying the HTTP status of a non-success endpoint reply.
class EndpointError : public Error {
 public:
  EndpointError(int status, const std::string& what) : Error(Errc::Endpoint, what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Chat-completion backend. Implementations are safe to call from several threads.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Throws Error(Timeout | Transport) or EndpointError.
  virtual std::string complete(const Prompt& prompt, const ModelParams& params) = 0;
};

/// OpenAI-style `POST <endpoint>` with {model, messages, temperature}. Plain
/// HTTP only. Reads a bearer token from SQLFUZZ_API_KEY when set.
class HttpChatClient : public ModelClient {
 public:
  std::string complete(const Prompt& prompt, const ModelParams& params) override;
};

/// Offline client. Scripted entries are consulted first, in file order; a
/// prompt no entry matches goes to the placeholder filler (unless disabled).
///
/// Script format:
///   {"instantiation": [{"match": "<substring>", "responses": ["...", ...]}],
///    "repair": [...], "filler_fallback": true}
/// An entry without "match" matches every prompt of its kind. Its responses
/// are served in order; the last one repeats.
class MockClient : public ModelClient {
 public:
  struct CallRecord {
    PromptKind kind;
    std::string prompt;
    std::string response;
  };

  MockClient() = default;  // filler only
  static MockClient from_script_text(std::string_view json);
  static MockClient from_script_file(const std::string& path);

  /// Placeholder filler: choose tables round-robin instead of always the first.
  void set_rotate_tables(bool on) { rotate_tables_ = on; }

  std::string complete(const Prompt& prompt, const ModelParams& params) override;

  std::vector<CallRecord> calls() const;
  std::size_t call_count() const;
  std::size_t call_count(PromptKind kind) const;

 private:
  struct Entry {
    PromptKind kind;
    std::optional<std::string> match;
    std::vector<std::string> responses;
    std::size_t served = 0;
  };

  std::string fill_instantiation(const Prompt& prompt);
  std::string fill_repair(const Prompt& prompt);

  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  std::vector<Entry> entries_;
  bool filler_fallback_ = true;
  bool rotate_tables_ = false;
  std::size_t rotation_ = 0;
  std::vector<CallRecord> calls_;
};

/// Fills `[placeholder]` slots of one template against the context. Used by
/// the mock filler; deterministic.
std::string fill_template(std::string_view templ, const SchemaContext& context, std::size_t table_choice = 0);

/// First JSON array of strings in the response, elements trimmed, empties
/// dropped. Throws Error(NoJsonArray).
std::vector<std::string> parse_sql_array(std::string_view response);

}  // namespace sqlfuzz
