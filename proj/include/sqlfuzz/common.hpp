#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sqlfuzz {

enum class Errc {
  Syntax,
  UnresolvedReference,
  DepthExhausted,
  BudgetExceeded,
  UnknownDialect,
  EmptyTemplates,
  IndexOutOfRange,
  NoJsonArray,
  Timeout,
  Transport,
  Endpoint,
  InsufficientSeeds,
  TargetUnavailable,
  OracleFlaky,
  SessionDead,
  Config,
  Io,
};

std::string_view to_string(Errc code);

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// The one random source threaded through every stochastic operation.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Derive an independent, reproducible stream from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

std::string to_upper(std::string_view s);
std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view text, std::string_view prefix);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace sqlfuzz
