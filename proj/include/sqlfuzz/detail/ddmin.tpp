#pragma once
// ddmin over element positions; included from validation.hpp.

#include <algorithm>
#include <set>

#include "sqlfuzz/common.hpp"

namespace sqlfuzz {

template <typename T>
std::vector<T> ddmin(const std::vector<T>& input, const std::function<bool(const std::vector<T>&)>& oracle,
                     DdminStats* stats) {
  using Positions = std::vector<std::size_t>;
  std::map<Positions, bool> cache;
  DdminStats local;
  DdminStats& st = stats ? *stats : local;

  auto materialize = [&](const Positions& pos) {
    std::vector<T> out;
    out.reserve(pos.size());
    for (std::size_t p : pos) out.push_back(input[p]);
    return out;
  };
  auto test = [&](const Positions& pos) {
    if (auto it = cache.find(pos); it != cache.end()) {
      ++st.cache_hits;
      return it->second;
    }
    ++st.oracle_calls;
    const bool r = oracle(materialize(pos));
    cache.emplace(pos, r);
    return r;
  };

  Positions current(input.size());
  for (std::size_t i = 0; i < current.size(); ++i) current[i] = i;
  if (!test(current)) throw Error(Errc::OracleFlaky, "ddmin: the full input does not satisfy the oracle");

  std::size_t n = 2;
  while (current.size() >= 2) {
    const std::size_t len = current.size();
    n = std::min(n, len);
    std::vector<Positions> chunks;
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t b = c * len / n, e = (c + 1) * len / n;
      chunks.emplace_back(current.begin() + static_cast<std::ptrdiff_t>(b),
                          current.begin() + static_cast<std::ptrdiff_t>(e));
    }
    bool reduced = false;
    for (const auto& chunk : chunks) {
      if (test(chunk)) {
        current = chunk;
        n = 2;
        reduced = true;
        break;
      }
    }
    if (!reduced && n > 2) {
      for (std::size_t c = 0; c < n; ++c) {
        Positions complement;
        for (std::size_t d = 0; d < n; ++d)
          if (d != c) complement.insert(complement.end(), chunks[d].begin(), chunks[d].end());
        if (test(complement)) {
          current = std::move(complement);
          n = std::max<std::size_t>(n - 1, 2);
          reduced = true;
          break;
        }
      }
    }
    if (!reduced) {
      if (n >= len) break;
      n = std::min(n * 2, len);
    }
  }
  return materialize(current);
}

}  // namespace sqlfuzz
