#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aeval/core.hpp"

namespace aeval::sampling {

/// Uniform integer in [0, n) drawn by rejection, so results do not depend on
/// the standard library's distribution implementation.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t n) {
  std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  std::uint64_t x;
  do {
    x = rng();
  } while (x < threshold);
  return x % n;
}

/// Deterministic per-subset sampling: subsets visited in sorted order, ids
/// sorted within each subset, one seeded generator feeding a partial
/// Fisher-Yates shuffle per subset. per_subset <= 0 selects every query.
/// Returns the selected ids sorted.
inline std::vector<std::string> sample_queries(const JudgmentsMap& qrels,
                                               int per_subset,
                                               std::uint64_t seed) {
  std::vector<std::string> selected;
  if (per_subset <= 0) {
    for (const auto& [query_id, entry] : qrels) selected.push_back(query_id);
    return selected;
  }
  std::map<std::string, std::vector<std::string>> by_subset;
  for (const auto& [query_id, entry] : qrels) {
    by_subset[entry.subset].push_back(query_id);
  }
  std::mt19937_64 rng(seed);
  for (auto& [subset, ids] : by_subset) {
    std::sort(ids.begin(), ids.end());
    std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(per_subset),
                              ids.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + bounded_rand(rng, ids.size() - i);
      std::swap(ids[i], ids[j]);
    }
    selected.insert(selected.end(), ids.begin(), ids.begin() + take);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

}  // namespace aeval::sampling
