#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aeval/errors.hpp"

namespace aeval {

/// Normalizes 1..5 Likert importance scores into weights that sum to 1.
/// Order is preserved; weight[j] = likert[j] / sum(likert).
inline std::vector<double> normalize_weights(std::span<const int> likert_scores) {
  if (likert_scores.empty()) {
    throw EmptyAspectSet("cannot normalize an empty aspect set");
  }
  long long total = 0;
  for (int s : likert_scores) {
    if (s < 1 || s > 5) {
      throw InvalidLikert("likert score " + std::to_string(s) +
                          " outside [1, 5]");
    }
    total += s;
  }
  std::vector<double> weights;
  weights.reserve(likert_scores.size());
  for (int s : likert_scores) {
    weights.push_back(static_cast<double>(s) / static_cast<double>(total));
  }
  return weights;
}

/// One reasoning aspect of a query. `weight` is always derived from the
/// Likert scores of the whole set, never stored independently.
struct Aspect {
  std::string aspect_id;
  std::string description;
  int likert = 1;
  double weight = 0.0;
};

/// A query's reasoning aspects with normalized importance weights.
/// Immutable after construction.
class AspectSet {
 public:
  struct Input {
    std::string aspect_id;
    std::string description;
    int likert = 1;
  };

  static AspectSet create(std::string query_id, const std::vector<Input>& in) {
    if (in.empty()) {
      throw EmptyAspectSet("query " + query_id + " has no aspects");
    }
    std::vector<int> likerts;
    likerts.reserve(in.size());
    std::unordered_set<std::string> seen;
    for (const auto& a : in) {
      if (!seen.insert(a.aspect_id).second) {
        throw DuplicateAspect("query " + query_id + ": duplicate aspect id " +
                              a.aspect_id);
      }
      likerts.push_back(a.likert);
    }
    auto weights = normalize_weights(likerts);
    AspectSet set;
    set.query_id_ = std::move(query_id);
    set.aspects_.reserve(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      set.aspects_.push_back(
          Aspect{in[i].aspect_id, in[i].description, in[i].likert, weights[i]});
      set.index_.emplace(in[i].aspect_id, i);
    }
    return set;
  }

  const std::string& query_id() const { return query_id_; }
  const std::vector<Aspect>& aspects() const { return aspects_; }
  std::size_t size() const { return aspects_.size(); }

  bool contains(const std::string& aspect_id) const {
    return index_.count(aspect_id) > 0;
  }

  /// Index of an aspect id within the ordered list; npos when absent.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t index_of(const std::string& aspect_id) const {
    auto it = index_.find(aspect_id);
    return it == index_.end() ? npos : it->second;
  }

  double weight_of(const std::string& aspect_id) const {
    auto i = index_of(aspect_id);
    return i == npos ? 0.0 : aspects_[i].weight;
  }

 private:
  std::string query_id_;
  std::vector<Aspect> aspects_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gold passage -> aspect assignment for one query. `source_doc_id` carries
/// provenance when a multi-aspect source passage was split into synthetic
/// per-aspect entries at load time.
struct GoldEntry {
  std::string doc_id;
  std::string aspect_id;
  std::string source_doc_id;  // empty unless synthesized by a split
};

/// Holds the entries as given; invariants (unique doc ids, known aspect ids)
/// are checked by validate_gold, which loaders run before handing the
/// assignment to metrics.
class GoldAssignment {
 public:
  GoldAssignment() = default;
  GoldAssignment(std::string query_id, std::vector<GoldEntry> entries)
      : query_id_(std::move(query_id)), entries_(std::move(entries)) {}

  const std::string& query_id() const { return query_id_; }
  const std::vector<GoldEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// doc_id -> aspect_id map. Throws DuplicateGoldDoc if the assignment is
  /// not a function.
  std::unordered_map<std::string, std::string> as_map() const {
    std::unordered_map<std::string, std::string> map;
    map.reserve(entries_.size());
    for (const auto& e : entries_) {
      if (!map.emplace(e.doc_id, e.aspect_id).second) {
        throw DuplicateGoldDoc("query " + query_id_ + ": gold doc " +
                               e.doc_id + " assigned more than once");
      }
    }
    return map;
  }

 private:
  std::string query_id_;
  std::vector<GoldEntry> entries_;
};

/// Findings produced by validate_gold. Dangling references and duplicate
/// doc ids are errors; an aspect with no gold document is only a warning
/// (such aspects still carry weight on the judge side).
struct GoldValidationReport {
  enum class Kind { dangling_reference, duplicate_doc, zero_coverage };

  struct Finding {
    Kind kind;
    std::string subject;
    std::string message;
  };

  std::vector<Finding> findings;

  bool has_errors() const {
    return std::any_of(findings.begin(), findings.end(), [](const Finding& f) {
      return f.kind != Kind::zero_coverage;
    });
  }
  bool empty() const { return findings.empty(); }
};

inline GoldValidationReport validate_gold(const GoldAssignment& gold,
                                          const AspectSet& aspects) {
  if (gold.query_id() != aspects.query_id()) {
    throw QueryMismatch("gold assignment is for query " + gold.query_id() +
                        " but aspects are for query " + aspects.query_id());
  }
  GoldValidationReport report;
  std::unordered_set<std::string> seen_docs;
  std::unordered_set<std::string> covered_aspects;
  for (const auto& e : gold.entries()) {
    if (!seen_docs.insert(e.doc_id).second) {
      report.findings.push_back({GoldValidationReport::Kind::duplicate_doc,
                                 e.doc_id,
                                 "gold doc " + e.doc_id + " listed twice"});
    }
    if (!aspects.contains(e.aspect_id)) {
      report.findings.push_back(
          {GoldValidationReport::Kind::dangling_reference, e.aspect_id,
           "gold doc " + e.doc_id + " references unknown aspect " +
               e.aspect_id});
    } else {
      covered_aspects.insert(e.aspect_id);
    }
  }
  for (const auto& a : aspects.aspects()) {
    if (!covered_aspects.count(a.aspect_id)) {
      report.findings.push_back({GoldValidationReport::Kind::zero_coverage,
                                 a.aspect_id,
                                 "aspect " + a.aspect_id +
                                     " has no gold document"});
    }
  }
  return report;
}

/// One (doc, score) entry of a ranked retrieval list.
struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// An ordered retrieval result for one query. Scores are non-increasing and
/// score ties are ordered by ascending doc id, so evaluation is deterministic
/// across platforms.
class RankedRun {
 public:
  RankedRun() = default;

  /// Sorts items into the canonical order and rejects duplicate doc ids.
  static RankedRun canonical(std::string query_id,
                             std::vector<ScoredDoc> items) {
    std::stable_sort(items.begin(), items.end(),
                     [](const ScoredDoc& a, const ScoredDoc& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return a.doc_id < b.doc_id;
                     });
    return checked(std::move(query_id), std::move(items));
  }

  /// Accepts items that already satisfy the ordering invariant; throws
  /// RankOrderError otherwise.
  static RankedRun from_ordered(std::string query_id,
                                std::vector<ScoredDoc> items) {
    for (std::size_t i = 1; i < items.size(); ++i) {
      if (items[i - 1].score < items[i].score) {
        throw RankOrderError("query " + query_id +
                             ": scores increase at rank " +
                             std::to_string(i + 1));
      }
      if (items[i - 1].score == items[i].score &&
          items[i - 1].doc_id > items[i].doc_id) {
        throw RankOrderError("query " + query_id +
                             ": tie not ordered by doc id at rank " +
                             std::to_string(i + 1));
      }
    }
    return checked(std::move(query_id), std::move(items));
  }

  const std::string& query_id() const { return query_id_; }
  const std::vector<ScoredDoc>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  /// 1-based access matching rank positions.
  const ScoredDoc& at_rank(std::size_t rank) const {
    if (rank < 1 || rank > items_.size()) {
      throw RankOutOfRange("rank " + std::to_string(rank) +
                           " outside run of length " +
                           std::to_string(items_.size()));
    }
    return items_[rank - 1];
  }

 private:
  static RankedRun checked(std::string query_id, std::vector<ScoredDoc> items) {
    std::unordered_set<std::string> seen;
    seen.reserve(items.size());
    for (const auto& d : items) {
      if (!seen.insert(d.doc_id).second) {
        throw DuplicateDocument("query " + query_id + ": doc " + d.doc_id +
                                " appears twice in run");
      }
    }
    RankedRun run;
    run.query_id_ = std::move(query_id);
    run.items_ = std::move(items);
    return run;
  }

  std::string query_id_;
  std::vector<ScoredDoc> items_;
};

/// Novelty penalty and report cutoffs for the metric suite.
struct MetricConfig {
  double alpha = 0.5;
  std::vector<int> cutoffs = {5, 10, 25};

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) {
      throw InvalidAlpha("alpha " + std::to_string(alpha) +
                         " outside [0, 1]");
    }
    if (cutoffs.empty()) {
      throw InvalidCutoffs("at least one cutoff required");
    }
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
      if (cutoffs[i] < 1) {
        throw InvalidCutoffs("cutoff " + std::to_string(cutoffs[i]) +
                             " is not positive");
      }
      if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) {
        throw InvalidCutoffs("cutoffs must be strictly increasing");
      }
    }
  }
};

/// Everything the evaluator knows about one query: its aspects, its gold
/// assignment, the task subset it belongs to, and the question text the
/// agentic harness feeds to agents.
struct QueryJudgments {
  AspectSet aspects;
  GoldAssignment gold;
  std::string subset;
  std::string question;
};

/// Keyed by query id; ordered so every iteration is deterministic.
using JudgmentsMap = std::map<std::string, QueryJudgments>;

}  // namespace aeval
