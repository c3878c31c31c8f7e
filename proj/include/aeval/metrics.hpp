#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "aeval/core.hpp"
#include "aeval/errors.hpp"
#include "aeval/parallel.hpp"

namespace aeval::metrics {

inline double log2_discount(std::size_t rank) {
  return std::log2(static_cast<double>(rank) + 1.0);
}

/// Per-aspect retrieved-gold counts at some rank depth.
class CoverageState {
 public:
  explicit CoverageState(const AspectSet& aspects)
      : aspects_(&aspects), counts_(aspects.size(), 0) {}

  /// Count of gold documents for `aspect_index` seen so far.
  int count(std::size_t aspect_index) const { return counts_[aspect_index]; }

  void record_hit(std::size_t aspect_index) { ++counts_[aspect_index]; }

  const AspectSet& aspects() const { return *aspects_; }

 private:
  const AspectSet* aspects_;
  std::vector<int> counts_;
};

namespace detail {

/// Aspect index per run position, or AspectSet::npos for non-gold documents.
inline std::vector<std::size_t> aspect_positions(const RankedRun& run,
                                                 const GoldAssignment& gold,
                                                 const AspectSet& aspects) {
  auto gold_map = gold.as_map();
  std::vector<std::size_t> out;
  out.reserve(run.size());
  for (const auto& d : run.items()) {
    auto it = gold_map.find(d.doc_id);
    out.push_back(it == gold_map.end() ? AspectSet::npos
                                       : aspects.index_of(it->second));
  }
  return out;
}

}  // namespace detail

/// Novelty-discounted gain of the document at `rank_position` (1-based):
/// 0 for non-gold documents, otherwise w_j * (1-alpha)^c where j is the
/// document's aspect and c counts same-aspect gold strictly above this rank.
inline double aspect_gain(std::size_t rank_position, const RankedRun& run,
                          const GoldAssignment& gold, const AspectSet& aspects,
                          double alpha) {
  if (rank_position < 1 || rank_position > run.size()) {
    throw RankOutOfRange("rank " + std::to_string(rank_position) +
                         " outside run of length " +
                         std::to_string(run.size()));
  }
  auto positions = detail::aspect_positions(run, gold, aspects);
  std::size_t j = positions[rank_position - 1];
  if (j == AspectSet::npos) return 0.0;
  int prior = 0;
  for (std::size_t r = 0; r + 1 < rank_position; ++r) {
    if (positions[r] == j) ++prior;
  }
  return aspects.aspects()[j].weight * std::pow(1.0 - alpha, prior);
}

/// DCG_alpha@k: novelty-discounted gains accumulated with a log2(r+1)
/// positional discount over the first min(k, |run|) positions.
inline double alpha_dcg(const RankedRun& run, const GoldAssignment& gold,
                        const AspectSet& aspects, double alpha, int k) {
  auto positions = detail::aspect_positions(run, gold, aspects);
  CoverageState coverage(aspects);
  double dcg = 0.0;
  std::size_t limit = std::min<std::size_t>(k, run.size());
  for (std::size_t r = 1; r <= limit; ++r) {
    std::size_t j = positions[r - 1];
    if (j == AspectSet::npos) continue;
    double gain = aspects.aspects()[j].weight *
                  std::pow(1.0 - alpha, coverage.count(j));
    dcg += gain / log2_discount(r);
    coverage.record_hit(j);
  }
  return dcg;
}

/// Greedy ideal ordering of the gold pool: at each position place the
/// unplaced gold document with the largest incremental gain, ties broken by
/// ascending doc id. `gains` holds the undiscounted per-position gains so
/// prefix IDCGs at smaller cutoffs can be derived from the same ordering.
struct GreedyIdeal {
  std::vector<std::string> order;
  std::vector<double> gains;

  /// IDCG at cutoff k under the greedy ordering.
  double idcg_at(int k) const {
    double sum = 0.0;
    std::size_t limit = std::min<std::size_t>(k, gains.size());
    for (std::size_t r = 1; r <= limit; ++r) {
      sum += gains[r - 1] / log2_discount(r);
    }
    return sum;
  }
};

inline GreedyIdeal greedy_ideal(const GoldAssignment& gold,
                                const AspectSet& aspects, double alpha,
                                int k) {
  if (gold.empty()) {
    throw ZeroIdeal("query " + gold.query_id() + " has no gold documents");
  }
  struct Candidate {
    std::string doc_id;
    std::size_t aspect;
  };
  auto gold_map = gold.as_map();
  std::vector<Candidate> pool;
  pool.reserve(gold_map.size());
  for (const auto& [doc, aspect_id] : gold_map) {
    auto j = aspects.index_of(aspect_id);
    if (j == AspectSet::npos) continue;  // dangling entries carry no gain
    pool.push_back({doc, j});
  }
  std::sort(pool.begin(), pool.end(),
            [](const Candidate& a, const Candidate& b) {
              return a.doc_id < b.doc_id;
            });

  GreedyIdeal ideal;
  CoverageState coverage(aspects);
  std::vector<bool> placed(pool.size(), false);
  std::size_t positions = std::min<std::size_t>(k, pool.size());
  for (std::size_t pos = 0; pos < positions; ++pos) {
    double best_gain = -1.0;
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (placed[i]) continue;
      double gain = aspects.aspects()[pool[i].aspect].weight *
                    std::pow(1.0 - alpha, coverage.count(pool[i].aspect));
      if (gain > best_gain) {  // pool is doc-id sorted, so first max wins ties
        best_gain = gain;
        best = i;
      }
    }
    if (best == pool.size()) break;
    placed[best] = true;
    coverage.record_hit(pool[best].aspect);
    ideal.order.push_back(pool[best].doc_id);
    ideal.gains.push_back(best_gain);
  }
  return ideal;
}

/// IDCG_alpha@k by greedy placement; the production normalizer.
inline double ideal_alpha_dcg_greedy(const GoldAssignment& gold,
                                     const AspectSet& aspects, double alpha,
                                     int k) {
  return greedy_ideal(gold, aspects, alpha, k).idcg_at(k);
}

/// True maximum DCG_alpha@k over all orderings of the gold pool. Test oracle
/// only: cost is factorial in the gold count, hard-capped at 10.
inline double ideal_alpha_dcg_exhaustive(const GoldAssignment& gold,
                                         const AspectSet& aspects,
                                         double alpha, int k) {
  if (gold.empty()) {
    throw ZeroIdeal("query " + gold.query_id() + " has no gold documents");
  }
  auto gold_map = gold.as_map();
  std::vector<std::size_t> doc_aspect;
  for (const auto& [doc, aspect_id] : gold_map) {
    auto j = aspects.index_of(aspect_id);
    if (j != AspectSet::npos) doc_aspect.push_back(j);
  }
  if (doc_aspect.size() > 10) {
    throw OracleTooLarge("exhaustive ideal over " +
                         std::to_string(doc_aspect.size()) +
                         " gold documents is infeasible");
  }
  std::sort(doc_aspect.begin(), doc_aspect.end());
  std::size_t positions = std::min<std::size_t>(k, doc_aspect.size());
  double best = 0.0;
  std::vector<int> counts(aspects.size());
  do {  // doc ids do not affect the value, so aspect multisets suffice
    std::fill(counts.begin(), counts.end(), 0);
    double dcg = 0.0;
    for (std::size_t r = 1; r <= positions; ++r) {
      std::size_t j = doc_aspect[r - 1];
      dcg += aspects.aspects()[j].weight * std::pow(1.0 - alpha, counts[j]) /
             log2_discount(r);
      ++counts[j];
    }
    best = std::max(best, dcg);
  } while (std::next_permutation(doc_aspect.begin(), doc_aspect.end()));
  return best;
}

/// Sum of weights of aspects with at least one gold document in the top k.
inline double a_recall(const RankedRun& run, const GoldAssignment& gold,
                       const AspectSet& aspects, int k) {
  auto positions = detail::aspect_positions(run, gold, aspects);
  std::vector<bool> covered(aspects.size(), false);
  std::size_t limit = std::min<std::size_t>(k, run.size());
  for (std::size_t r = 0; r < limit; ++r) {
    if (positions[r] != AspectSet::npos) covered[positions[r]] = true;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < covered.size(); ++j) {
    if (covered[j]) sum += aspects.aspects()[j].weight;
  }
  return sum;
}

/// Fraction of gold passages within the top k.
inline double recall_at_k(const RankedRun& run, const GoldAssignment& gold,
                          int k) {
  auto gold_map = gold.as_map();
  if (gold_map.empty()) {
    throw ZeroGold("query " + gold.query_id() +
                   ": recall undefined with no gold documents");
  }
  std::size_t limit = std::min<std::size_t>(k, run.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < limit; ++r) {
    if (gold_map.count(run.items()[r].doc_id)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold_map.size());
}

/// Binary-relevance NDCG@k, normalized by the all-gold-at-top ideal.
inline double ndcg_at_k(const RankedRun& run, const GoldAssignment& gold,
                        int k) {
  auto gold_map = gold.as_map();
  if (gold_map.empty()) {
    throw ZeroGold("query " + gold.query_id() +
                   ": ndcg undefined with no gold documents");
  }
  std::size_t limit = std::min<std::size_t>(k, run.size());
  double dcg = 0.0;
  for (std::size_t r = 1; r <= limit; ++r) {
    if (gold_map.count(run.items()[r - 1].doc_id)) {
      dcg += 1.0 / log2_discount(r);
    }
  }
  double idcg = 0.0;
  std::size_t ideal_positions = std::min<std::size_t>(k, gold_map.size());
  for (std::size_t r = 1; r <= ideal_positions; ++r) {
    idcg += 1.0 / log2_discount(r);
  }
  return dcg / idcg;
}

/// Metric values at one cutoff, with the DCG/IDCG pair kept for diagnostics.
struct CutoffValues {
  double alpha_ndcg = 0.0;
  double a_recall = 0.0;
  double recall = std::numeric_limits<double>::quiet_NaN();
  double ndcg = std::numeric_limits<double>::quiet_NaN();
  double dcg = 0.0;
  double idcg = 0.0;
};

struct MetricReport {
  std::string query_id;
  std::string subset;
  std::map<int, CutoffValues> at;
  std::string ideal_method = "greedy";
  bool empty_gold = false;
  bool empty_run = false;
  // Set when alpha-nDCG exceeds 1 against the greedy ideal; values are
  // reported as-is, never clamped.
  bool above_one = false;
};

/// Per-cutoff alpha-nDCG against the greedy ideal. Empty gold reports 0 with
/// the empty_gold flag via evaluate_query.
inline std::map<int, double> alpha_ndcg(const RankedRun& run,
                                        const GoldAssignment& gold,
                                        const AspectSet& aspects,
                                        const MetricConfig& config) {
  config.validate();
  std::map<int, double> out;
  if (gold.empty()) {
    for (int k : config.cutoffs) out[k] = 0.0;
    return out;
  }
  auto ideal = greedy_ideal(gold, aspects, config.alpha,
                            config.cutoffs.back());
  for (int k : config.cutoffs) {
    double idcg = ideal.idcg_at(k);
    double dcg = alpha_dcg(run, gold, aspects, config.alpha, k);
    out[k] = idcg > 0.0 ? dcg / idcg : 0.0;
  }
  return out;
}

/// Full per-query report at every configured cutoff.
inline MetricReport evaluate_query(const RankedRun& run,
                                   const QueryJudgments& judgments,
                                   const MetricConfig& config) {
  config.validate();
  MetricReport report;
  report.query_id = run.query_id();
  report.subset = judgments.subset;
  report.empty_run = run.empty();
  const auto& gold = judgments.gold;
  const auto& aspects = judgments.aspects;
  if (gold.empty()) {
    report.empty_gold = true;
    for (int k : config.cutoffs) report.at[k] = CutoffValues{};
    return report;
  }
  auto ideal = greedy_ideal(gold, aspects, config.alpha, config.cutoffs.back());
  for (int k : config.cutoffs) {
    CutoffValues v;
    v.dcg = alpha_dcg(run, gold, aspects, config.alpha, k);
    v.idcg = ideal.idcg_at(k);
    v.alpha_ndcg = v.idcg > 0.0 ? v.dcg / v.idcg : 0.0;
    v.a_recall = a_recall(run, gold, aspects, k);
    v.recall = recall_at_k(run, gold, k);
    v.ndcg = ndcg_at_k(run, gold, k);
    if (v.alpha_ndcg > 1.0) report.above_one = true;
    report.at[k] = v;
  }
  return report;
}

/// Per-cutoff means on the 0-100 display scale.
struct AggregateValues {
  double alpha_ndcg = 0.0;
  double a_recall = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  int query_count = 0;
};

struct EvaluationReport {
  std::vector<MetricReport> per_query;
  // subset -> cutoff -> unweighted mean over that subset's queries.
  std::map<std::string, std::map<int, AggregateValues>> subsets;
  // Unweighted mean of the subset means, matching per-subset reporting
  // with an Overall column.
  std::map<int, AggregateValues> overall;
  std::vector<std::string> excluded_empty_gold;
  std::vector<std::string> missing_from_run;
};

/// Evaluates a whole run set against qrels. Queries present in the qrels but
/// absent from the runs score zero (flagged); runs without qrels are an
/// error. Empty-gold queries are excluded from every average.
inline EvaluationReport evaluate_run(const std::vector<RankedRun>& runs,
                                     const JudgmentsMap& qrels,
                                     const MetricConfig& config,
                                     int n_threads = 0) {
  config.validate();
  std::vector<std::string> unknown;
  for (const auto& run : runs) {
    if (!qrels.count(run.query_id())) unknown.push_back(run.query_id());
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    throw MissingQrels(std::move(unknown));
  }

  std::unordered_map<std::string, const RankedRun*> by_query;
  for (const auto& run : runs) by_query.emplace(run.query_id(), &run);

  EvaluationReport report;
  std::vector<const std::string*> query_ids;
  query_ids.reserve(qrels.size());
  for (const auto& [qid, _] : qrels) query_ids.push_back(&qid);

  report.per_query.resize(query_ids.size());
  parallel_for(
      query_ids.size(),
      [&](std::size_t i) {
        const std::string& qid = *query_ids[i];
        const QueryJudgments& judgments = qrels.at(qid);
        auto it = by_query.find(qid);
        RankedRun run = it != by_query.end() ? *it->second
                                             : RankedRun::canonical(qid, {});
        report.per_query[i] = evaluate_query(run, judgments, config);
      },
      n_threads);

  for (const auto& r : report.per_query) {
    if (!by_query.count(r.query_id)) {
      report.missing_from_run.push_back(r.query_id);
    }
    if (r.empty_gold) {
      report.excluded_empty_gold.push_back(r.query_id);
      continue;
    }
    for (const auto& [k, v] : r.at) {
      auto& agg = report.subsets[r.subset][k];
      agg.alpha_ndcg += v.alpha_ndcg;
      agg.a_recall += v.a_recall;
      agg.recall += v.recall;
      agg.ndcg += v.ndcg;
      agg.query_count += 1;
    }
  }
  for (auto& [subset, per_cutoff] : report.subsets) {
    for (auto& [k, agg] : per_cutoff) {
      double n = agg.query_count;
      agg.alpha_ndcg = 100.0 * agg.alpha_ndcg / n;
      agg.a_recall = 100.0 * agg.a_recall / n;
      agg.recall = 100.0 * agg.recall / n;
      agg.ndcg = 100.0 * agg.ndcg / n;
    }
  }
  for (const auto& [subset, per_cutoff] : report.subsets) {
    for (const auto& [k, agg] : per_cutoff) {
      auto& o = report.overall[k];
      o.alpha_ndcg += agg.alpha_ndcg;
      o.a_recall += agg.a_recall;
      o.recall += agg.recall;
      o.ndcg += agg.ndcg;
      o.query_count += agg.query_count;
    }
  }
  double subset_count = static_cast<double>(report.subsets.size());
  for (auto& [k, o] : report.overall) {
    o.alpha_ndcg /= subset_count;
    o.a_recall /= subset_count;
    o.recall /= subset_count;
    o.ndcg /= subset_count;
  }
  return report;
}

}  // namespace aeval::metrics
