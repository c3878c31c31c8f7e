#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aeval/core.hpp"
#include "aeval/corpus_io.hpp"
#include "aeval/errors.hpp"
#include "aeval/trace.hpp"

namespace aeval::judge {

/// A judge's grading of one answer: per-aspect coverage on the {0, 0.5, 1}
/// scale plus a holistic 1..5 overall-quality score.
struct JudgeVerdict {
  std::string query_id;
  std::map<std::string, double> aspect_scores;
  int overall_quality = 0;
  std::string justification;

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

namespace detail {

inline bool valid_aspect_score(double v) {
  return v == 0.0 || v == 0.5 || v == 1.0;
}

/// Strips markdown fences / surrounding prose and returns the first
/// top-level JSON object in the text, or an empty string when none exists.
inline std::string extract_json_object(const std::string& raw) {
  std::size_t start = raw.find('{');
  if (start == std::string::npos) return {};
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < raw.size(); ++i) {
    char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return raw.substr(start, i - start + 1);
    }
  }
  return {};
}

}  // namespace detail

/// Parses raw judge output. Recovery is lenient — fences and prose around
/// the object are stripped — but the object itself is validated strictly:
/// every aspect of the set must be scored exactly once on {0, 0.5, 1} and
/// overall_quality must be an integer in 1..5.
inline JudgeVerdict parse_judge_output(const std::string& raw,
                                       const AspectSet& aspects) {
  std::string object_text = detail::extract_json_object(raw);
  if (object_text.empty()) {
    throw JudgeParseError("no JSON object found in judge output");
  }
  io::json object;
  try {
    object = io::json::parse(object_text);
  } catch (const nlohmann::json::exception& e) {
    throw JudgeParseError(std::string("judge output is not valid JSON: ") +
                          e.what());
  }
  if (!object.is_object() || !object.contains("aspect_scores") ||
      !object["aspect_scores"].is_object()) {
    throw JudgeParseError("judge output lacks an \"aspect_scores\" object");
  }
  if (!object.contains("overall_quality")) {
    throw JudgeParseError("judge output lacks \"overall_quality\"");
  }

  JudgeVerdict verdict;
  verdict.query_id = aspects.query_id();

  for (const auto& [aspect_id, value] : object["aspect_scores"].items()) {
    if (!aspects.contains(aspect_id)) {
      throw IncompleteVerdict("verdict scores unknown aspect \"" + aspect_id +
                              "\" for query " + aspects.query_id());
    }
    if (!value.is_number()) {
      throw InvalidScore("aspect \"" + aspect_id +
                         "\" score is not a number");
    }
    double score = value.get<double>();
    if (!detail::valid_aspect_score(score)) {
      throw InvalidScore("aspect \"" + aspect_id + "\" score " +
                         std::to_string(score) +
                         " outside {0, 0.5, 1}");
    }
    verdict.aspect_scores[aspect_id] = score;
  }
  for (const Aspect& aspect : aspects.aspects()) {
    if (!verdict.aspect_scores.count(aspect.aspect_id)) {
      throw IncompleteVerdict("verdict missing aspect \"" + aspect.aspect_id +
                              "\" for query " + aspects.query_id());
    }
  }

  const io::json& oq = object["overall_quality"];
  bool integral = oq.is_number_integer();
  if (oq.is_number_float()) {
    double v = oq.get<double>();
    integral = v == std::floor(v);
  }
  if (!oq.is_number() || !integral) {
    throw InvalidScore("overall_quality is not an integer");
  }
  verdict.overall_quality = oq.get<int>();
  if (verdict.overall_quality < 1 || verdict.overall_quality > 5) {
    throw InvalidScore("overall_quality " +
                       std::to_string(verdict.overall_quality) +
                       " outside 1..5");
  }

  if (object.contains("justification") &&
      object["justification"].is_string()) {
    verdict.justification = object["justification"].get<std::string>();
  }
  return verdict;
}

/// Emits the canonical single-object form (aspects in rubric order).
inline std::string serialize_verdict(const JudgeVerdict& verdict,
                                     const AspectSet& aspects) {
  io::json scores = io::json::object();
  for (const Aspect& aspect : aspects.aspects()) {
    auto it = verdict.aspect_scores.find(aspect.aspect_id);
    if (it == verdict.aspect_scores.end()) {
      throw IncompleteVerdict("verdict missing aspect \"" + aspect.aspect_id +
                              "\" for query " + aspects.query_id());
    }
    if (it->second == 0.0 || it->second == 1.0) {
      scores[aspect.aspect_id] = static_cast<int>(it->second);
    } else {
      scores[aspect.aspect_id] = it->second;
    }
  }
  io::json object = {{"aspect_scores", scores},
                     {"overall_quality", verdict.overall_quality},
                     {"justification", verdict.justification}};
  return object.dump();
}

/// Collapses per-aspect coverage into the 1..5 reporting scale:
/// round(4·w̄ + 1) with half-up ties, where w̄ is the Likert-weighted mean
/// of the aspect scores.
inline int reasoning_completeness(const JudgeVerdict& verdict,
                                  const AspectSet& aspects) {
  if (aspects.size() == 0) {
    throw Error("reasoning completeness needs a non-empty aspect set");
  }
  double weighted_mean = 0.0;
  for (const Aspect& aspect : aspects.aspects()) {
    auto it = verdict.aspect_scores.find(aspect.aspect_id);
    if (it == verdict.aspect_scores.end()) {
      throw IncompleteVerdict("verdict missing aspect \"" + aspect.aspect_id +
                              "\" for query " + aspects.query_id());
    }
    if (!detail::valid_aspect_score(it->second)) {
      throw InvalidScore("aspect \"" + aspect.aspect_id + "\" score " +
                         std::to_string(it->second) + " outside {0, 0.5, 1}");
    }
    weighted_mean += aspect.weight * it->second;
  }
  int result = static_cast<int>(std::floor(4.0 * weighted_mean + 1.0 + 0.5));
  return std::clamp(result, 1, 5);
}

/// Answer-Efficiency Reward: OQ · e^{−γ(R−1)}. Equals OQ at one round and
/// decays with every additional round when γ > 0.
inline double aer(int overall_quality, int rounds, double gamma = 0.05) {
  if (rounds < 1) {
    throw InvalidRounds("rounds " + std::to_string(rounds) +
                        " below 1 in efficiency reward");
  }
  if (overall_quality < 1 || overall_quality > 5) {
    throw InvalidScore("overall_quality " + std::to_string(overall_quality) +
                       " outside 1..5");
  }
  if (gamma < 0.0) {
    throw Error("gamma must be non-negative");
  }
  return overall_quality * std::exp(-gamma * (rounds - 1));
}

struct AgenticReportRow {
  std::string query_id;
  int rounds = 0;
  int completeness = 0;
  int overall_quality = 0;
  double aer = 0.0;

  friend bool operator==(const AgenticReportRow&,
                         const AgenticReportRow&) = default;
};

struct AgenticReport {
  std::vector<AgenticReportRow> rows;  // sorted by query_id
  double mean_rounds = 0.0;
  double mean_completeness = 0.0;
  double mean_overall_quality = 0.0;
  double mean_aer = 0.0;  // mean of per-query AER values
};

/// Joins verdicts with traces per query and averages. AER is computed per
/// query and then averaged; it is never derived from mean OQ and mean R
/// (that would overstate the reward whenever round counts vary).
inline AgenticReport aggregate_agentic_report(
    const std::vector<JudgeVerdict>& verdicts,
    const std::map<std::string, SearchTrace>& traces,
    const JudgmentsMap& judgments, double gamma = 0.05) {
  std::map<std::string, const JudgeVerdict*> by_query;
  for (const JudgeVerdict& verdict : verdicts) {
    if (!by_query.emplace(verdict.query_id, &verdict).second) {
      throw Error("duplicate verdict for query " + verdict.query_id);
    }
  }
  for (const auto& [query_id, verdict] : by_query) {
    if (!traces.count(query_id)) {
      throw MissingTrace(query_id);
    }
    (void)verdict;
  }

  AgenticReport report;
  for (const auto& [query_id, trace] : traces) {
    auto verdict_it = by_query.find(query_id);
    if (verdict_it == by_query.end()) {
      throw MissingVerdict(query_id);
    }
    auto judgment_it = judgments.find(query_id);
    if (judgment_it == judgments.end()) {
      throw QueryMismatch("no aspect set for query " + query_id);
    }
    const JudgeVerdict& verdict = *verdict_it->second;
    AgenticReportRow row;
    row.query_id = query_id;
    row.rounds = static_cast<int>(trace.rounds.size());
    row.completeness =
        reasoning_completeness(verdict, judgment_it->second.aspects);
    row.overall_quality = verdict.overall_quality;
    row.aer = aer(verdict.overall_quality, row.rounds, gamma);
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty()) {
    throw Error("agentic report needs at least one query");
  }
  double n = static_cast<double>(report.rows.size());
  for (const AgenticReportRow& row : report.rows) {
    report.mean_rounds += row.rounds / n;
    report.mean_completeness += row.completeness / n;
    report.mean_overall_quality += row.overall_quality / n;
    report.mean_aer += row.aer / n;
  }
  return report;
}

/// System prompt for grading an answer against an aspect rubric and a
/// reference answer.
inline std::string build_judge_system_prompt() {
  return
      "You are an expert evaluator grading a research-assistant's answer.\n"
      "\n"
      "For each example you receive:\n"
      "- QUESTION — a query from a specialized StackExchange community.\n"
      "- REASONING_ASPECTS — a list of key sub-questions / premises a "
      "correct answer must address. Each aspect has a short id (a1, a2, "
      "...). Treat the list as the authoritative rubric.\n"
      "- REFERENCE_ANSWER — a citation-grounded answer produced from the "
      "gold evidence passages. This is the high-quality target.\n"
      "- SYSTEM_ANSWER — the answer produced by the system under "
      "evaluation.\n"
      "\n"
      "Step 1 — score EACH aspect on a 3-point coverage scale:\n"
      "- 1.0: fully addressed with specific, correctly-supported claims\n"
      "- 0.5: partially addressed (mentioned but shallow, OR addressed "
      "with notable inaccuracies, OR right idea but missing critical "
      "detail)\n"
      "- 0.0: not addressed, off-topic, or factually wrong\n"
      "You MUST grade every aspect id given in REASONING_ASPECTS — do not "
      "skip any.\n"
      "\n"
      "Step 2 — assign one holistic overall_quality score (1-5 integer) "
      "for SYSTEM_ANSWER relative to REFERENCE_ANSWER (correctness, "
      "structure, citations, coherence, no hallucinations):\n"
      "- 5: matches or exceeds REFERENCE_ANSWER\n"
      "- 4: slightly worse but still correct and well-structured\n"
      "- 3: correct but less thorough or less clearly structured\n"
      "- 2: partially correct with notable issues\n"
      "- 1: mostly wrong or hallucinated\n"
      "\n"
      "Return STRICTLY a single JSON object, no markdown fences, no prose "
      "outside the object:\n"
      "{\"aspect_scores\": {\"a1\": <0|0.5|1>, \"a2\": <0|0.5|1>, ...}, "
      "\"overall_quality\": <int 1-5>, \"justification\": \"<1-2 sentence "
      "rationale>\"}";
}

/// User message carrying one grading instance.
inline std::string build_judge_user_prompt(const std::string& question,
                                           const AspectSet& aspects,
                                           const std::string& reference_answer,
                                           const std::string& system_answer) {
  std::string aspects_block;
  for (const Aspect& aspect : aspects.aspects()) {
    aspects_block += "- " + aspect.aspect_id + ": " + aspect.description +
                     ", w=" + std::to_string(aspect.likert) + "\n";
  }
  if (!aspects_block.empty()) aspects_block.pop_back();
  return "QUESTION:\n" + question + "\n\nREASONING_ASPECTS:\n" +
         aspects_block + "\n\nREFERENCE_ANSWER:\n" + reference_answer +
         "\n\nSYSTEM_ANSWER:\n" + system_answer;
}

}  // namespace aeval::judge
