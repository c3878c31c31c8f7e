#pragma once

#include <cctype>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "aeval/bm25.hpp"
#include "aeval/core.hpp"
#include "aeval/errors.hpp"
#include "aeval/trace.hpp"

namespace aeval::harness {

struct SearchAction {
  std::string query;
};

struct AnswerAction {
  std::string answer;
  double confidence = 0.0;
};

using AgentAction = std::variant<SearchAction, AnswerAction>;

/// Everything an agent may look at when choosing its next action. When
/// must_answer is set the protocol requires an AnswerAction (fixed mode asks
/// after every round; adaptive mode asks once the round cap is reached).
struct AgentContext {
  const std::string& question;
  const std::vector<Round>& rounds;  // completed rounds, oldest first
  int round_number = 1;              // 1-based number of the upcoming round
  bool must_answer = false;
  const ProtocolConfig& config;
};

/// Behavioral contract: one action per turn — a single search or an answer.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentAction next_action(const AgentContext& context) = 0;
};

/// A retriever hands back scored documents with their full text; the
/// harness owns snippet truncation.
struct SearchResult {
  std::string doc_id;
  double score = 0.0;
  std::string text;
};

using Retriever =
    std::function<std::vector<SearchResult>(const std::string& query, int k)>;

inline Retriever make_bm25_retriever(const bm25::InvertedIndex& index) {
  return [&index](const std::string& query, int k) {
    auto run = index.search("search", query, k);
    std::vector<SearchResult> results;
    results.reserve(run.size());
    for (const auto& d : run.items()) {
      const bm25::DocRecord* doc = index.find_doc(d.doc_id);
      results.push_back(
          {d.doc_id, d.score, doc != nullptr ? doc->text : std::string()});
    }
    return results;
  };
}

/// Token-counting scheme: returns the byte offset just past the budget-th
/// token, or npos when the text fits the budget.
using TokenCutter = std::function<std::size_t(std::string_view, int)>;

/// Default scheme: tokens are maximal runs of non-whitespace bytes.
inline std::size_t whitespace_token_cut(std::string_view text, int budget) {
  int count = 0;
  std::size_t cut = std::string_view::npos;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    if (i >= text.size()) break;
    while (i < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    ++count;
    if (count == budget) {
      cut = i;  // provisional: only a real cut if another token follows
    } else if (count > budget) {
      return cut;
    }
  }
  return std::string_view::npos;
}

struct Snippet {
  std::string text;
  bool truncated = false;
};

/// Cuts text at a whole-token boundary after `budget` tokens under the given
/// counting scheme (whitespace tokens by default).
inline Snippet truncate_snippet(std::string_view text, int budget,
                                const TokenCutter& cutter = {}) {
  if (budget < 1) throw Error("snippet budget must be positive");
  std::size_t cut =
      cutter ? cutter(text, budget) : whitespace_token_cut(text, budget);
  if (cut == std::string_view::npos) {
    return {std::string(text), false};
  }
  return {std::string(text.substr(0, cut)), true};
}

namespace detail {

inline Round execute_round(const Retriever& retriever,
                           const SearchAction& action, int round_number,
                           const ProtocolConfig& config,
                           const TokenCutter& cutter,
                           std::vector<std::string>& warnings) {
  std::vector<SearchResult> results;
  try {
    results = retriever(action.query, config.per_round_k);
  } catch (const std::exception& e) {
    throw RetrievalError(round_number, e.what());
  }
  if (results.size() > static_cast<std::size_t>(config.per_round_k)) {
    warnings.push_back("round " + std::to_string(round_number) +
                       ": retriever returned more than " +
                       std::to_string(config.per_round_k) +
                       " documents; extra results dropped");
    results.resize(config.per_round_k);
  }

  Round round;
  round.round = round_number;
  round.issued_query = action.query;
  std::unordered_set<std::string> seen;
  bool duplicates = false;
  for (auto& r : results) {
    if (!seen.insert(r.doc_id).second) {
      duplicates = true;
      continue;
    }
    Snippet snippet = truncate_snippet(r.text, config.snippet_budget, cutter);
    round.results.push_back(
        {std::move(r.doc_id), r.score, std::move(snippet.text),
         snippet.truncated});
  }
  if (duplicates) {
    warnings.push_back("round " + std::to_string(round_number) +
                       ": duplicate documents within the round collapsed");
  }
  if (round.results.size() < static_cast<std::size_t>(config.per_round_k)) {
    warnings.push_back("round " + std::to_string(round_number) +
                       " returned fewer than " +
                       std::to_string(config.per_round_k) + " documents");
  }
  return round;
}

inline AnswerAction demand_answer(Agent& agent, const AgentContext& context) {
  AgentAction action = agent.next_action(context);
  if (auto* answer = std::get_if<AnswerAction>(&action)) {
    return std::move(*answer);
  }
  throw ProtocolViolation("agent searched when the protocol required an "
                          "answer (round " +
                          std::to_string(context.round_number) + ")");
}

}  // namespace detail

/// Exactly config.fixed_rounds search rounds; after each round the agent is
/// asked for an answer conditioned on everything retrieved so far.
inline SearchTrace run_fixed_round(Agent& agent, const Retriever& retriever,
                                   const std::string& query_id,
                                   const std::string& question,
                                   const ProtocolConfig& config,
                                   const TokenCutter& cutter = {}) {
  config.validate();
  if (config.mode != ProtocolConfig::Mode::fixed) {
    throw ProtocolViolation("run_fixed_round requires fixed mode");
  }
  SearchTrace trace;
  trace.query_id = query_id;
  trace.question = question;
  trace.config = config;
  for (int r = 1; r <= config.fixed_rounds; ++r) {
    AgentContext search_turn{question, trace.rounds, r, false, config};
    AgentAction action = agent.next_action(search_turn);
    auto* search = std::get_if<SearchAction>(&action);
    if (search == nullptr) {
      throw ProtocolViolation(
          "agent answered on a search turn (round " + std::to_string(r) +
          " of " + std::to_string(config.fixed_rounds) + ")");
    }
    trace.rounds.push_back(detail::execute_round(
        retriever, *search, r, config, cutter, trace.warnings));
    AgentContext answer_turn{question, trace.rounds, r, true, config};
    AnswerAction answer = detail::demand_answer(agent, answer_turn);
    Round& round = trace.rounds.back();
    round.has_answer = true;
    round.answer = std::move(answer.answer);
    round.confidence = answer.confidence;
  }
  trace.stop_reason = StopReason::fixed_budget;
  trace.final_answer = trace.rounds.back().answer;
  trace.final_confidence = trace.rounds.back().confidence;
  return trace;
}

/// The agent decides when to stop; at least one search round is required,
/// and the round cap forces a final answer turn when reached.
inline SearchTrace run_adaptive(Agent& agent, const Retriever& retriever,
                                const std::string& query_id,
                                const std::string& question,
                                const ProtocolConfig& config,
                                const TokenCutter& cutter = {}) {
  config.validate();
  if (config.mode != ProtocolConfig::Mode::adaptive) {
    throw ProtocolViolation("run_adaptive requires adaptive mode");
  }
  SearchTrace trace;
  trace.query_id = query_id;
  trace.question = question;
  trace.config = config;
  while (static_cast<int>(trace.rounds.size()) < config.round_cap) {
    int next_round = static_cast<int>(trace.rounds.size()) + 1;
    AgentContext turn{question, trace.rounds, next_round, false, config};
    AgentAction action = agent.next_action(turn);
    if (auto* answer = std::get_if<AnswerAction>(&action)) {
      if (trace.rounds.empty()) {
        throw ProtocolViolation(
            "agent answered before performing any search round");
      }
      trace.stop_reason = StopReason::agent_stop;
      trace.final_answer = std::move(answer->answer);
      trace.final_confidence = answer->confidence;
      return trace;
    }
    trace.rounds.push_back(detail::execute_round(
        retriever, std::get<SearchAction>(action), next_round, config, cutter,
        trace.warnings));
  }
  AgentContext forced{question, trace.rounds,
                      static_cast<int>(trace.rounds.size()) + 1, true, config};
  AnswerAction answer = detail::demand_answer(agent, forced);
  trace.stop_reason = StopReason::round_cap;
  trace.final_answer = std::move(answer.answer);
  trace.final_confidence = answer.confidence;
  return trace;
}

/// Concatenates per-round results (rounds 1..upto_round), drops cross-round
/// duplicates keeping the first occurrence, and assigns synthetic descending
/// scores by position.
inline RankedRun cumulative_ranking(const SearchTrace& trace,
                                    int upto_round) {
  if (upto_round < 0 ||
      upto_round > static_cast<int>(trace.rounds.size())) {
    throw RankOutOfRange("upto_round " + std::to_string(upto_round) +
                         " outside trace with " +
                         std::to_string(trace.rounds.size()) + " rounds");
  }
  std::vector<std::string> docs;
  std::unordered_set<std::string> seen;
  for (int r = 0; r < upto_round; ++r) {
    for (const RetrievedDoc& doc : trace.rounds[r].results) {
      if (seen.insert(doc.doc_id).second) docs.push_back(doc.doc_id);
    }
  }
  std::vector<ScoredDoc> items;
  items.reserve(docs.size());
  double total = static_cast<double>(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    items.push_back({std::move(docs[i]), total - static_cast<double>(i)});
  }
  return RankedRun::from_ordered(trace.query_id, std::move(items));
}

/// Deterministic test double: replays a fixed action list. On a forced
/// answer turn it consumes the next action only if that action is an
/// answer; otherwise it synthesizes an empty answer and leaves the script
/// untouched. A non-forced turn with an exhausted script throws
/// ScriptExhausted unless the agent was built with loop = true.
class ScriptedAgent : public Agent {
 public:
  explicit ScriptedAgent(std::vector<AgentAction> script, bool loop = false)
      : script_(std::move(script)), loop_(loop) {}

  AgentAction next_action(const AgentContext& context) override {
    if (position_ >= script_.size() && loop_ && !script_.empty()) {
      position_ = 0;
    }
    if (context.must_answer) {
      if (position_ < script_.size() &&
          std::holds_alternative<AnswerAction>(script_[position_])) {
        return script_[position_++];
      }
      return AnswerAction{"", 0.0};
    }
    if (position_ >= script_.size()) {
      throw ScriptExhausted("script exhausted before round " +
                            std::to_string(context.round_number));
    }
    return script_[position_++];
  }

  std::size_t consumed() const { return position_; }

 private:
  std::vector<AgentAction> script_;
  std::size_t position_ = 0;
  bool loop_ = false;
};

/// Baseline agent that re-issues the original question every round. In
/// adaptive mode it stops after `answer_after` rounds; answers cite the
/// retrieved doc ids.
class EchoAgent : public Agent {
 public:
  explicit EchoAgent(int answer_after = 3) : answer_after_(answer_after) {}

  AgentAction next_action(const AgentContext& context) override {
    bool wants_to_stop =
        context.config.mode == ProtocolConfig::Mode::adaptive &&
        static_cast<int>(context.rounds.size()) >= answer_after_;
    if (context.must_answer || wants_to_stop) {
      return AnswerAction{compose_answer(context.rounds), 0.5};
    }
    return SearchAction{context.question};
  }

 private:
  static std::string compose_answer(const std::vector<Round>& rounds) {
    std::string answer = "Answer derived from the retrieved evidence";
    std::unordered_set<std::string> seen;
    int cited = 0;
    for (const Round& round : rounds) {
      for (const RetrievedDoc& doc : round.results) {
        if (cited >= 10) break;
        if (seen.insert(doc.doc_id).second) {
          answer += " [" + doc.doc_id + "]";
          ++cited;
        }
      }
    }
    answer += ".";
    return answer;
  }

  int answer_after_;
};

}  // namespace aeval::harness
