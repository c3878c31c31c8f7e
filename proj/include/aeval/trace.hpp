#pragma once

#include <string>
#include <vector>

#include "aeval/errors.hpp"
#include "aeval/version.hpp"

namespace aeval {

/// One search result as presented to the agent: score from the retriever and
/// a snippet already cut to the episode's token budget.
struct RetrievedDoc {
  std::string doc_id;
  double score = 0.0;
  std::string snippet;
  bool truncated = false;

  friend bool operator==(const RetrievedDoc&, const RetrievedDoc&) = default;
};

/// One search round: the query the agent issued, what came back, and the
/// answer produced after the round if the protocol asked for one.
struct Round {
  int round = 0;  // 1-based
  std::string issued_query;
  std::vector<RetrievedDoc> results;
  bool has_answer = false;
  std::string answer;
  double confidence = 0.0;

  friend bool operator==(const Round&, const Round&) = default;
};

enum class StopReason { fixed_budget, agent_stop, round_cap };

inline const char* stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::fixed_budget:
      return "fixed-budget";
    case StopReason::agent_stop:
      return "agent-stop";
    case StopReason::round_cap:
      return "round-cap";
  }
  return "unknown";
}

inline StopReason parse_stop_reason(const std::string& name) {
  if (name == "fixed-budget") return StopReason::fixed_budget;
  if (name == "agent-stop") return StopReason::agent_stop;
  if (name == "round-cap") return StopReason::round_cap;
  throw Error("unknown stop reason: " + name);
}

/// Interaction budgets for one episode.
struct ProtocolConfig {
  enum class Mode { fixed, adaptive };

  Mode mode = Mode::fixed;
  int fixed_rounds = 3;     // exactly this many rounds in fixed mode, 1..3
  int round_cap = 100;      // hard stop for adaptive mode
  int per_round_k = 5;      // documents returned per search
  int snippet_budget = 2048;  // token budget per presented snippet

  void validate() const {
    if (mode == Mode::fixed &&
        (fixed_rounds < 1 || fixed_rounds > 3)) {
      throw InvalidRounds("fixed_rounds " + std::to_string(fixed_rounds) +
                          " outside {1, 2, 3}");
    }
    if (round_cap < 1) {
      throw InvalidRounds("round_cap must be positive");
    }
    if (per_round_k < 1) {
      throw Error("per_round_k must be positive");
    }
    if (snippet_budget < 1) {
      throw Error("snippet_budget must be positive");
    }
  }

  friend bool operator==(const ProtocolConfig&,
                         const ProtocolConfig&) = default;
};

inline const char* mode_name(ProtocolConfig::Mode mode) {
  return mode == ProtocolConfig::Mode::fixed ? "fixed" : "adaptive";
}

inline ProtocolConfig::Mode parse_mode(const std::string& name) {
  if (name == "fixed") return ProtocolConfig::Mode::fixed;
  if (name == "adaptive") return ProtocolConfig::Mode::adaptive;
  throw Error("unknown protocol mode: " + name);
}

/// One raw wire message exchanged with a remote agent, stored verbatim so an
/// episode can be replayed.
struct Exchange {
  std::string direction;  // "request" or "response"
  std::string payload;    // verbatim JSON text

  friend bool operator==(const Exchange&, const Exchange&) = default;
};

/// Complete record of one agentic search episode.
struct SearchTrace {
  int version = kTraceFormatVersion;
  std::string query_id;
  std::string question;
  ProtocolConfig config;
  std::vector<Round> rounds;
  std::vector<Exchange> exchanges;  // empty for in-process agents
  StopReason stop_reason = StopReason::fixed_budget;
  std::string final_answer;
  double final_confidence = 0.0;
  std::vector<std::string> warnings;

  friend bool operator==(const SearchTrace&, const SearchTrace&) = default;
};

}  // namespace aeval
