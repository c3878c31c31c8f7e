#pragma once

#include <cctype>
#include <chrono>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aeval/corpus_io.hpp"
#include "aeval/errors.hpp"
#include "aeval/harness.hpp"
#include "aeval/trace.hpp"

namespace aeval::remote {

/// Sends one chat-completions request body and returns the response body.
/// Implementations throw TransportError for connectivity/HTTP failures.
using Transport = std::function<io::json(const io::json&)>;

/// Instruction block shared by both prompt templates below.
inline constexpr std::string_view kResponseFormatInstructions =
    "Your final response must integrate information from different angles, "
    "supported by multiple sources. You must base your answer solely on the "
    "retrieved evidence documents\xE2\x80\x94"
    "do not use any prior or external knowledge.\n\n"
    "Your final response should be in the following format:\n"
    "Answer: {Your final answer. You should cite your evidence documents "
    "inline by enclosing their docids in square brackets at the end of "
    "sentences. For example, [20].}\n"
    "Confidence: {Your confidence score between 0% and 100% for your "
    "answer}";

/// Opening prompt for a search episode.
inline std::string build_search_prompt(const std::string& question) {
  std::string prompt;
  prompt += "Question: " + question + "\n\n";
  prompt +=
      "You are a research agent. Your task is to answer the question by "
      "actively using the provided Search Tool.\n\n"
      "Use the search tool iteratively for many turns. But in each turn, "
      "you should only use the search tool once.\n\n"
      "Refine your queries based on previous results to broaden coverage "
      "and fill knowledge gaps.\n\n"
      "Stop searching only once you have gathered a comprehensive and "
      "multi-perspective set of evidence.\n\n";
  prompt += kResponseFormatInstructions;
  return prompt;
}

/// Forced-answer prompt: the question plus every document retrieved so far.
/// Evidence keeps first-occurrence order with cross-round duplicates
/// dropped, matching the cumulative-ranking view of the episode.
inline std::string build_answer_prompt(const std::string& question,
                                       const std::vector<Round>& rounds) {
  std::string evidence;
  std::unordered_set<std::string> seen;
  for (const Round& round : rounds) {
    for (const RetrievedDoc& doc : round.results) {
      if (!seen.insert(doc.doc_id).second) continue;
      evidence += "\nDocid: " + doc.doc_id + "\n" + doc.snippet + "\n";
    }
  }
  std::string prompt;
  prompt +=
      "I will give you a question and a set of evidence documents, which "
      "contains helpful information to answer the question.\n\n";
  prompt += "Question: " + question + "\n\n";
  prompt += "Evidence documents: " + evidence + "\n\n";
  prompt += kResponseFormatInstructions;
  return prompt;
}

/// Renders one round's results as the tool message content shown back to
/// the model.
inline std::string render_tool_results(const Round& round) {
  if (round.results.empty()) {
    return "No documents matched the query.";
  }
  std::string content;
  for (const RetrievedDoc& doc : round.results) {
    content += "Docid: " + doc.doc_id + "\n" + doc.snippet + "\n\n";
  }
  return content;
}

/// Final-response shape produced by the model.
struct ParsedAnswer {
  std::string answer;
  double confidence = 0.0;  // normalized to [0, 1]
};

/// Lenient extraction of "Answer: ... Confidence: NN%". Falls back to the
/// whole text with zero confidence when the markers are absent.
inline ParsedAnswer parse_final_response(const std::string& text) {
  auto find_marker = [&text](std::string_view marker) {
    for (std::size_t i = 0; i + marker.size() <= text.size(); ++i) {
      bool match = true;
      for (std::size_t j = 0; j < marker.size(); ++j) {
        char a = static_cast<char>(
            std::tolower(static_cast<unsigned char>(text[i + j])));
        char b = static_cast<char>(
            std::tolower(static_cast<unsigned char>(marker[j])));
        if (a != b) {
          match = false;
          break;
        }
      }
      if (match) return i;
    }
    return std::string::npos;
  };

  std::size_t answer_at = find_marker("answer:");
  std::size_t confidence_at = find_marker("confidence:");

  ParsedAnswer parsed;
  if (answer_at == std::string::npos) {
    parsed.answer = text;
  } else {
    std::size_t begin = answer_at + 7;
    std::size_t end = (confidence_at != std::string::npos &&
                       confidence_at > answer_at)
                          ? confidence_at
                          : text.size();
    parsed.answer = text.substr(begin, end - begin);
  }
  // Trim surrounding whitespace.
  auto is_space = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  };
  while (!parsed.answer.empty() && is_space(parsed.answer.front())) {
    parsed.answer.erase(parsed.answer.begin());
  }
  while (!parsed.answer.empty() && is_space(parsed.answer.back())) {
    parsed.answer.pop_back();
  }

  if (confidence_at != std::string::npos) {
    std::size_t p = confidence_at + 11;
    while (p < text.size() && is_space(text[p])) ++p;
    std::size_t q = p;
    while (q < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[q])) ||
            text[q] == '.')) {
      ++q;
    }
    if (q > p) {
      try {
        double value = std::stod(text.substr(p, q - p));
        bool percent = q < text.size() && text[q] == '%';
        if (percent || value > 1.0) value /= 100.0;
        if (value < 0.0) value = 0.0;
        if (value > 1.0) value = 1.0;
        parsed.confidence = value;
      } catch (const std::exception&) {
        parsed.confidence = 0.0;
      }
    }
  }
  return parsed;
}

struct RemoteAgentConfig {
  std::string model;
  int max_retries = 3;        // transport attempts per request
  int retry_backoff_ms = 250; // doubled after each failed attempt
  int max_malformed = 3;      // malformed tool calls tolerated per episode
  /// Injectable for tests; defaults to a real sleep.
  std::function<void(int /*ms*/)> sleeper;
};

/// Drives one remote model through an episode over the chat-completions
/// wire format. The conversation is extended in place: each new round's
/// results are appended as a tool message before the next request, and a
/// forced-answer turn appends the answer prompt as a user message. Raw
/// request/response bodies are retained for the trace's exchange log.
class RemoteAgent : public harness::Agent {
 public:
  RemoteAgent(Transport transport, RemoteAgentConfig config)
      : transport_(std::move(transport)), config_(std::move(config)) {
    if (!transport_) throw Error("remote agent requires a transport");
  }

  harness::AgentAction next_action(
      const harness::AgentContext& context) override {
    if (messages_.empty()) {
      messages_.push_back(
          {{"role", "user"},
           {"content", build_search_prompt(context.question)}});
    }
    append_new_round_results(context.rounds);
    if (context.must_answer) {
      messages_.push_back(
          {{"role", "user"},
           {"content", build_answer_prompt(context.question,
                                           context.rounds)}});
    }

    int malformed_seen = 0;
    while (true) {
      io::json message = request_completion();
      if (message.contains("tool_calls") && !message["tool_calls"].empty()) {
        const io::json& call = message["tool_calls"].at(0);
        std::string name =
            call.contains("function") && call["function"].contains("name")
                ? call["function"]["name"].get<std::string>()
                : std::string();
        if (name != "search") {
          throw AgentProtocolError("model invoked unknown tool '" + name +
                                   "'");
        }
        std::string call_id =
            call.contains("id") ? call["id"].get<std::string>()
                                : synthetic_call_id();
        std::string query;
        std::string problem;
        if (!call["function"].contains("arguments")) {
          problem = "tool call carried no arguments";
        } else {
          try {
            io::json args = io::json::parse(
                call["function"]["arguments"].get<std::string>());
            if (!args.contains("query") || !args["query"].is_string()) {
              problem = "tool arguments lack a string \"query\" field";
            } else {
              query = args["query"].get<std::string>();
            }
          } catch (const nlohmann::json::exception& e) {
            problem = std::string("tool arguments are not valid JSON: ") +
                      e.what();
          }
        }
        if (!problem.empty()) {
          ++malformed_seen;
          warnings_.push_back("malformed tool call from model (" + problem +
                              "); asked the model to retry");
          if (malformed_seen > config_.max_malformed) {
            throw AgentProtocolError(
                "model exceeded the malformed tool-call budget: " + problem);
          }
          messages_.push_back(message);
          messages_.push_back({{"role", "tool"},
                               {"tool_call_id", call_id},
                               {"content", "ERROR: " + problem +
                                               ". Call the search tool "
                                               "again with JSON arguments "
                                               "{\"query\": \"...\"}."}});
          continue;
        }
        messages_.push_back(message);
        pending_call_id_ = call_id;
        return harness::SearchAction{std::move(query)};
      }

      std::string content;
      if (message.contains("content") && message["content"].is_string()) {
        content = message["content"].get<std::string>();
      }
      if (content.empty()) {
        throw AgentProtocolError(
            "model response carried neither tool calls nor text content");
      }
      messages_.push_back(message);
      ParsedAnswer parsed = parse_final_response(content);
      return harness::AnswerAction{std::move(parsed.answer),
                                   parsed.confidence};
    }
  }

  /// Raw wire log, drained into SearchTrace::exchanges by the caller.
  std::vector<Exchange> take_exchanges() { return std::move(exchanges_); }

  /// Episode-level diagnostics, merged into SearchTrace::warnings.
  std::vector<std::string> take_warnings() { return std::move(warnings_); }

 private:
  void append_new_round_results(const std::vector<Round>& rounds) {
    while (seen_rounds_ < rounds.size()) {
      const Round& round = rounds[seen_rounds_];
      std::string call_id = pending_call_id_.empty() ? synthetic_call_id()
                                                     : pending_call_id_;
      pending_call_id_.clear();
      messages_.push_back({{"role", "tool"},
                           {"tool_call_id", call_id},
                           {"content", render_tool_results(round)}});
      ++seen_rounds_;
    }
  }

  std::string synthetic_call_id() {
    return "call_" + std::to_string(++synthetic_ids_);
  }

  static io::json search_tool_schema() {
    return {
        {"type", "function"},
        {"function",
         {{"name", "search"},
          {"description",
           "Search the document corpus. Returns the top matching documents "
           "with their docids and text."},
          {"parameters",
           {{"type", "object"},
            {"properties",
             {{"query",
               {{"type", "string"},
                {"description", "The search query to issue."}}}}},
            {"required", io::json::array({"query"})}}}}}};
  }

  io::json request_completion() {
    io::json request = {{"model", config_.model},
                        {"messages", messages_},
                        {"tools", io::json::array({search_tool_schema()})}};
    io::json response;
    int backoff = config_.retry_backoff_ms;
    for (int attempt = 1;; ++attempt) {
      exchanges_.push_back({"request", request.dump()});
      try {
        response = transport_(request);
        exchanges_.push_back({"response", response.dump()});
        break;
      } catch (const TransportError& e) {
        exchanges_.push_back(
            {"response", io::json({{"transport_error", e.what()}}).dump()});
        if (attempt >= config_.max_retries) {
          throw BackendUnavailable(
              "endpoint unreachable after " +
              std::to_string(config_.max_retries) +
              " attempts; last error: " + e.what());
        }
        if (config_.sleeper) {
          config_.sleeper(backoff);
        } else {
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        }
        backoff *= 2;
      }
    }
    try {
      return response.at("choices").at(0).at("message");
    } catch (const nlohmann::json::exception&) {
      throw AgentProtocolError(
          "response lacks choices[0].message: " + response.dump());
    }
  }

  Transport transport_;
  RemoteAgentConfig config_;
  io::json messages_ = io::json::array();
  std::vector<Exchange> exchanges_;
  std::vector<std::string> warnings_;
  std::size_t seen_rounds_ = 0;
  std::string pending_call_id_;
  int synthetic_ids_ = 0;
};

}  // namespace aeval::remote
