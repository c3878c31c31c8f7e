// Tests for the remote-agent wire protocol: prompt construction, response
// parsing, tool-call handling, retries, and full scripted episodes driven
// through an in-process transport.

#include "aeval/remote_agent.hpp"

#include <gtest/gtest.h>

#include <deque>
#include <string>
#include <vector>

#include "aeval/errors.hpp"
#include "aeval/harness.hpp"

namespace {

using aeval::AgentProtocolError;
using aeval::BackendUnavailable;
using aeval::ProtocolConfig;
using aeval::Round;
using aeval::SearchTrace;
using aeval::StopReason;
using aeval::TransportError;
using aeval::harness::Retriever;
using aeval::harness::SearchResult;
using aeval::io::json;
using aeval::remote::build_answer_prompt;
using aeval::remote::build_search_prompt;
using aeval::remote::parse_final_response;
using aeval::remote::ParsedAnswer;
using aeval::remote::RemoteAgent;
using aeval::remote::RemoteAgentConfig;
using aeval::remote::Transport;

json tool_call_response(const std::string& call_id,
                        const std::string& arguments,
                        const std::string& name = "search") {
  return {{"choices",
           {{{"message",
              {{"role", "assistant"},
               {"content", nullptr},
               {"tool_calls",
                {{{"id", call_id},
                  {"type", "function"},
                  {"function",
                   {{"name", name}, {"arguments", arguments}}}}}}}}}}}};
}

json content_response(const std::string& content) {
  return {{"choices",
           {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
}

/// Transport double that replays canned responses and captures requests.
struct ScriptedTransport {
  std::deque<json> responses;
  std::vector<json> requests;

  Transport as_transport() {
    return [this](const json& request) {
      requests.push_back(request);
      if (responses.empty()) {
        throw TransportError("scripted transport exhausted");
      }
      json response = responses.front();
      responses.pop_front();
      return response;
    };
  }
};

Retriever stub_retriever(std::vector<SearchResult> results) {
  return [results = std::move(results)](const std::string&, int k) {
    auto out = results;
    if (out.size() > static_cast<std::size_t>(k)) out.resize(k);
    return out;
  };
}

RemoteAgentConfig test_config() {
  RemoteAgentConfig config;
  config.model = "test-model";
  config.sleeper = [](int) {};
  return config;
}

ProtocolConfig adaptive_config() {
  ProtocolConfig config;
  config.mode = ProtocolConfig::Mode::adaptive;
  return config;
}

ProtocolConfig fixed_config(int rounds) {
  ProtocolConfig config;
  config.mode = ProtocolConfig::Mode::fixed;
  config.fixed_rounds = rounds;
  return config;
}

TEST(FinalResponseParsing, StandardAnswerConfidenceForm) {
  ParsedAnswer parsed = parse_final_response(
      "Answer: Flash memory wears out [d3].\nConfidence: 85%");
  EXPECT_EQ(parsed.answer, "Flash memory wears out [d3].");
  EXPECT_DOUBLE_EQ(parsed.confidence, 0.85);
}

TEST(FinalResponseParsing, CaseInsensitiveMarkers) {
  ParsedAnswer parsed =
      parse_final_response("ANSWER: yes\nCONFIDENCE: 100%");
  EXPECT_EQ(parsed.answer, "yes");
  EXPECT_DOUBLE_EQ(parsed.confidence, 1.0);
}

TEST(FinalResponseParsing, BareNumberOverOneTreatedAsPercent) {
  ParsedAnswer parsed = parse_final_response("Answer: a\nConfidence: 70");
  EXPECT_DOUBLE_EQ(parsed.confidence, 0.7);
}

TEST(FinalResponseParsing, FractionKeptAsIs) {
  ParsedAnswer parsed = parse_final_response("Answer: a\nConfidence: 0.9");
  EXPECT_DOUBLE_EQ(parsed.confidence, 0.9);
}

TEST(FinalResponseParsing, MissingMarkersFallBackToWholeText) {
  ParsedAnswer parsed = parse_final_response("just some prose");
  EXPECT_EQ(parsed.answer, "just some prose");
  EXPECT_DOUBLE_EQ(parsed.confidence, 0.0);
}

TEST(FinalResponseParsing, ConfidenceBeforeAnswerIgnoredForSlicing) {
  ParsedAnswer parsed =
      parse_final_response("Confidence: 50%\nAnswer: tail answer");
  EXPECT_EQ(parsed.answer, "tail answer");
  EXPECT_DOUBLE_EQ(parsed.confidence, 0.5);
}

TEST(Prompts, SearchPromptEmbedsQuestionAndFormat) {
  std::string prompt = build_search_prompt("Why do drives fail?");
  EXPECT_EQ(prompt.rfind("Question: Why do drives fail?", 0), 0u);
  EXPECT_NE(prompt.find("research agent"), std::string::npos);
  EXPECT_NE(prompt.find("only use the search tool once"), std::string::npos);
  EXPECT_NE(prompt.find("Answer: {"), std::string::npos);
  EXPECT_NE(prompt.find("Confidence: {"), std::string::npos);
}

TEST(Prompts, AnswerPromptDeduplicatesEvidence) {
  Round r1;
  r1.round = 1;
  r1.results = {{"d1", 2.0, "first text", false},
                {"d2", 1.0, "second text", false}};
  Round r2;
  r2.round = 2;
  r2.results = {{"d1", 2.0, "first text", false},
                {"d3", 1.0, "third text", false}};
  std::string prompt = build_answer_prompt("q?", {r1, r2});

  EXPECT_NE(prompt.find("Question: q?"), std::string::npos);
  EXPECT_NE(prompt.find("Evidence documents:"), std::string::npos);
  // d1 appears exactly once.
  std::size_t first = prompt.find("Docid: d1\n");
  ASSERT_NE(first, std::string::npos);
  EXPECT_EQ(prompt.find("Docid: d1\n", first + 1), std::string::npos);
  EXPECT_NE(prompt.find("Docid: d3\n"), std::string::npos);
}

TEST(RemoteEpisode, AdaptiveSearchThenStop) {
  ScriptedTransport transport;
  transport.responses.push_back(
      tool_call_response("c1", R"({"query":"flash memory"})"));
  transport.responses.push_back(content_response(
      "Answer: Flash wears out [d1].\nConfidence: 90%"));

  RemoteAgent agent(transport.as_transport(), test_config());
  auto retriever = stub_retriever({{"d1", 2.0, "flash wears"},
                                   {"d2", 1.0, "other"}});
  SearchTrace trace = aeval::harness::run_adaptive(
      agent, retriever, "q01", "Why does flash wear?", adaptive_config());

  EXPECT_EQ(trace.rounds.size(), 1u);
  EXPECT_EQ(trace.rounds[0].issued_query, "flash memory");
  EXPECT_EQ(trace.stop_reason, StopReason::agent_stop);
  EXPECT_EQ(trace.final_answer, "Flash wears out [d1].");
  EXPECT_DOUBLE_EQ(trace.final_confidence, 0.9);

  // Wire log: two requests, two responses, in order.
  auto exchanges = agent.take_exchanges();
  ASSERT_EQ(exchanges.size(), 4u);
  EXPECT_EQ(exchanges[0].direction, "request");
  EXPECT_EQ(exchanges[1].direction, "response");
  EXPECT_EQ(exchanges[2].direction, "request");
  EXPECT_EQ(exchanges[3].direction, "response");

  // First request: opening prompt plus the search tool schema.
  ASSERT_EQ(transport.requests.size(), 2u);
  const json& first = transport.requests[0];
  EXPECT_EQ(first.at("model"), "test-model");
  ASSERT_EQ(first.at("messages").size(), 1u);
  EXPECT_EQ(first.at("messages").at(0).at("role"), "user");
  std::string opening =
      first.at("messages").at(0).at("content").get<std::string>();
  EXPECT_NE(opening.find("Why does flash wear?"), std::string::npos);
  EXPECT_EQ(first.at("tools").at(0).at("function").at("name"), "search");

  // Second request: assistant tool call followed by the tool result.
  const json& second = transport.requests[1];
  ASSERT_EQ(second.at("messages").size(), 3u);
  EXPECT_EQ(second.at("messages").at(1).at("role"), "assistant");
  EXPECT_EQ(second.at("messages").at(2).at("role"), "tool");
  EXPECT_EQ(second.at("messages").at(2).at("tool_call_id"), "c1");
  std::string tool_content =
      second.at("messages").at(2).at("content").get<std::string>();
  EXPECT_NE(tool_content.find("Docid: d1"), std::string::npos);
  EXPECT_NE(tool_content.find("flash wears"), std::string::npos);
}

TEST(RemoteEpisode, FixedRoundForcedAnswerUsesAnswerPrompt) {
  ScriptedTransport transport;
  transport.responses.push_back(
      tool_call_response("c1", R"({"query":"spinning platters"})"));
  transport.responses.push_back(content_response(
      "Answer: Disks spin [d2].\nConfidence: 60%"));

  RemoteAgent agent(transport.as_transport(), test_config());
  auto retriever = stub_retriever({{"d2", 1.5, "platters spin"}});
  SearchTrace trace = aeval::harness::run_fixed_round(
      agent, retriever, "q02", "How do disks work?", fixed_config(1));

  EXPECT_EQ(trace.rounds.size(), 1u);
  EXPECT_TRUE(trace.rounds[0].has_answer);
  EXPECT_EQ(trace.final_answer, "Disks spin [d2].");

  ASSERT_EQ(transport.requests.size(), 2u);
  const json& second = transport.requests[1];
  // tool result + forced answer prompt were both appended.
  ASSERT_EQ(second.at("messages").size(), 4u);
  EXPECT_EQ(second.at("messages").at(2).at("role"), "tool");
  EXPECT_EQ(second.at("messages").at(3).at("role"), "user");
  std::string forced =
      second.at("messages").at(3).at("content").get<std::string>();
  EXPECT_NE(forced.find("Evidence documents:"), std::string::npos);
  EXPECT_NE(forced.find("Docid: d2"), std::string::npos);
  EXPECT_NE(forced.find("How do disks work?"), std::string::npos);
}

TEST(RemoteEpisode, UnknownToolIsAProtocolError) {
  ScriptedTransport transport;
  transport.responses.push_back(
      tool_call_response("c1", R"({"query":"x"})", "delete_everything"));
  RemoteAgent agent(transport.as_transport(), test_config());
  auto retriever = stub_retriever({});
  EXPECT_THROW(aeval::harness::run_adaptive(agent, retriever, "q", "q?",
                                            adaptive_config()),
               AgentProtocolError);
}

TEST(RemoteEpisode, MalformedArgumentsRetriedOnceThenProceeds) {
  ScriptedTransport transport;
  transport.responses.push_back(
      tool_call_response("c1", "this is not json"));
  transport.responses.push_back(
      tool_call_response("c2", R"({"query":"fixed up"})"));
  transport.responses.push_back(
      content_response("Answer: ok\nConfidence: 50%"));

  RemoteAgent agent(transport.as_transport(), test_config());
  auto retriever = stub_retriever({{"d1", 1.0, "text"}});
  SearchTrace trace = aeval::harness::run_adaptive(
      agent, retriever, "q", "q?", adaptive_config());

  EXPECT_EQ(trace.rounds.size(), 1u);
  EXPECT_EQ(trace.rounds[0].issued_query, "fixed up");
  auto warnings = agent.take_warnings();
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("malformed tool call"), std::string::npos);

  // The retry carried the error back to the model as a tool message.
  ASSERT_EQ(transport.requests.size(), 3u);
  const json& retry = transport.requests[1];
  const json& last_message =
      retry.at("messages").at(retry.at("messages").size() - 1);
  EXPECT_EQ(last_message.at("role"), "tool");
  EXPECT_NE(last_message.at("content").get<std::string>().find("ERROR"),
            std::string::npos);
}

TEST(RemoteEpisode, MalformedBudgetExhaustionFails) {
  ScriptedTransport transport;
  for (int i = 0; i < 5; ++i) {
    transport.responses.push_back(
        tool_call_response("c" + std::to_string(i), "broken"));
  }
  RemoteAgentConfig config = test_config();
  config.max_malformed = 2;
  RemoteAgent agent(transport.as_transport(), config);
  auto retriever = stub_retriever({});
  EXPECT_THROW(aeval::harness::run_adaptive(agent, retriever, "q", "q?",
                                            adaptive_config()),
               AgentProtocolError);
}

TEST(RemoteEpisode, TransientTransportFailuresAreRetriedWithBackoff) {
  int failures_left = 2;
  std::vector<int> sleeps;
  Transport flaky = [&failures_left](const json&) -> json {
    if (failures_left > 0) {
      --failures_left;
      throw TransportError("connection reset");
    }
    return content_response("Answer: recovered\nConfidence: 40%");
  };
  RemoteAgentConfig config = test_config();
  config.sleeper = [&sleeps](int ms) { sleeps.push_back(ms); };
  RemoteAgent agent(flaky, config);

  ProtocolConfig protocol = adaptive_config();
  std::vector<Round> one_round(1);
  std::string question = "q?";
  aeval::harness::AgentContext context{question, one_round, 2, false,
                                       protocol};
  auto action = agent.next_action(context);
  ASSERT_TRUE(
      std::holds_alternative<aeval::harness::AnswerAction>(action));
  EXPECT_EQ(std::get<aeval::harness::AnswerAction>(action).answer,
            "recovered");
  EXPECT_EQ(sleeps, (std::vector<int>{250, 500}));
}

TEST(RemoteEpisode, PersistentTransportFailureBecomesBackendUnavailable) {
  Transport dead = [](const json&) -> json {
    throw TransportError("no route to host");
  };
  RemoteAgentConfig config = test_config();
  RemoteAgent agent(dead, config);

  ProtocolConfig protocol = adaptive_config();
  std::vector<Round> no_rounds;
  std::string question = "q?";
  aeval::harness::AgentContext context{question, no_rounds, 1, false,
                                       protocol};
  EXPECT_THROW(agent.next_action(context), BackendUnavailable);
}

TEST(RemoteEpisode, MissingChoicesIsAProtocolError) {
  ScriptedTransport transport;
  transport.responses.push_back(json{{"unexpected", "shape"}});
  RemoteAgent agent(transport.as_transport(), test_config());
  ProtocolConfig protocol = adaptive_config();
  std::vector<Round> no_rounds;
  std::string question = "q?";
  aeval::harness::AgentContext context{question, no_rounds, 1, false,
                                       protocol};
  EXPECT_THROW(agent.next_action(context), AgentProtocolError);
}

TEST(RemoteEpisode, ExchangeLogAttachesToTraceAndRoundTrips) {
  ScriptedTransport transport;
  transport.responses.push_back(
      tool_call_response("c1", R"({"query":"anything"})"));
  transport.responses.push_back(
      content_response("Answer: done\nConfidence: 30%"));
  RemoteAgent agent(transport.as_transport(), test_config());
  auto retriever = stub_retriever({{"d1", 1.0, "text"}});
  SearchTrace trace = aeval::harness::run_adaptive(
      agent, retriever, "q", "q?", adaptive_config());
  trace.exchanges = agent.take_exchanges();

  std::string rendered = aeval::io::render_trace(trace);
  SearchTrace parsed = aeval::io::parse_trace(rendered);
  EXPECT_EQ(parsed, trace);
  ASSERT_EQ(parsed.exchanges.size(), 4u);
  // Payloads are verbatim JSON (parseable, bytes preserved).
  EXPECT_EQ(parsed.exchanges[0].payload, trace.exchanges[0].payload);
  EXPECT_NO_THROW(json::parse(parsed.exchanges[0].payload));
}

}  // namespace
