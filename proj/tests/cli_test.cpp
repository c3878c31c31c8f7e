// End-to-end tests driving the installed CLI binary: every subcommand, the
// resume/sampling behaviors, exit-code policy, and a remote episode against
// an in-process HTTP endpoint.

#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "aeval/corpus_io.hpp"
#include "aeval/manifest.hpp"
#include "aeval/trace.hpp"

#ifndef AEVAL_CLI_PATH
#error "AEVAL_CLI_PATH must point at the CLI binary"
#endif

namespace {

namespace fs = std::filesystem;
using aeval::io::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static std::atomic<int> counter{0};
    dir_ = fs::temp_directory_path() /
           ("aeval_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(dir_);
  }

  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  std::string path(const std::string& name) const {
    return (dir_ / name).string();
  }

  void write_file(const std::string& name, const std::string& content) {
    std::ofstream out(path(name), std::ios::binary | std::ios::trunc);
    out << content;
  }

  std::string slurp(const std::string& full_path) const {
    return aeval::io::detail::slurp(full_path);
  }

  /// Runs the CLI with stdout+stderr captured; returns the exit code.
  int run_cli(const std::string& args, std::string* output = nullptr) {
    std::string capture = path("cli_output.tmp");
    std::string command = std::string(AEVAL_CLI_PATH) + " " + args + " > " +
                          capture + " 2>&1";
    int status = std::system(command.c_str());
    if (output != nullptr) *output = slurp(capture);
    if (status == -1) return -1;
    return WEXITSTATUS(status);
  }

  void write_corpus(const std::string& name = "corpus.jsonl") {
    write_file(
        name,
        R"({"id": "d1", "contents": "a solid state drive stores data in flash memory"})"
        "\n"
        R"({"id": "d2", "contents": "a hard disk drive stores data on spinning magnetic platters"})"
        "\n"
        R"({"id": "d3", "contents": "flash memory wears out after many write cycles"})"
        "\n");
  }

  void write_qrels(const std::string& name = "qrels.jsonl") {
    write_file(
        name,
        R"({"query_id": "q1", "subset": "storage", "query": "how do drives store data?", "aspects": [{"aspect_id": "a1", "description": "storage mechanism", "likert": 5}], "gold": [{"doc_id": "d1", "aspect_id": "a1"}, {"doc_id": "d2", "aspect_id": "a1"}]})"
        "\n"
        R"({"query_id": "q2", "subset": "reliability", "query": "why does flash memory wear out?", "aspects": [{"aspect_id": "a1", "description": "wear mechanism", "likert": 4}, {"aspect_id": "a2", "description": "mitigation", "likert": 2}], "gold": [{"doc_id": "d3", "aspect_id": "a1"}, {"doc_id": "d1", "aspect_id": "a2"}]})"
        "\n");
  }

  void write_shared_script(const std::string& name = "script.jsonl") {
    write_file(name,
               R"({"type": "search", "query": "drive stores data"})"
               "\n"
               R"({"type": "answer", "answer": "round one", "confidence": 0.4})"
               "\n"
               R"({"type": "search", "query": "flash memory"})"
               "\n"
               R"({"type": "answer", "answer": "round two", "confidence": 0.6})"
               "\n"
               R"({"type": "search", "query": "spinning platters"})"
               "\n"
               R"({"type": "answer", "answer": "final [d1]", "confidence": 0.8})"
               "\n");
  }

  std::string build_index(const std::string& corpus = "corpus.jsonl",
                          const std::string& index = "idx.bin") {
    std::string output;
    int code = run_cli("index --corpus " + path(corpus) + " --out " +
                           path(index),
                       &output);
    EXPECT_EQ(code, 0) << output;
    return path(index);
  }

  fs::path dir_;
};

TEST_F(CliTest, IndexReportsCountAndStableDigest) {
  write_corpus();
  std::string first_output;
  ASSERT_EQ(run_cli("index --corpus " + path("corpus.jsonl") + " --out " +
                        path("idx.bin"),
                    &first_output),
            0);
  EXPECT_NE(first_output.find("3 documents"), std::string::npos);
  EXPECT_NE(first_output.find("Index digest: fnv1a64:"), std::string::npos);

  std::string second_output;
  ASSERT_EQ(run_cli("index --corpus " + path("corpus.jsonl") + " --out " +
                        path("idx2.bin"),
                    &second_output),
            0);
  EXPECT_EQ(aeval::digest_file(path("idx.bin")),
            aeval::digest_file(path("idx2.bin")));

  json manifest = json::parse(slurp(path("idx.bin.manifest.json")));
  EXPECT_EQ(manifest.at("command"), "index");
  EXPECT_EQ(manifest.at("config").at("k1"), 0.9);
  EXPECT_EQ(manifest.at("output_paths").at(0), path("idx.bin"));
  EXPECT_EQ(manifest.at("input_digests").size(), 1u);
}

TEST_F(CliTest, IndexMissingCorpusFailsWithDiagnostic) {
  std::string output;
  int code = run_cli("index --corpus " + path("absent.jsonl") + " --out " +
                         path("idx.bin"),
                     &output);
  EXPECT_NE(code, 0);
  EXPECT_NE(output.find("error:"), std::string::npos);
  EXPECT_NE(output.find("absent.jsonl"), std::string::npos);
}

TEST_F(CliTest, EvalStaticPerfectRunScoresHundred) {
  write_qrels();
  write_file("perfect.run",
             "q1 Q0 d1 1 2.000000 t\n"
             "q1 Q0 d2 2 1.000000 t\n"
             "q2 Q0 d3 1 2.000000 t\n"
             "q2 Q0 d1 2 1.000000 t\n");
  std::string output;
  ASSERT_EQ(run_cli("eval-static --run " + path("perfect.run") + " --qrels " +
                        path("qrels.jsonl") + " --out " + path("eval") +
                        " --cutoffs 5",
                    &output),
            0)
      << output;
  json summary = json::parse(slurp(path("eval") + "/summary.json"));
  EXPECT_DOUBLE_EQ(summary.at("overall").at("5").at("alpha_ndcg"), 100.0);
  EXPECT_DOUBLE_EQ(summary.at("overall").at("5").at("a_recall"), 100.0);
  EXPECT_DOUBLE_EQ(summary.at("overall").at("5").at("recall"), 100.0);
  EXPECT_DOUBLE_EQ(summary.at("overall").at("5").at("ndcg"), 100.0);
  EXPECT_NE(output.find("100.00"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("eval") + "/per_query.jsonl"));
  EXPECT_TRUE(fs::exists(path("eval") + "/manifest.json"));
}

TEST_F(CliTest, EvalStaticEmptyRunScoresZeroWithWarning) {
  write_qrels();
  write_file("empty.run", "");
  std::string output;
  ASSERT_EQ(run_cli("eval-static --run " + path("empty.run") + " --qrels " +
                        path("qrels.jsonl") + " --out " + path("eval") +
                        " --cutoffs 5",
                    &output),
            0)
      << output;
  json summary = json::parse(slurp(path("eval") + "/summary.json"));
  EXPECT_DOUBLE_EQ(summary.at("overall").at("5").at("alpha_ndcg"), 0.0);
  EXPECT_DOUBLE_EQ(summary.at("overall").at("5").at("a_recall"), 0.0);
  EXPECT_NE(output.find("is empty"), std::string::npos);
}

TEST_F(CliTest, EvalStaticWorkedFixtureValue) {
  // Single unit-weight aspect with two golds, run hits them at ranks 1 and
  // 3: alpha-nDCG@3 = 0.950234... on the percent scale.
  write_file(
      "one_query.jsonl",
      R"({"query_id": "q1", "subset": "s", "query": "x?", "aspects": [{"aspect_id": "a1", "description": "only", "likert": 5}], "gold": [{"doc_id": "d1", "aspect_id": "a1"}, {"doc_id": "d2", "aspect_id": "a1"}]})"
      "\n");
  write_file("worked.run",
             "q1 Q0 d1 1 3.000000 t\n"
             "q1 Q0 dx 2 2.000000 t\n"
             "q1 Q0 d2 3 1.000000 t\n");
  std::string output;
  ASSERT_EQ(run_cli("eval-static --run " + path("worked.run") + " --qrels " +
                        path("one_query.jsonl") + " --out " + path("eval") +
                        " --cutoffs 3",
                    &output),
            0)
      << output;
  json summary = json::parse(slurp(path("eval") + "/summary.json"));
  EXPECT_NEAR(summary.at("overall").at("3").at("alpha_ndcg").get<double>(),
              95.023441678983569408, 1e-6);
  EXPECT_NE(output.find("95.02"), std::string::npos);
}

TEST_F(CliTest, EvalStaticUnknownRunQueryFails) {
  write_qrels();
  write_file("stray.run", "zz Q0 d1 1 1.000000 t\n");
  std::string output;
  int code = run_cli("eval-static --run " + path("stray.run") + " --qrels " +
                         path("qrels.jsonl") + " --out " + path("eval"),
                     &output);
  EXPECT_NE(code, 0);
  EXPECT_NE(output.find("zz"), std::string::npos);
}

TEST_F(CliTest, RunAgenticScriptedFixedRounds) {
  write_corpus();
  write_qrels();
  write_shared_script();
  std::string index = build_index();

  std::string output;
  ASSERT_EQ(run_cli("run-agentic --queries " + path("qrels.jsonl") +
                        " --index " + index + " --out " + path("run") +
                        " --mode fixed --rounds 3 --script " +
                        path("script.jsonl") + " --threads 1",
                    &output),
            0)
      << output;

  // Two traces with three rounds and per-round answers each.
  for (const char* qid : {"q1", "q2"}) {
    std::string trace_path =
        path("run") + "/traces/" + qid + ".trace.json";
    ASSERT_TRUE(fs::exists(trace_path)) << trace_path;
    aeval::SearchTrace trace = aeval::io::read_trace(trace_path);
    EXPECT_EQ(trace.rounds.size(), 3u);
    for (const auto& round : trace.rounds) {
      EXPECT_TRUE(round.has_answer);
      EXPECT_LE(round.results.size(), 5u);
    }
    EXPECT_EQ(trace.stop_reason, aeval::StopReason::fixed_budget);
  }

  // Cumulative run files at every round cutoff, with the prefix property.
  std::vector<std::vector<aeval::RankedRun>> runs;
  for (int r = 1; r <= 3; ++r) {
    std::string run_path =
        path("run") + "/cumulative_round" + std::to_string(r) + ".run";
    ASSERT_TRUE(fs::exists(run_path));
    runs.push_back(aeval::io::read_run_file(run_path));
    for (const auto& run : runs.back()) {
      EXPECT_LE(run.size(), static_cast<std::size_t>(5 * r));
    }
  }
  for (std::size_t r = 1; r < runs.size(); ++r) {
    ASSERT_EQ(runs[r].size(), runs[r - 1].size());
    for (std::size_t q = 0; q < runs[r].size(); ++q) {
      const auto& shorter = runs[r - 1][q];
      const auto& longer = runs[r][q];
      ASSERT_LE(shorter.size(), longer.size());
      for (std::size_t i = 0; i < shorter.size(); ++i) {
        EXPECT_EQ(shorter.items()[i].doc_id, longer.items()[i].doc_id);
      }
    }
  }

  json manifest = json::parse(slurp(path("run") + "/manifest.json"));
  EXPECT_EQ(manifest.at("command"), "run-agentic");
  EXPECT_EQ(manifest.at("config").at("seed"), 42);
}

TEST_F(CliTest, RunAgenticResumeSkipsCompleteTraces) {
  write_corpus();
  write_qrels();
  write_shared_script();
  std::string index = build_index();
  std::string base_args = "run-agentic --queries " + path("qrels.jsonl") +
                          " --index " + index + " --out " + path("run") +
                          " --mode fixed --rounds 3 --script " +
                          path("script.jsonl") + " --threads 1";
  ASSERT_EQ(run_cli(base_args), 0);

  std::string kept = path("run") + "/traces/q1.trace.json";
  std::string removed = path("run") + "/traces/q2.trace.json";
  std::string kept_bytes = slurp(kept);
  fs::remove(removed);

  std::string output;
  ASSERT_EQ(run_cli(base_args + " --resume", &output), 0) << output;
  EXPECT_NE(output.find("query q1: resumed"), std::string::npos);
  EXPECT_NE(output.find("query q2: 3 rounds"), std::string::npos);
  EXPECT_EQ(slurp(kept), kept_bytes);  // untouched byte-for-byte
  EXPECT_TRUE(fs::exists(removed));
}

TEST_F(CliTest, RunAgenticSamplingSelects175Deterministically) {
  write_corpus();
  std::string index = build_index();
  std::string qrels;
  const char* subsets[] = {"bio", "earth", "econ", "psy",
                           "rob", "so",    "sust"};
  for (const char* subset : subsets) {
    for (int i = 0; i < 40; ++i) {
      char qid[32];
      std::snprintf(qid, sizeof(qid), "%s-%03d", subset, i);
      json record = {
          {"query_id", qid},
          {"subset", subset},
          {"query", std::string("question about flash memory ") + qid},
          {"aspects",
           json::array({{{"aspect_id", "a1"}, {"description", "d"},
                         {"likert", 3}}})},
          {"gold", json::array({{{"doc_id", "d1"}, {"aspect_id", "a1"}}})}};
      qrels += record.dump() + "\n";
    }
  }
  write_file("big_qrels.jsonl", qrels);

  std::string args = "run-agentic --queries " + path("big_qrels.jsonl") +
                     " --index " + index +
                     " --mode fixed --rounds 1 --sample-per-subset 25 "
                     "--seed 7 --out ";
  std::string output;
  ASSERT_EQ(run_cli(args + path("s1"), &output), 0) << output;
  EXPECT_NE(output.find("Selected 175 episodes"), std::string::npos);

  std::size_t trace_count = 0;
  for (const auto& entry :
       fs::directory_iterator(path("s1") + "/traces")) {
    (void)entry;
    ++trace_count;
  }
  EXPECT_EQ(trace_count, 175u);

  ASSERT_EQ(run_cli(args + path("s2")), 0);
  json first = json::parse(slurp(path("s1") + "/episodes.json"));
  json second = json::parse(slurp(path("s2") + "/episodes.json"));
  EXPECT_EQ(first.at("selected"), second.at("selected"));
  EXPECT_EQ(slurp(path("s1") + "/cumulative_round1.run"),
            slurp(path("s2") + "/cumulative_round1.run"));

  // A different seed draws a different sample.
  ASSERT_EQ(run_cli("run-agentic --queries " + path("big_qrels.jsonl") +
                    " --index " + index +
                    " --mode fixed --rounds 1 --sample-per-subset 25 "
                    "--seed 8 --out " +
                    path("s3")),
            0);
  json third = json::parse(slurp(path("s3") + "/episodes.json"));
  EXPECT_NE(first.at("selected"), third.at("selected"));
}

TEST_F(CliTest, RunAgenticFailuresRespectPermitPartial) {
  write_corpus();
  write_qrels();
  // Per-query script that only covers q1; q2 fails with a script error.
  write_file(
      "partial_script.jsonl",
      R"({"query_id": "q1", "actions": [{"type": "search", "query": "drive"}, {"type": "answer", "answer": "ok", "confidence": 0.5}]})"
      "\n");
  std::string index = build_index();
  std::string args = "run-agentic --queries " + path("qrels.jsonl") +
                     " --index " + index + " --out " + path("run") +
                     " --mode fixed --rounds 1 --script " +
                     path("partial_script.jsonl") + " --threads 1";
  std::string output;
  EXPECT_NE(run_cli(args, &output), 0);
  EXPECT_NE(output.find("query q2: error:"), std::string::npos);
  // Partial results were preserved.
  EXPECT_TRUE(fs::exists(path("run") + "/traces/q1.trace.json"));
  json episodes = json::parse(slurp(path("run") + "/episodes.json"));
  EXPECT_EQ(episodes.at("errors").size(), 1u);

  EXPECT_EQ(run_cli(args + " --permit-partial", &output), 0) << output;
}

TEST_F(CliTest, JudgeAggregateJoinsVerdictsAndTraces) {
  write_corpus();
  write_qrels();
  write_shared_script();
  std::string index = build_index();
  ASSERT_EQ(run_cli("run-agentic --queries " + path("qrels.jsonl") +
                    " --index " + index + " --out " + path("run") +
                    " --mode fixed --rounds 3 --script " +
                    path("script.jsonl") + " --threads 1"),
            0);

  // One inline verdict, one raw judge output needing fence recovery.
  write_file(
      "verdicts.jsonl",
      R"({"query_id": "q1", "aspect_scores": {"a1": 1}, "overall_quality": 5, "justification": "good"})"
      "\n"
      R"({"query_id": "q2", "raw": "Here you go:\n```json\n{\"aspect_scores\": {\"a1\": 0.5, \"a2\": 0}, \"overall_quality\": 3, \"justification\": \"partial\"}\n```"})"
      "\n");
  std::string output;
  ASSERT_EQ(run_cli("judge-aggregate --verdicts " + path("verdicts.jsonl") +
                        " --traces " + path("run") + "/traces --qrels " +
                        path("qrels.jsonl") + " --out " + path("judged"),
                    &output),
            0)
      << output;

  json summary = json::parse(slurp(path("judged") + "/summary.json"));
  EXPECT_EQ(summary.at("query_count"), 2);
  EXPECT_DOUBLE_EQ(summary.at("mean_rounds"), 3.0);
  EXPECT_DOUBLE_EQ(summary.at("mean_overall_quality"), 4.0);
  // Both queries ran 3 rounds: mean AER = 4 * e^{-0.1}.
  EXPECT_NEAR(summary.at("mean_aer").get<double>(), 3.6193496721438382927,
              1e-9);
  EXPECT_NE(output.find("Mean"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("judged") + "/report.jsonl"));
  EXPECT_TRUE(fs::exists(path("judged") + "/manifest.json"));
}

TEST_F(CliTest, JudgeAggregateMissingVerdictFailsUnlessPartial) {
  write_corpus();
  write_qrels();
  write_shared_script();
  std::string index = build_index();
  ASSERT_EQ(run_cli("run-agentic --queries " + path("qrels.jsonl") +
                    " --index " + index + " --out " + path("run") +
                    " --mode fixed --rounds 1 --script " +
                    path("script.jsonl") + " --threads 1"),
            0);
  write_file(
      "verdicts.jsonl",
      R"({"query_id": "q1", "aspect_scores": {"a1": 1}, "overall_quality": 4, "justification": "fine"})"
      "\n");
  std::string base = "judge-aggregate --verdicts " + path("verdicts.jsonl") +
                     " --traces " + path("run") + "/traces --qrels " +
                     path("qrels.jsonl") + " --out " + path("judged");
  std::string output;
  EXPECT_NE(run_cli(base, &output), 0);
  EXPECT_NE(output.find("q2"), std::string::npos);
  EXPECT_NE(output.find("no verdict"), std::string::npos);

  ASSERT_EQ(run_cli(base + " --permit-partial", &output), 0) << output;
  json summary = json::parse(slurp(path("judged") + "/summary.json"));
  EXPECT_EQ(summary.at("query_count"), 1);
}

TEST_F(CliTest, PipelineFromIndexToJudgedReport) {
  write_corpus();
  write_qrels();
  write_shared_script();
  std::string index = build_index();
  ASSERT_EQ(run_cli("run-agentic --queries " + path("qrels.jsonl") +
                    " --index " + index + " --out " + path("run") +
                    " --mode fixed --rounds 3 --script " +
                    path("script.jsonl") + " --threads 1"),
            0);
  // Cumulative rankings feed straight back into static evaluation.
  std::string output;
  ASSERT_EQ(run_cli("eval-static --run " + path("run") +
                        "/cumulative_round3.run --qrels " +
                        path("qrels.jsonl") + " --out " + path("eval") +
                        " --cutoffs 5,15",
                    &output),
            0)
      << output;
  json summary = json::parse(slurp(path("eval") + "/summary.json"));
  EXPECT_GT(summary.at("overall").at("15").at("a_recall").get<double>(),
            0.0);
}

TEST_F(CliTest, RemoteEndpointEpisodeOverHttp) {
  write_corpus();
  write_file(
      "one_query.jsonl",
      R"({"query_id": "q1", "subset": "s", "query": "why does flash wear out?", "aspects": [{"aspect_id": "a1", "description": "wear", "likert": 3}], "gold": [{"doc_id": "d3", "aspect_id": "a1"}]})"
      "\n");
  std::string index = build_index();

  httplib::Server server;
  std::atomic<int> requests_seen{0};
  std::string auth_header;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& request, httplib::Response& res) {
                json body = json::parse(request.body);
                if (auth_header.empty() &&
                    request.has_header("Authorization")) {
                  auth_header = request.get_header_value("Authorization");
                }
                const json& last = body.at("messages").back();
                json reply;
                if (last.at("role") == "tool") {
                  reply = {{"choices",
                            {{{"message",
                               {{"role", "assistant"},
                                {"content",
                                 "Answer: flash cells wear out [d3].\n"
                                 "Confidence: 80%"}}}}}}};
                } else {
                  reply = {
                      {"choices",
                       {{{"message",
                          {{"role", "assistant"},
                           {"content", nullptr},
                           {"tool_calls",
                            {{{"id", "call_1"},
                              {"type", "function"},
                              {"function",
                               {{"name", "search"},
                                {"arguments",
                                 R"({"query":"flash memory wear"})"}}}}}}}}}}}};
                }
                ++requests_seen;
                res.set_content(reply.dump(), "application/json");
              });
  int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread server_thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();
  ASSERT_TRUE(server.is_running());

  ::setenv("AEVAL_API_KEY", "sekret", 1);
  std::string output;
  int code = run_cli(
      "run-agentic --queries " + path("one_query.jsonl") + " --index " +
          index + " --out " + path("run") +
          " --mode adaptive --endpoint http://127.0.0.1:" +
          std::to_string(port) + "/v1/chat/completions --model test-model",
      &output);
  ::unsetenv("AEVAL_API_KEY");
  server.stop();
  server_thread.join();

  ASSERT_EQ(code, 0) << output;
  EXPECT_GE(requests_seen.load(), 2);
  EXPECT_EQ(auth_header, "Bearer sekret");

  aeval::SearchTrace trace =
      aeval::io::read_trace(path("run") + "/traces/q1.trace.json");
  EXPECT_EQ(trace.stop_reason, aeval::StopReason::agent_stop);
  EXPECT_EQ(trace.rounds.size(), 1u);
  EXPECT_EQ(trace.rounds[0].issued_query, "flash memory wear");
  EXPECT_EQ(trace.final_answer, "flash cells wear out [d3].");
  ASSERT_EQ(trace.exchanges.size(), 4u);
  EXPECT_EQ(trace.exchanges[0].direction, "request");
  json logged = json::parse(trace.exchanges[0].payload);
  EXPECT_EQ(logged.at("model"), "test-model");
}

}  // namespace
