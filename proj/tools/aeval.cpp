// aeval: aspect-aware retrieval evaluation toolkit.
//
// Subcommands:
//   index            build and persist a BM25 index from a JSONL corpus
//   eval-static      score a run file against aspect qrels
//   run-agentic      execute search episodes and emit traces + cumulative runs
//   judge-aggregate  join judge verdicts with traces into the agentic report
//
// Every invocation writes one manifest describing command, configuration,
// input digests, and output paths.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "aeval/bm25.hpp"
#include "aeval/core.hpp"
#include "aeval/corpus_io.hpp"
#include "aeval/errors.hpp"
#include "aeval/harness.hpp"
#include "aeval/http_transport.hpp"
#include "aeval/judge.hpp"
#include "aeval/manifest.hpp"
#include "aeval/metrics.hpp"
#include "aeval/parallel.hpp"
#include "aeval/remote_agent.hpp"
#include "aeval/sampling.hpp"
#include "aeval/trace.hpp"
#include "aeval/version.hpp"

namespace fs = std::filesystem;
using aeval::io::json;

namespace {

std::string format_double(double value, int precision = 4) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", precision, value);
  return buffer;
}

std::string sanitize_filename(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    out += safe ? c : '_';
  }
  return out;
}

// ---------------------------------------------------------------------------
// index

struct IndexArgs {
  std::string corpus;
  std::string out;
  double k1 = aeval::bm25::Bm25Params{}.k1;
  double b = aeval::bm25::Bm25Params{}.b;
  bool stopwords = false;
  bool stem = false;
  int threads = 0;
};

int cmd_index(const IndexArgs& args) {
  aeval::RunManifest manifest;
  manifest.command = "index";
  manifest.started_at = aeval::utc_timestamp_now();
  manifest.config = {{"k1", args.k1},
                     {"b", args.b},
                     {"remove_stopwords", args.stopwords},
                     {"stem", args.stem},
                     {"threads", args.threads}};
  manifest.add_input(args.corpus);

  auto docs = aeval::io::load_corpus_vector(args.corpus);
  std::size_t doc_count = docs.size();
  aeval::bm25::InvertedIndex index = aeval::bm25::build_index(
      std::move(docs), {args.k1, args.b}, {args.stopwords, args.stem},
      /*store_text=*/true, args.threads);
  index.save(args.out);

  std::string digest = aeval::digest_file(args.out);
  std::printf("Indexed %zu documents, average length %.2f tokens.\n",
              doc_count, index.avg_doc_length());
  std::printf("Index written to %s\n", args.out.c_str());
  std::printf("Index digest: %s\n", digest.c_str());

  manifest.output_paths = {args.out};
  manifest.finished_at = aeval::utc_timestamp_now();
  manifest.write(args.out + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// eval-static

struct EvalArgs {
  std::string run;
  std::string qrels;
  std::string out_dir;
  double alpha = 0.5;
  std::vector<int> cutoffs = {5, 10, 25};
  int threads = 0;
  bool permit_partial = false;
};

json cutoff_values_json(const aeval::metrics::CutoffValues& values) {
  return {{"alpha_ndcg", values.alpha_ndcg}, {"a_recall", values.a_recall},
          {"recall", values.recall},          {"ndcg", values.ndcg},
          {"dcg", values.dcg},                {"idcg", values.idcg}};
}

json aggregate_values_json(const aeval::metrics::AggregateValues& values) {
  return {{"alpha_ndcg", values.alpha_ndcg},
          {"a_recall", values.a_recall},
          {"recall", values.recall},
          {"ndcg", values.ndcg},
          {"query_count", values.query_count}};
}

std::string render_metric_table(const aeval::metrics::EvaluationReport& report,
                                const std::vector<int>& cutoffs) {
  std::string table;
  char line[256];
  for (int cutoff : cutoffs) {
    std::snprintf(line, sizeof(line), "Metrics at cutoff %d\n", cutoff);
    table += line;
    std::snprintf(line, sizeof(line), "  %-18s %9s %9s %9s %9s %7s\n",
                  "Subset", "a-nDCG", "A-Recall", "Recall", "NDCG", "N");
    table += line;
    auto emit = [&](const std::string& name,
                    const aeval::metrics::AggregateValues& v) {
      std::snprintf(line, sizeof(line),
                    "  %-18s %9.2f %9.2f %9.2f %9.2f %7d\n", name.c_str(),
                    v.alpha_ndcg, v.a_recall, v.recall, v.ndcg,
                    v.query_count);
      table += line;
    };
    for (const auto& [subset, by_cutoff] : report.subsets) {
      emit(subset, by_cutoff.at(cutoff));
    }
    emit("Overall", report.overall.at(cutoff));
    table += '\n';
  }
  return table;
}

int cmd_eval_static(const EvalArgs& args) {
  aeval::RunManifest manifest;
  manifest.command = "eval-static";
  manifest.started_at = aeval::utc_timestamp_now();
  manifest.config = {{"alpha", args.alpha},
                     {"cutoffs", args.cutoffs},
                     {"threads", args.threads},
                     {"permit_partial", args.permit_partial}};
  manifest.add_input(args.run);
  manifest.add_input(args.qrels);

  fs::create_directories(args.out_dir);
  aeval::io::AspectQrels qrels = aeval::io::load_aspect_qrels(args.qrels);
  std::vector<std::string> warnings = qrels.warnings;
  std::vector<aeval::RankedRun> runs = aeval::io::read_run_file(args.run);
  if (runs.empty()) {
    warnings.push_back("run file " + args.run +
                       " is empty; every metric evaluates to zero");
  }

  aeval::MetricConfig config;
  config.alpha = args.alpha;
  config.cutoffs = args.cutoffs;
  aeval::metrics::EvaluationReport report =
      aeval::metrics::evaluate_run(runs, qrels.queries, config, args.threads);
  for (const std::string& query_id : report.missing_from_run) {
    warnings.push_back("query " + query_id +
                       " missing from the run; scored zero");
  }

  std::string per_query_path = args.out_dir + "/per_query.jsonl";
  {
    std::string lines;
    for (const auto& row : report.per_query) {
      json at = json::object();
      for (const auto& [cutoff, values] : row.at) {
        at[std::to_string(cutoff)] = cutoff_values_json(values);
      }
      json record = {{"query_id", row.query_id}, {"subset", row.subset},
                     {"at", at},                 {"empty_gold", row.empty_gold},
                     {"empty_run", row.empty_run},
                     {"above_one", row.above_one}};
      lines += record.dump() + "\n";
    }
    aeval::io::detail::spill(per_query_path, lines);
  }

  std::string summary_path = args.out_dir + "/summary.json";
  {
    json subsets = json::object();
    for (const auto& [subset, by_cutoff] : report.subsets) {
      json entry = json::object();
      for (const auto& [cutoff, values] : by_cutoff) {
        entry[std::to_string(cutoff)] = aggregate_values_json(values);
      }
      subsets[subset] = entry;
    }
    json overall = json::object();
    for (const auto& [cutoff, values] : report.overall) {
      overall[std::to_string(cutoff)] = aggregate_values_json(values);
    }
    json summary = {{"alpha", args.alpha},
                    {"cutoffs", args.cutoffs},
                    {"subsets", subsets},
                    {"overall", overall},
                    {"excluded_empty_gold", report.excluded_empty_gold},
                    {"missing_from_run", report.missing_from_run},
                    {"warnings", warnings}};
    aeval::io::detail::spill(summary_path, summary.dump(2) + "\n");
  }

  std::string table = render_metric_table(report, args.cutoffs);
  std::string report_path = args.out_dir + "/report.txt";
  aeval::io::detail::spill(report_path, table);
  std::fputs(table.c_str(), stdout);
  for (const std::string& warning : warnings) {
    std::fprintf(stderr, "warning: %s\n", warning.c_str());
  }

  manifest.output_paths = {per_query_path, summary_path, report_path};
  manifest.finished_at = aeval::utc_timestamp_now();
  manifest.write(args.out_dir + "/manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// run-agentic

struct RunAgenticArgs {
  std::string queries;
  std::string index;
  std::string mode = "fixed";
  std::string script;
  std::string agent = "echo";
  std::string endpoint;
  std::string model = "default";
  std::string out_dir;
  int rounds = 3;
  int round_cap = 100;
  int per_round_k = 5;
  int snippet_budget = 2048;
  int sample_per_subset = 0;
  std::uint64_t seed = 42;
  int threads = 0;
  bool resume = false;
  bool permit_partial = false;
};

aeval::harness::AgentAction parse_script_action(const json& record,
                                                std::size_t line) {
  std::string type =
      aeval::io::detail::require_string(record, "type", line);
  if (type == "search") {
    return aeval::harness::SearchAction{
        aeval::io::detail::require_string(record, "query", line)};
  }
  if (type == "answer") {
    aeval::harness::AnswerAction answer;
    answer.answer = aeval::io::detail::require_string(record, "answer", line);
    if (record.contains("confidence")) {
      answer.confidence = record["confidence"].get<double>();
    }
    return answer;
  }
  throw aeval::SchemaError(line, "unknown script action type \"" + type +
                                     "\" (expected search or answer)");
}

/// Script files are JSONL. Either every line is an action
/// ({"type":"search","query":...} / {"type":"answer","answer":...,
/// "confidence":...}) shared by all queries, or every line is
/// {"query_id":..., "actions":[...]} giving each query its own script.
struct ScriptFile {
  std::vector<aeval::harness::AgentAction> shared;
  std::map<std::string, std::vector<aeval::harness::AgentAction>> per_query;
  bool is_per_query = false;
};

ScriptFile load_script(const std::string& path) {
  ScriptFile script;
  std::string content = aeval::io::detail::slurp(path);
  bool first = true;
  aeval::io::detail::for_each_line(
      content, [&](std::size_t line, const std::string& text) {
        json record = aeval::io::detail::parse_record(line, text);
        bool keyed = record.contains("query_id");
        if (first) {
          script.is_per_query = keyed;
          first = false;
        } else if (keyed != script.is_per_query) {
          throw aeval::SchemaError(
              line, "script mixes shared actions and per-query blocks");
        }
        if (keyed) {
          std::string query_id =
              aeval::io::detail::require_string(record, "query_id", line);
          const json& actions =
              aeval::io::detail::require_field(record, "actions", line);
          if (!actions.is_array()) {
            throw aeval::SchemaError(line, "\"actions\" must be an array");
          }
          auto& list = script.per_query[query_id];
          if (!list.empty()) {
            throw aeval::SchemaError(line, "duplicate script for query " +
                                               query_id);
          }
          for (const json& action : actions) {
            list.push_back(parse_script_action(action, line));
          }
        } else {
          script.shared.push_back(parse_script_action(record, line));
        }
      });
  return script;
}

struct EpisodeError {
  std::string query_id;
  std::string message;
};

int cmd_run_agentic(const RunAgenticArgs& args) {
  aeval::RunManifest manifest;
  manifest.command = "run-agentic";
  manifest.started_at = aeval::utc_timestamp_now();

  aeval::ProtocolConfig protocol;
  protocol.mode = aeval::parse_mode(args.mode);
  protocol.fixed_rounds = args.rounds;
  protocol.round_cap = args.round_cap;
  protocol.per_round_k = args.per_round_k;
  protocol.snippet_budget = args.snippet_budget;
  protocol.validate();

  std::string agent_kind = args.agent;
  if (!args.script.empty()) agent_kind = "script";
  if (!args.endpoint.empty()) agent_kind = "endpoint";
  if (agent_kind != "echo" && agent_kind != "script" &&
      agent_kind != "endpoint") {
    throw aeval::Error("unknown agent \"" + agent_kind +
                       "\" (expected echo, or use --script/--endpoint)");
  }

  manifest.config = {{"mode", args.mode},
                     {"rounds", args.rounds},
                     {"round_cap", args.round_cap},
                     {"per_round_k", args.per_round_k},
                     {"snippet_budget", args.snippet_budget},
                     {"agent", agent_kind},
                     {"model", args.model},
                     {"endpoint", args.endpoint},
                     {"seed", args.seed},
                     {"sample_per_subset", args.sample_per_subset},
                     {"resume", args.resume},
                     {"threads", args.threads},
                     {"permit_partial", args.permit_partial}};
  manifest.add_input(args.queries);
  manifest.add_input(args.index);

  fs::create_directories(args.out_dir + "/traces");
  aeval::io::AspectQrels qrels = aeval::io::load_aspect_qrels(args.queries);
  for (const std::string& warning : qrels.warnings) {
    std::fprintf(stderr, "warning: %s\n", warning.c_str());
  }
  aeval::bm25::InvertedIndex index =
      aeval::bm25::InvertedIndex::load(args.index);
  aeval::harness::Retriever retriever =
      aeval::harness::make_bm25_retriever(index);

  ScriptFile script;
  if (agent_kind == "script") script = load_script(args.script);
  std::string api_key;
  if (agent_kind == "endpoint") {
    if (const char* key = std::getenv("AEVAL_API_KEY")) api_key = key;
    manifest.config["api_key_present"] = !api_key.empty();
  }

  std::vector<std::string> selected = aeval::sampling::sample_queries(
      qrels.queries, args.sample_per_subset, args.seed);
  std::printf("Selected %zu episodes (mode %s, agent %s).\n", selected.size(),
              args.mode.c_str(), agent_kind.c_str());

  std::mutex log_mutex;
  std::vector<EpisodeError> errors;
  std::vector<int> resumed(selected.size(), 0);
  std::vector<std::string> trace_paths(selected.size());

  auto run_episode = [&](std::size_t i) {
    const std::string& query_id = selected[i];
    const aeval::QueryJudgments& entry = qrels.queries.at(query_id);
    std::string trace_path =
        args.out_dir + "/traces/" + sanitize_filename(query_id) +
        ".trace.json";
    trace_paths[i] = trace_path;
    if (args.resume && aeval::io::trace_is_complete(trace_path)) {
      resumed[i] = 1;
      std::lock_guard<std::mutex> lock(log_mutex);
      std::printf("query %s: resumed from existing trace\n",
                  query_id.c_str());
      return;
    }
    try {
      std::unique_ptr<aeval::harness::Agent> agent;
      aeval::remote::RemoteAgent* remote = nullptr;
      if (agent_kind == "echo") {
        agent = std::make_unique<aeval::harness::EchoAgent>();
      } else if (agent_kind == "script") {
        const std::vector<aeval::harness::AgentAction>* actions =
            &script.shared;
        if (script.is_per_query) {
          auto it = script.per_query.find(query_id);
          if (it == script.per_query.end()) {
            throw aeval::Error("script has no actions for query " +
                               query_id);
          }
          actions = &it->second;
        }
        agent = std::make_unique<aeval::harness::ScriptedAgent>(*actions);
      } else {
        aeval::remote::RemoteAgentConfig remote_config;
        remote_config.model = args.model;
        auto owned = std::make_unique<aeval::remote::RemoteAgent>(
            aeval::remote::make_http_transport(args.endpoint, api_key),
            remote_config);
        remote = owned.get();
        agent = std::move(owned);
      }

      aeval::SearchTrace trace =
          protocol.mode == aeval::ProtocolConfig::Mode::fixed
              ? aeval::harness::run_fixed_round(*agent, retriever, query_id,
                                                entry.question, protocol)
              : aeval::harness::run_adaptive(*agent, retriever, query_id,
                                             entry.question, protocol);
      if (remote != nullptr) {
        trace.exchanges = remote->take_exchanges();
        for (std::string& warning : remote->take_warnings()) {
          trace.warnings.push_back(std::move(warning));
        }
      }
      aeval::io::write_trace(trace, trace_path);
      std::lock_guard<std::mutex> lock(log_mutex);
      std::printf("query %s: %zu rounds, stop=%s\n", query_id.c_str(),
                  trace.rounds.size(),
                  aeval::stop_reason_name(trace.stop_reason));
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(log_mutex);
      errors.push_back({query_id, e.what()});
      std::fprintf(stderr, "query %s: error: %s\n", query_id.c_str(),
                   e.what());
    }
  };
  aeval::parallel_for(selected.size(), run_episode, args.threads);

  // Cumulative run files from every completed trace, in sorted query order.
  std::vector<aeval::SearchTrace> traces;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (fs::exists(trace_paths[i]) &&
        aeval::io::trace_is_complete(trace_paths[i])) {
      traces.push_back(aeval::io::read_trace(trace_paths[i]));
    }
  }
  std::vector<std::string> run_paths;
  if (protocol.mode == aeval::ProtocolConfig::Mode::fixed) {
    for (int r = 1; r <= protocol.fixed_rounds; ++r) {
      std::vector<aeval::RankedRun> runs;
      for (const aeval::SearchTrace& trace : traces) {
        int upto = std::min<int>(r, static_cast<int>(trace.rounds.size()));
        runs.push_back(aeval::harness::cumulative_ranking(trace, upto));
      }
      std::string path =
          args.out_dir + "/cumulative_round" + std::to_string(r) + ".run";
      aeval::io::write_run_file(runs, path);
      run_paths.push_back(path);
    }
  } else {
    std::vector<aeval::RankedRun> runs;
    for (const aeval::SearchTrace& trace : traces) {
      runs.push_back(aeval::harness::cumulative_ranking(
          trace, static_cast<int>(trace.rounds.size())));
    }
    std::string path = args.out_dir + "/cumulative_final.run";
    aeval::io::write_run_file(runs, path);
    run_paths.push_back(path);
  }

  int resumed_count = 0;
  for (int flag : resumed) resumed_count += flag;
  json episode_report = {
      {"selected", selected},
      {"completed", traces.size()},
      {"resumed", resumed_count},
      {"errors", json::array()},
  };
  for (const EpisodeError& error : errors) {
    episode_report["errors"].push_back(
        {{"query_id", error.query_id}, {"message", error.message}});
  }
  std::string episodes_path = args.out_dir + "/episodes.json";
  aeval::io::detail::spill(episodes_path, episode_report.dump(2) + "\n");

  manifest.output_paths = run_paths;
  manifest.output_paths.push_back(episodes_path);
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (fs::exists(trace_paths[i])) {
      manifest.output_paths.push_back(trace_paths[i]);
    }
  }
  manifest.finished_at = aeval::utc_timestamp_now();
  manifest.write(args.out_dir + "/manifest.json");

  std::printf("Completed %zu/%zu episodes (%d resumed, %zu failed).\n",
              traces.size(), selected.size(), resumed_count, errors.size());
  if (!errors.empty() && !args.permit_partial) {
    std::fprintf(stderr,
                 "error: %zu episode(s) failed; rerun with --resume to retry "
                 "them or pass --permit-partial\n",
                 errors.size());
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// judge-aggregate

struct JudgeArgs {
  std::string verdicts;
  std::string traces_dir;
  std::string qrels;
  std::string out_dir;
  double gamma = 0.05;
  bool permit_partial = false;
};

std::string render_agentic_table(const aeval::judge::AgenticReport& report) {
  std::string table;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %6s %7s %8s %8s\n", "Query", "#R",
                "Compl.", "Overall", "AER");
  table += line;
  for (const auto& row : report.rows) {
    std::snprintf(line, sizeof(line), "%-24s %6d %7d %8d %8.4f\n",
                  row.query_id.c_str(), row.rounds, row.completeness,
                  row.overall_quality, row.aer);
    table += line;
  }
  std::snprintf(line, sizeof(line), "%-24s %6.2f %7.2f %8.2f %8.4f\n", "Mean",
                report.mean_rounds, report.mean_completeness,
                report.mean_overall_quality, report.mean_aer);
  table += line;
  return table;
}

int cmd_judge_aggregate(const JudgeArgs& args) {
  aeval::RunManifest manifest;
  manifest.command = "judge-aggregate";
  manifest.started_at = aeval::utc_timestamp_now();
  manifest.config = {{"gamma", args.gamma},
                     {"permit_partial", args.permit_partial}};
  manifest.add_input(args.verdicts);
  manifest.add_input(args.qrels);

  fs::create_directories(args.out_dir);
  aeval::io::AspectQrels qrels = aeval::io::load_aspect_qrels(args.qrels);

  // Verdict lines carry query_id plus either the verdict object inline or a
  // "raw" string holding unparsed judge output for recovery parsing.
  std::vector<aeval::judge::JudgeVerdict> verdicts;
  std::vector<EpisodeError> errors;
  {
    std::string content = aeval::io::detail::slurp(args.verdicts);
    aeval::io::detail::for_each_line(
        content, [&](std::size_t line, const std::string& text) {
          json record = aeval::io::detail::parse_record(line, text);
          std::string query_id =
              aeval::io::detail::require_string(record, "query_id", line);
          auto entry = qrels.queries.find(query_id);
          if (entry == qrels.queries.end()) {
            errors.push_back(
                {query_id, "verdict for unknown query (not in qrels)"});
            return;
          }
          std::string raw;
          if (record.contains("raw") && record["raw"].is_string()) {
            raw = record["raw"].get<std::string>();
          } else {
            record.erase("query_id");
            raw = record.dump();
          }
          try {
            verdicts.push_back(aeval::judge::parse_judge_output(
                raw, entry->second.aspects));
          } catch (const std::exception& e) {
            errors.push_back({query_id, e.what()});
          }
        });
  }

  std::map<std::string, aeval::SearchTrace> traces;
  std::vector<fs::path> trace_files;
  for (const auto& dirent : fs::directory_iterator(args.traces_dir)) {
    if (dirent.is_regular_file() &&
        dirent.path().string().ends_with(".trace.json")) {
      trace_files.push_back(dirent.path());
    }
  }
  std::sort(trace_files.begin(), trace_files.end());
  for (const fs::path& path : trace_files) {
    aeval::SearchTrace trace = aeval::io::read_trace(path.string());
    traces.emplace(trace.query_id, std::move(trace));
  }

  // Reconcile the two sides; without --permit-partial any mismatch fails.
  std::set<std::string> verdict_ids;
  for (const auto& verdict : verdicts) verdict_ids.insert(verdict.query_id);
  for (const auto& [query_id, trace] : traces) {
    if (!verdict_ids.count(query_id)) {
      errors.push_back({query_id, "no verdict for traced query"});
    }
  }
  std::vector<aeval::judge::JudgeVerdict> usable;
  for (auto& verdict : verdicts) {
    if (traces.count(verdict.query_id)) {
      usable.push_back(std::move(verdict));
    } else {
      errors.push_back({verdict.query_id, "no trace for judged query"});
    }
  }
  std::map<std::string, aeval::SearchTrace> usable_traces;
  for (const auto& verdict : usable) {
    usable_traces.emplace(verdict.query_id,
                          std::move(traces.at(verdict.query_id)));
  }

  for (const EpisodeError& error : errors) {
    std::fprintf(stderr, "query %s: error: %s\n", error.query_id.c_str(),
                 error.message.c_str());
  }
  if (!errors.empty() && !args.permit_partial) {
    std::fprintf(stderr,
                 "error: %zu query error(s); pass --permit-partial to "
                 "aggregate the remainder\n",
                 errors.size());
    return 1;
  }
  if (usable.empty()) {
    std::fprintf(stderr, "error: no query has both a verdict and a trace\n");
    return 1;
  }

  aeval::judge::AgenticReport report = aeval::judge::aggregate_agentic_report(
      usable, usable_traces, qrels.queries, args.gamma);

  std::string rows_path = args.out_dir + "/report.jsonl";
  {
    std::string lines;
    for (const auto& row : report.rows) {
      json record = {{"query_id", row.query_id},
                     {"rounds", row.rounds},
                     {"completeness", row.completeness},
                     {"overall_quality", row.overall_quality},
                     {"aer", row.aer}};
      lines += record.dump() + "\n";
    }
    aeval::io::detail::spill(rows_path, lines);
  }
  std::string summary_path = args.out_dir + "/summary.json";
  {
    json errors_json = json::array();
    for (const EpisodeError& error : errors) {
      errors_json.push_back(
          {{"query_id", error.query_id}, {"message", error.message}});
    }
    json summary = {{"gamma", args.gamma},
                    {"query_count", report.rows.size()},
                    {"mean_rounds", report.mean_rounds},
                    {"mean_completeness", report.mean_completeness},
                    {"mean_overall_quality", report.mean_overall_quality},
                    {"mean_aer", report.mean_aer},
                    {"errors", errors_json}};
    aeval::io::detail::spill(summary_path, summary.dump(2) + "\n");
  }
  std::string table = render_agentic_table(report);
  std::string table_path = args.out_dir + "/report.txt";
  aeval::io::detail::spill(table_path, table);
  std::fputs(table.c_str(), stdout);

  manifest.output_paths = {rows_path, summary_path, table_path};
  manifest.finished_at = aeval::utc_timestamp_now();
  manifest.write(args.out_dir + "/manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aspect-aware retrieval evaluation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(aeval::kVersion));

  IndexArgs index_args;
  CLI::App* index = app.add_subcommand(
      "index", "Build and persist a BM25 index from a JSONL corpus");
  index->add_option("--corpus", index_args.corpus, "Corpus JSONL file")
      ->required();
  index->add_option("--out", index_args.out, "Index output path")->required();
  index->add_option("--k1", index_args.k1, "BM25 k1 parameter");
  index->add_option("--b", index_args.b, "BM25 b parameter");
  index->add_flag("--stopwords", index_args.stopwords,
                  "Remove stopwords during tokenization");
  index->add_flag("--stem", index_args.stem,
                  "Apply suffix stemming during tokenization");
  index->add_option("--threads", index_args.threads,
                    "Worker threads (0 = hardware)");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "eval-static", "Score a run file against aspect qrels");
  eval->add_option("--run", eval_args.run, "Run file (TREC format)")
      ->required();
  eval->add_option("--qrels", eval_args.qrels, "Aspect qrels JSONL")
      ->required();
  eval->add_option("--out", eval_args.out_dir, "Output directory")
      ->required();
  eval->add_option("--alpha", eval_args.alpha,
                   "Novelty discount for alpha-nDCG");
  eval->add_option("--cutoffs", eval_args.cutoffs, "Rank cutoffs")
      ->delimiter(',');
  eval->add_option("--threads", eval_args.threads,
                   "Worker threads (0 = hardware)");
  eval->add_flag("--permit-partial", eval_args.permit_partial,
                 "Exit 0 even when per-query errors occurred");

  RunAgenticArgs run_args;
  CLI::App* run = app.add_subcommand(
      "run-agentic", "Execute search episodes against a BM25 index");
  run->add_option("--queries", run_args.queries,
                  "Aspect qrels JSONL supplying query ids and questions")
      ->required();
  run->add_option("--index", run_args.index, "Serialized BM25 index")
      ->required();
  run->add_option("--out", run_args.out_dir, "Output directory")->required();
  run->add_option("--mode", run_args.mode, "Protocol mode: fixed|adaptive")
      ->check(CLI::IsMember({"fixed", "adaptive"}));
  run->add_option("--rounds", run_args.rounds,
                  "Fixed-mode round count (1..3)");
  run->add_option("--round-cap", run_args.round_cap,
                  "Adaptive-mode hard round limit");
  run->add_option("--per-round-k", run_args.per_round_k,
                  "Documents returned per search round");
  run->add_option("--snippet-budget", run_args.snippet_budget,
                  "Token budget per presented snippet");
  run->add_option("--agent", run_args.agent,
                  "Built-in agent (echo) when no script/endpoint is given");
  run->add_option("--script", run_args.script,
                  "Scripted agent actions (JSONL)");
  run->add_option("--endpoint", run_args.endpoint,
                  "Chat-completions endpoint URL for a remote agent");
  run->add_option("--model", run_args.model,
                  "Model name sent to the endpoint");
  run->add_option("--seed", run_args.seed, "Sampling seed");
  run->add_option("--sample-per-subset", run_args.sample_per_subset,
                  "Sample this many queries per subset (0 = all)");
  run->add_option("--threads", run_args.threads,
                  "Worker threads (0 = hardware)");
  run->add_flag("--resume", run_args.resume,
                "Skip queries whose trace file is already complete");
  run->add_flag("--permit-partial", run_args.permit_partial,
                "Exit 0 even when some episodes failed");

  JudgeArgs judge_args;
  CLI::App* judge = app.add_subcommand(
      "judge-aggregate", "Join judge verdicts with traces into a report");
  judge->add_option("--verdicts", judge_args.verdicts, "Verdict JSONL file")
      ->required();
  judge->add_option("--traces", judge_args.traces_dir,
                    "Directory of *.trace.json files")
      ->required();
  judge->add_option("--qrels", judge_args.qrels, "Aspect qrels JSONL")
      ->required();
  judge->add_option("--out", judge_args.out_dir, "Output directory")
      ->required();
  judge->add_option("--gamma", judge_args.gamma,
                    "Efficiency decay rate per extra round");
  judge->add_flag("--permit-partial", judge_args.permit_partial,
                  "Aggregate the intersection when records are missing");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*index) return cmd_index(index_args);
    if (*eval) return cmd_eval_static(eval_args);
    if (*run) return cmd_run_agentic(run_args);
    if (*judge) return cmd_judge_aggregate(judge_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
