#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aeval/core.hpp"
#include "aeval/errors.hpp"
#include "aeval/trace.hpp"
#include "aeval/version.hpp"

namespace aeval::io {

using json = nlohmann::ordered_json;

namespace detail {

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path);
  return buffer.str();
}

inline void spill(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

/// Calls fn(line_number, line) for every non-blank line, normalizing CRLF.
/// Line numbers are 1-based and count blank lines too.
inline void for_each_line(
    const std::string& content,
    const std::function<void(std::size_t, const std::string&)>& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::size_t end = nl == std::string::npos ? content.size() : nl;
    ++line_no;
    std::size_t len = end - pos;
    if (len > 0 && content[pos + len - 1] == '\r') --len;
    if (len > 0) fn(line_no, content.substr(pos, len));
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
}

inline json parse_record(std::size_t line, const std::string& text) {
  json record;
  try {
    record = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(line, std::string("invalid JSON: ") + e.what());
  }
  if (!record.is_object()) {
    throw SchemaError(line, "record is not a JSON object");
  }
  return record;
}

inline const json& require_field(const json& record, const char* key,
                                 std::size_t line) {
  auto it = record.find(key);
  if (it == record.end()) {
    throw SchemaError(line, std::string("missing field \"") + key + "\"");
  }
  return *it;
}

inline std::string require_string(const json& record, const char* key,
                                  std::size_t line) {
  const json& value = require_field(record, key, line);
  if (!value.is_string()) {
    throw SchemaError(line, std::string("field \"") + key +
                                "\" must be a string");
  }
  return value.get<std::string>();
}

inline int require_int(const json& record, const char* key,
                       std::size_t line) {
  const json& value = require_field(record, key, line);
  if (!value.is_number_integer()) {
    throw SchemaError(line, std::string("field \"") + key +
                                "\" must be an integer");
  }
  return value.get<int>();
}

inline std::string render_score(double score) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6f", score);
  return buffer;
}

}  // namespace detail

// -- corpus ---------------------------------------------------------------

/// Streams {"id": ..., "contents": ...} records to fn; returns the record
/// count. Malformed lines raise SchemaError carrying the line number.
inline std::size_t load_corpus(
    const std::string& path,
    const std::function<void(std::string, std::string)>& fn) {
  std::string content = detail::slurp(path);
  std::size_t count = 0;
  detail::for_each_line(content, [&](std::size_t line, const std::string& t) {
    json record = detail::parse_record(line, t);
    std::string id = detail::require_string(record, "id", line);
    std::string contents = detail::require_string(record, "contents", line);
    ++count;
    fn(std::move(id), std::move(contents));
  });
  return count;
}

inline std::vector<std::pair<std::string, std::string>> load_corpus_vector(
    const std::string& path) {
  std::vector<std::pair<std::string, std::string>> docs;
  load_corpus(path, [&](std::string id, std::string contents) {
    docs.emplace_back(std::move(id), std::move(contents));
  });
  return docs;
}

// -- aspect qrels -----------------------------------------------------------

/// Validated judgments for a whole query file plus non-fatal findings
/// (uncovered aspects, stale supplied weights).
struct AspectQrels {
  JudgmentsMap queries;
  std::vector<std::string> warnings;
};

/// One record per query:
///   {"query_id": ..., "subset": ..., "query": ...,
///    "aspects": [{"aspect_id", "description", "likert"[, "weight"]}],
///    "gold": [{"doc_id", "aspect_id"} | {"doc_id", "aspect_ids": [...]}]}
/// Weights are always recomputed from the Likert scores; a supplied weight
/// that disagrees beyond 1e-6 only produces a warning. A gold entry naming
/// several aspects is split into per-aspect entries under synthetic ids
/// "<doc_id>#<aspect_id>" carrying the source id.
inline AspectQrels load_aspect_qrels(const std::string& path) {
  std::string content = detail::slurp(path);
  AspectQrels qrels;
  std::unordered_map<std::string, std::size_t> seen_queries;
  detail::for_each_line(content, [&](std::size_t line, const std::string& t) {
    json record = detail::parse_record(line, t);
    std::string query_id = detail::require_string(record, "query_id", line);
    if (!seen_queries.emplace(query_id, line).second) {
      throw SchemaError(line, "duplicate query_id " + query_id);
    }
    std::string subset = detail::require_string(record, "subset", line);
    std::string question = record.contains("query")
                               ? detail::require_string(record, "query", line)
                               : std::string();

    const json& aspects_json = detail::require_field(record, "aspects", line);
    if (!aspects_json.is_array() || aspects_json.empty()) {
      throw SchemaError(line, "field \"aspects\" must be a non-empty array");
    }
    std::vector<AspectSet::Input> inputs;
    std::vector<double> supplied_weights;
    for (const json& a : aspects_json) {
      if (!a.is_object()) {
        throw SchemaError(line, "aspect entries must be objects");
      }
      AspectSet::Input input;
      input.aspect_id = detail::require_string(a, "aspect_id", line);
      input.description = a.contains("description")
                              ? detail::require_string(a, "description", line)
                              : std::string();
      input.likert = detail::require_int(a, "likert", line);
      inputs.push_back(std::move(input));
      supplied_weights.push_back(
          a.contains("weight") && a["weight"].is_number()
              ? a["weight"].get<double>()
              : -1.0);
    }

    AspectSet aspects;
    try {
      aspects = AspectSet::create(query_id, inputs);
    } catch (const Error& e) {
      throw SchemaError(line, e.what());
    }
    for (std::size_t i = 0; i < supplied_weights.size(); ++i) {
      if (supplied_weights[i] >= 0.0 &&
          std::abs(supplied_weights[i] - aspects.aspects()[i].weight) >
              1e-6) {
        qrels.warnings.push_back(
            "line " + std::to_string(line) + ": query " + query_id +
            " aspect " + aspects.aspects()[i].aspect_id +
            ": supplied weight " + std::to_string(supplied_weights[i]) +
            " recomputed as " +
            std::to_string(aspects.aspects()[i].weight));
      }
    }

    const json& gold_json = detail::require_field(record, "gold", line);
    if (!gold_json.is_array()) {
      throw SchemaError(line, "field \"gold\" must be an array");
    }
    std::vector<GoldEntry> entries;
    for (const json& g : gold_json) {
      if (!g.is_object()) {
        throw SchemaError(line, "gold entries must be objects");
      }
      std::string doc_id = detail::require_string(g, "doc_id", line);
      bool has_single = g.contains("aspect_id");
      bool has_multi = g.contains("aspect_ids");
      if (has_single == has_multi) {
        throw SchemaError(line, "gold entry for doc " + doc_id +
                                    " must carry exactly one of "
                                    "\"aspect_id\" or \"aspect_ids\"");
      }
      if (has_single) {
        entries.push_back(
            {doc_id, detail::require_string(g, "aspect_id", line), ""});
      } else {
        const json& ids = g["aspect_ids"];
        if (!ids.is_array() || ids.empty()) {
          throw SchemaError(line, "\"aspect_ids\" must be a non-empty array");
        }
        // Multi-aspect passages split into one synthetic entry per aspect.
        for (const json& id : ids) {
          if (!id.is_string()) {
            throw SchemaError(line, "\"aspect_ids\" entries must be strings");
          }
          std::string aspect_id = id.get<std::string>();
          entries.push_back({doc_id + "#" + aspect_id, aspect_id, doc_id});
        }
      }
    }

    GoldAssignment gold(query_id, std::move(entries));
    auto report = validate_gold(gold, aspects);
    for (const auto& f : report.findings) {
      if (f.kind == GoldValidationReport::Kind::zero_coverage) {
        qrels.warnings.push_back("line " + std::to_string(line) +
                                 ": query " + query_id + ": " + f.message);
      } else {
        throw SchemaError(line, "query " + query_id + ": " + f.message);
      }
    }

    QueryJudgments judgments;
    judgments.aspects = std::move(aspects);
    judgments.gold = std::move(gold);
    judgments.subset = std::move(subset);
    judgments.question = std::move(question);
    qrels.queries.emplace(std::move(query_id), std::move(judgments));
  });
  return qrels;
}

// -- run files ----------------------------------------------------------

/// Renders runs in the six-column convention, queries sorted by id, scores
/// with six decimals, LF line endings.
inline std::string render_run_file(const std::vector<RankedRun>& runs,
                                   const std::string& tag = "aeval") {
  std::vector<const RankedRun*> ordered;
  ordered.reserve(runs.size());
  for (const auto& run : runs) ordered.push_back(&run);
  std::sort(ordered.begin(), ordered.end(),
            [](const RankedRun* a, const RankedRun* b) {
              return a->query_id() < b->query_id();
            });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i - 1]->query_id() == ordered[i]->query_id()) {
      throw Error("duplicate run for query " + ordered[i]->query_id());
    }
  }
  std::string out;
  for (const RankedRun* run : ordered) {
    for (std::size_t r = 1; r <= run->size(); ++r) {
      const ScoredDoc& d = run->at_rank(r);
      out += run->query_id();
      out += " Q0 ";
      out += d.doc_id;
      out += ' ';
      out += std::to_string(r);
      out += ' ';
      out += detail::render_score(d.score);
      out += ' ';
      out += tag;
      out += '\n';
    }
  }
  return out;
}

inline void write_run_file(const std::vector<RankedRun>& runs,
                           const std::string& path,
                           const std::string& tag = "aeval") {
  detail::spill(path, render_run_file(runs, tag));
}

/// Parses a six-column run file. The rank column must count 1, 2, ... per
/// query in file order; items are then canonicalized by (score desc, doc id
/// asc), which is exactly the order write_run_file emits.
inline std::vector<RankedRun> parse_run_file(const std::string& content) {
  std::vector<std::string> query_order;
  std::unordered_map<std::string, std::vector<ScoredDoc>> items;
  std::unordered_map<std::string, std::size_t> next_rank;
  detail::for_each_line(content, [&](std::size_t line, const std::string& t) {
    std::istringstream row(t);
    std::string query_id, q0, doc_id, rank_text, score_text, tag, extra;
    if (!(row >> query_id >> q0 >> doc_id >> rank_text >> score_text >> tag)) {
      throw SchemaError(line, "expected 6 whitespace-separated columns");
    }
    if (row >> extra) {
      throw SchemaError(line, "unexpected 7th column \"" + extra + "\"");
    }
    if (q0 != "Q0") {
      throw SchemaError(line, "second column must be the literal Q0");
    }
    std::size_t rank = 0;
    try {
      std::size_t consumed = 0;
      rank = std::stoul(rank_text, &consumed);
      if (consumed != rank_text.size()) throw std::invalid_argument(rank_text);
    } catch (const std::exception&) {
      throw SchemaError(line, "rank \"" + rank_text + "\" is not an integer");
    }
    double score = 0.0;
    try {
      std::size_t consumed = 0;
      score = std::stod(score_text, &consumed);
      if (consumed != score_text.size()) {
        throw std::invalid_argument(score_text);
      }
    } catch (const std::exception&) {
      throw SchemaError(line, "score \"" + score_text + "\" is not a number");
    }
    auto [it, fresh] = next_rank.emplace(query_id, 1);
    if (fresh) query_order.push_back(query_id);
    if (rank != it->second) {
      throw RankOrderError("line " + std::to_string(line) + ": query " +
                           query_id + " expected rank " +
                           std::to_string(it->second) + ", found " +
                           std::to_string(rank));
    }
    ++it->second;
    items[query_id].push_back({std::move(doc_id), score});
  });
  std::vector<RankedRun> runs;
  runs.reserve(query_order.size());
  for (const auto& query_id : query_order) {
    runs.push_back(RankedRun::canonical(query_id, std::move(items[query_id])));
  }
  return runs;
}

inline std::vector<RankedRun> read_run_file(const std::string& path) {
  return parse_run_file(detail::slurp(path));
}

// -- traces ------------------------------------------------------------

inline std::string render_trace(const SearchTrace& trace) {
  std::string out;
  json header = {
      {"type", "trace_header"},
      {"version", trace.version},
      {"query_id", trace.query_id},
      {"question", trace.question},
      {"mode", mode_name(trace.config.mode)},
      {"config",
       {{"fixed_rounds", trace.config.fixed_rounds},
        {"round_cap", trace.config.round_cap},
        {"per_round_k", trace.config.per_round_k},
        {"snippet_budget", trace.config.snippet_budget}}},
  };
  out += header.dump();
  out += '\n';
  for (const Round& round : trace.rounds) {
    json results = json::array();
    for (const RetrievedDoc& doc : round.results) {
      results.push_back({{"doc_id", doc.doc_id},
                         {"score", doc.score},
                         {"snippet", doc.snippet},
                         {"truncated", doc.truncated}});
    }
    json record = {{"type", "round"},
                   {"round", round.round},
                   {"issued_query", round.issued_query},
                   {"results", std::move(results)}};
    if (round.has_answer) {
      record["answer"] = round.answer;
      record["confidence"] = round.confidence;
    }
    out += record.dump();
    out += '\n';
  }
  for (const Exchange& exchange : trace.exchanges) {
    json record = {{"type", "exchange"},
                   {"direction", exchange.direction},
                   {"payload", exchange.payload}};
    out += record.dump();
    out += '\n';
  }
  json final_record = {{"type", "final"},
                       {"stop_reason", stop_reason_name(trace.stop_reason)},
                       {"answer", trace.final_answer},
                       {"confidence", trace.final_confidence},
                       {"rounds_used", trace.rounds.size()},
                       {"warnings", trace.warnings}};
  out += final_record.dump();
  out += '\n';
  return out;
}

inline void write_trace(const SearchTrace& trace, const std::string& path) {
  detail::spill(path, render_trace(trace));
}

inline SearchTrace parse_trace(const std::string& content) {
  SearchTrace trace;
  bool saw_header = false;
  bool saw_final = false;
  detail::for_each_line(content, [&](std::size_t line, const std::string& t) {
    json record = detail::parse_record(line, t);
    std::string type = detail::require_string(record, "type", line);
    if (saw_final) {
      throw SchemaError(line, "record after the final record");
    }
    if (!saw_header) {
      if (type != "trace_header") {
        throw SchemaError(line, "first record must be a trace_header");
      }
      int version = detail::require_int(record, "version", line);
      if (version != kTraceFormatVersion) {
        throw TraceVersionError(
            "trace format version " + std::to_string(version) +
            " unsupported (want " + std::to_string(kTraceFormatVersion) +
            ")");
      }
      trace.version = version;
      trace.query_id = detail::require_string(record, "query_id", line);
      trace.question = detail::require_string(record, "question", line);
      try {
        trace.config.mode =
            parse_mode(detail::require_string(record, "mode", line));
      } catch (const SchemaError&) {
        throw;
      } catch (const Error& e) {
        throw SchemaError(line, e.what());
      }
      const json& config = detail::require_field(record, "config", line);
      trace.config.fixed_rounds =
          detail::require_int(config, "fixed_rounds", line);
      trace.config.round_cap = detail::require_int(config, "round_cap", line);
      trace.config.per_round_k =
          detail::require_int(config, "per_round_k", line);
      trace.config.snippet_budget =
          detail::require_int(config, "snippet_budget", line);
      saw_header = true;
      return;
    }
    if (type == "round") {
      Round round;
      round.round = detail::require_int(record, "round", line);
      if (round.round != static_cast<int>(trace.rounds.size()) + 1) {
        throw SchemaError(line, "round records out of order");
      }
      round.issued_query =
          detail::require_string(record, "issued_query", line);
      const json& results = detail::require_field(record, "results", line);
      if (!results.is_array()) {
        throw SchemaError(line, "\"results\" must be an array");
      }
      for (const json& r : results) {
        RetrievedDoc doc;
        doc.doc_id = detail::require_string(r, "doc_id", line);
        const json& score = detail::require_field(r, "score", line);
        if (!score.is_number()) {
          throw SchemaError(line, "result score must be a number");
        }
        doc.score = score.get<double>();
        doc.snippet = detail::require_string(r, "snippet", line);
        const json& truncated = detail::require_field(r, "truncated", line);
        if (!truncated.is_boolean()) {
          throw SchemaError(line, "\"truncated\" must be a boolean");
        }
        doc.truncated = truncated.get<bool>();
        round.results.push_back(std::move(doc));
      }
      if (record.contains("answer")) {
        round.has_answer = true;
        round.answer = detail::require_string(record, "answer", line);
        const json& confidence =
            detail::require_field(record, "confidence", line);
        if (!confidence.is_number()) {
          throw SchemaError(line, "\"confidence\" must be a number");
        }
        round.confidence = confidence.get<double>();
      }
      trace.rounds.push_back(std::move(round));
    } else if (type == "exchange") {
      Exchange exchange;
      exchange.direction = detail::require_string(record, "direction", line);
      exchange.payload = detail::require_string(record, "payload", line);
      trace.exchanges.push_back(std::move(exchange));
    } else if (type == "final") {
      try {
        trace.stop_reason = parse_stop_reason(
            detail::require_string(record, "stop_reason", line));
      } catch (const SchemaError&) {
        throw;
      } catch (const Error& e) {
        throw SchemaError(line, e.what());
      }
      trace.final_answer = detail::require_string(record, "answer", line);
      const json& confidence =
          detail::require_field(record, "confidence", line);
      if (!confidence.is_number()) {
        throw SchemaError(line, "\"confidence\" must be a number");
      }
      trace.final_confidence = confidence.get<double>();
      if (record.contains("warnings")) {
        for (const json& w : record["warnings"]) {
          if (!w.is_string()) {
            throw SchemaError(line, "warnings must be strings");
          }
          trace.warnings.push_back(w.get<std::string>());
        }
      }
      saw_final = true;
    } else {
      throw SchemaError(line, "unknown record type \"" + type + "\"");
    }
  });
  if (!saw_header) {
    throw SchemaError(0, "trace file has no header record");
  }
  if (!saw_final) {
    throw SchemaError(0, "trace file has no final record");
  }
  return trace;
}

inline SearchTrace read_trace(const std::string& path) {
  return parse_trace(detail::slurp(path));
}

/// True when the path holds a complete, readable trace — the resume test.
inline bool trace_is_complete(const std::string& path) {
  try {
    read_trace(path);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace aeval::io
