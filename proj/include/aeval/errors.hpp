#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace aeval {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -- core ---------------------------------------------------------------

struct EmptyAspectSet : Error {
  using Error::Error;
};

struct InvalidLikert : Error {
  using Error::Error;
};

struct DuplicateAspect : Error {
  using Error::Error;
};

struct QueryMismatch : Error {
  using Error::Error;
};

struct DuplicateGoldDoc : Error {
  using Error::Error;
};

struct InvalidCutoffs : Error {
  using Error::Error;
};

struct InvalidAlpha : Error {
  using Error::Error;
};

// -- metrics ------------------------------------------------------------

struct RankOutOfRange : Error {
  using Error::Error;
};

struct ZeroIdeal : Error {
  using Error::Error;
};

struct OracleTooLarge : Error {
  using Error::Error;
};

struct ZeroGold : Error {
  using Error::Error;
};

class MissingQrels : public Error {
 public:
  explicit MissingQrels(std::vector<std::string> ids)
      : Error(compose(ids)), query_ids(std::move(ids)) {}

  std::vector<std::string> query_ids;

 private:
  static std::string compose(const std::vector<std::string>& ids) {
    std::string msg = "no qrels for query ids:";
    for (const auto& id : ids) msg += " " + id;
    return msg;
  }
};

// -- bm25 ---------------------------------------------------------------

struct DuplicateDocument : Error {
  using Error::Error;
};

struct EmptyQuery : Error {
  using Error::Error;
};

struct EmptyIndex : Error {
  using Error::Error;
};

struct IndexFormatError : Error {
  using Error::Error;
};

// -- corpus-io ----------------------------------------------------------

struct IoError : Error {
  using Error::Error;
};

class SchemaError : public Error {
 public:
  SchemaError(std::size_t line_number, const std::string& what)
      : Error("line " + std::to_string(line_number) + ": " + what),
        line(line_number) {}

  std::size_t line;
};

struct RankOrderError : Error {
  using Error::Error;
};

struct TraceVersionError : Error {
  using Error::Error;
};

// -- harness ------------------------------------------------------------

struct ProtocolViolation : Error {
  using Error::Error;
};

class RetrievalError : public Error {
 public:
  RetrievalError(int round_number, const std::string& what)
      : Error("round " + std::to_string(round_number) + ": " + what),
        round(round_number) {}

  int round;
};

struct ScriptExhausted : Error {
  using Error::Error;
};

struct AgentProtocolError : Error {
  using Error::Error;
};

struct BackendUnavailable : Error {
  using Error::Error;
};

struct TransportError : Error {
  using Error::Error;
};

// -- judge --------------------------------------------------------------

struct JudgeParseError : Error {
  using Error::Error;
};

struct IncompleteVerdict : Error {
  using Error::Error;
};

struct InvalidScore : Error {
  using Error::Error;
};

struct InvalidRounds : Error {
  using Error::Error;
};

class MissingVerdict : public Error {
 public:
  explicit MissingVerdict(const std::string& query_id)
      : Error("no verdict for query " + query_id), query(query_id) {}

  std::string query;
};

class MissingTrace : public Error {
 public:
  explicit MissingTrace(const std::string& query_id)
      : Error("no trace for query " + query_id), query(query_id) {}

  std::string query;
};

}  // namespace aeval
