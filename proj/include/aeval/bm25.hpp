#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "aeval/core.hpp"
#include "aeval/errors.hpp"
#include "aeval/parallel.hpp"
#include "aeval/version.hpp"

namespace aeval::bm25 {

/// Classic 33-word English stopword list.
inline const std::array<std::string_view, 33>& english_stopwords() {
  static const std::array<std::string_view, 33> words = {
      "a",     "an",   "and",  "are",  "as",    "at",   "be",   "but",
      "by",    "for",  "if",   "in",   "into",  "is",   "it",   "no",
      "not",   "of",   "on",   "or",   "such",  "that", "the",  "their",
      "then",  "there", "these", "they", "this", "to",   "was",  "will",
      "with"};
  return words;
}

inline bool is_stopword(std::string_view word) {
  static const std::unordered_set<std::string_view> set(
      english_stopwords().begin(), english_stopwords().end());
  return set.count(word) > 0;
}

/// Minimal plural stemmer with three rules; the first rule whose suffix
/// matches decides the outcome, and a matching exception pattern leaves the
/// word unchanged rather than falling through to a later rule.
///   1. "ies" -> "y"   unless the word ends in "eies"/"aies" (needs length 4+)
///   2. "es"  -> "e"   unless the word ends in "aes"/"ees"/"oes" (length 3+)
///   3. drop final "s" unless the word ends in "us"/"ss" (length 3+)
inline std::string s_stem(std::string word) {
  auto ends = [&word](std::string_view suffix) {
    return word.size() >= suffix.size() &&
           word.compare(word.size() - suffix.size(), suffix.size(), suffix) ==
               0;
  };
  if (ends("ies")) {
    if (word.size() >= 4 && !ends("eies") && !ends("aies")) {
      word.replace(word.size() - 3, 3, "y");
    }
    return word;
  }
  if (ends("es")) {
    if (word.size() >= 3 && !ends("aes") && !ends("ees") && !ends("oes")) {
      word.pop_back();
    }
    return word;
  }
  if (ends("s")) {
    if (word.size() >= 3 && !ends("us") && !ends("ss")) {
      word.pop_back();
    }
    return word;
  }
  return word;
}

/// Both switches default off; stopwords are filtered before stemming.
struct TokenizerConfig {
  bool remove_stopwords = false;
  bool stem = false;

  friend bool operator==(const TokenizerConfig&,
                         const TokenizerConfig&) = default;
};

/// Lowercases and splits on every non-alphanumeric byte (ASCII semantics;
/// multi-byte characters act as boundaries), dropping empty tokens.
inline std::vector<std::string> tokenize(std::string_view text,
                                         const TokenizerConfig& config = {}) {
  std::vector<std::string> terms;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    if (!config.remove_stopwords || !is_stopword(current)) {
      terms.push_back(config.stem ? s_stem(std::move(current)) : current);
    }
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return terms;
}

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;

  friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

/// The alternative convention selectable next to the 0.9/0.4 default.
inline constexpr Bm25Params kClassicParams{1.2, 0.75};

struct DocRecord {
  std::string doc_id;
  std::uint32_t length = 0;  // token count under the index's tokenizer
  std::string text;          // empty unless the index stores text
};

struct Posting {
  std::uint32_t doc = 0;  // index into the id-sorted doc table
  std::uint32_t tf = 0;

  friend bool operator==(const Posting&, const Posting&) = default;
};

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) {
  out.push_back(static_cast<char>(v));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

/// Little-endian cursor over a serialized index; throws IndexFormatError on
/// any out-of-bounds read.
class Reader {
 public:
  Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}

  std::uint8_t u8() {
    require(1);
    return static_cast<std::uint8_t>(*p_++);
  }

  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p_[i]))
           << (8 * i);
    }
    p_ += 4;
    return v;
  }

  std::uint64_t u64() {
    require(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p_[i]))
           << (8 * i);
    }
    p_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    std::uint32_t n = u32();
    require(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }

  bool exhausted() const { return p_ == end_; }

 private:
  void require(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) {
      throw IndexFormatError("index file truncated");
    }
  }

  const char* p_;
  const char* end_;
};

}  // namespace detail

/// Immutable BM25 index over a document collection. Construction
/// canonicalizes by doc id, so the result is identical no matter how the
/// corpus stream was ordered or how many threads tokenized it; a built index
/// is safe for concurrent searches.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  static InvertedIndex build(
      std::vector<std::pair<std::string, std::string>> docs,
      Bm25Params params = {}, TokenizerConfig tokenizer = {},
      bool store_text = true, int n_threads = 0) {
    std::sort(docs.begin(), docs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < docs.size(); ++i) {
      if (docs[i - 1].first == docs[i].first) {
        throw DuplicateDocument("doc " + docs[i].first +
                                " ingested more than once");
      }
    }

    std::vector<std::map<std::string, std::uint32_t>> counts(docs.size());
    parallel_for(
        docs.size(),
        [&](std::size_t i) {
          for (auto& term : tokenize(docs[i].second, tokenizer)) {
            ++counts[i][std::move(term)];
          }
        },
        n_threads);

    // Sequential merge over the id-sorted docs: posting lists come out
    // sorted by doc index with no dependence on thread scheduling.
    InvertedIndex index;
    index.params_ = params;
    index.tokenizer_ = tokenizer;
    index.store_text_ = store_text;
    index.docs_.reserve(docs.size());
    std::uint64_t total_length = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      std::uint32_t length = 0;
      for (const auto& [term, tf] : counts[i]) {
        length += tf;
        index.postings_[term].push_back({static_cast<std::uint32_t>(i), tf});
      }
      total_length += length;
      index.docs_.push_back({std::move(docs[i].first), length,
                             store_text ? std::move(docs[i].second)
                                        : std::string()});
    }
    index.avg_doc_length_ =
        docs.empty() ? 0.0
                     : static_cast<double>(total_length) /
                           static_cast<double>(docs.size());
    return index;
  }

  std::size_t doc_count() const { return docs_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const Bm25Params& params() const { return params_; }
  const TokenizerConfig& tokenizer() const { return tokenizer_; }
  bool stores_text() const { return store_text_; }
  const std::vector<DocRecord>& docs() const { return docs_; }
  const std::map<std::string, std::vector<Posting>>& postings() const {
    return postings_;
  }

  /// Doc record by id, or nullptr when absent.
  const DocRecord* find_doc(const std::string& doc_id) const {
    auto it = std::lower_bound(docs_.begin(), docs_.end(), doc_id,
                               [](const DocRecord& d, const std::string& id) {
                                 return d.doc_id < id;
                               });
    if (it == docs_.end() || it->doc_id != doc_id) return nullptr;
    return &*it;
  }

  /// Smoothed idf: ln((N - df + 0.5)/(df + 0.5) + 1), non-negative for every
  /// df in [0, N].
  double idf(const std::string& term) const {
    auto it = postings_.find(term);
    double df =
        it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    double n = static_cast<double>(docs_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
  }

  RankedRun search(const std::string& query_id, const std::string& query,
                   int k) const {
    return search(query_id, query, k, params_);
  }

  /// Top-k by summed per-term BM25 score with an explicit parameter choice;
  /// score ties order by ascending doc id and zero-score documents never
  /// appear. Repeated query terms are scored once.
  RankedRun search(const std::string& query_id, const std::string& query,
                   int k, const Bm25Params& params) const {
    if (docs_.empty()) {
      throw EmptyIndex("cannot search an index with no documents");
    }
    auto tokens = tokenize(query, tokenizer_);
    if (tokens.empty()) {
      throw EmptyQuery("query \"" + query +
                       "\" has no terms after tokenization");
    }
    std::vector<std::string> terms;  // unique, in first-appearance order
    {
      std::unordered_set<std::string> seen;
      for (auto& t : tokens) {
        if (seen.insert(t).second) terms.push_back(std::move(t));
      }
    }

    // Outer loop over terms in a fixed order keeps each document's
    // floating-point accumulation sequence identical across runs.
    std::unordered_map<std::uint32_t, double> scores;
    for (const auto& term : terms) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      double idf_t = idf(term);
      for (const Posting& p : it->second) {
        double tf = static_cast<double>(p.tf);
        double len = static_cast<double>(docs_[p.doc].length);
        double norm =
            params.k1 * (1.0 - params.b + params.b * len / avg_doc_length_);
        scores[p.doc] += idf_t * tf * (params.k1 + 1.0) / (tf + norm);
      }
    }

    std::vector<ScoredDoc> scored;
    scored.reserve(scores.size());
    for (const auto& [doc, score] : scores) {
      if (score > 0.0) scored.push_back({docs_[doc].doc_id, score});
    }
    std::sort(scored.begin(), scored.end(),
              [](const ScoredDoc& a, const ScoredDoc& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.doc_id < b.doc_id;
              });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(k);
    return RankedRun::from_ordered(query_id, std::move(scored));
  }

  /// Serialized form; save() writes exactly these bytes.
  std::string serialize() const {
    std::string out;
    out.append(kMagic);
    detail::put_u32(out, kIndexFormatVersion);
    detail::put_f64(out, params_.k1);
    detail::put_f64(out, params_.b);
    std::uint8_t flags = 0;
    if (store_text_) flags |= 1;
    if (tokenizer_.remove_stopwords) flags |= 2;
    if (tokenizer_.stem) flags |= 4;
    detail::put_u8(out, flags);
    detail::put_f64(out, avg_doc_length_);
    detail::put_u64(out, docs_.size());
    for (const auto& d : docs_) {
      detail::put_str(out, d.doc_id);
      detail::put_u32(out, d.length);
      if (store_text_) detail::put_str(out, d.text);
    }
    detail::put_u64(out, postings_.size());
    for (const auto& [term, list] : postings_) {
      detail::put_str(out, term);
      detail::put_u64(out, list.size());
      for (const Posting& p : list) {
        detail::put_u32(out, p.doc);
        detail::put_u32(out, p.tf);
      }
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    auto bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + path);
  }

  static InvertedIndex from_bytes(const std::string& bytes) {
    constexpr std::size_t magic_len = sizeof(kMagic) - 1;
    if (bytes.size() < magic_len || bytes.compare(0, magic_len, kMagic) != 0) {
      throw IndexFormatError("not an index file (bad magic)");
    }
    detail::Reader r(bytes.data() + magic_len, bytes.size() - magic_len);
    std::uint32_t version = r.u32();
    if (version != kIndexFormatVersion) {
      throw IndexFormatError(
          "index format version " + std::to_string(version) +
          " unsupported (want " + std::to_string(kIndexFormatVersion) + ")");
    }
    InvertedIndex index;
    index.params_.k1 = r.f64();
    index.params_.b = r.f64();
    std::uint8_t flags = r.u8();
    index.store_text_ = (flags & 1) != 0;
    index.tokenizer_.remove_stopwords = (flags & 2) != 0;
    index.tokenizer_.stem = (flags & 4) != 0;
    index.avg_doc_length_ = r.f64();
    std::uint64_t n_docs = r.u64();
    index.docs_.reserve(n_docs);
    std::uint64_t total_length = 0;
    for (std::uint64_t i = 0; i < n_docs; ++i) {
      DocRecord d;
      d.doc_id = r.str();
      d.length = r.u32();
      if (index.store_text_) d.text = r.str();
      if (i > 0 && !(index.docs_.back().doc_id < d.doc_id)) {
        throw IndexFormatError("doc table not sorted by doc id");
      }
      total_length += d.length;
      index.docs_.push_back(std::move(d));
    }
    std::uint64_t n_terms = r.u64();
    for (std::uint64_t t = 0; t < n_terms; ++t) {
      std::string term = r.str();
      std::uint64_t n_postings = r.u64();
      std::vector<Posting> list;
      list.reserve(n_postings);
      for (std::uint64_t i = 0; i < n_postings; ++i) {
        Posting p;
        p.doc = r.u32();
        p.tf = r.u32();
        if (p.doc >= index.docs_.size()) {
          throw IndexFormatError("posting for term " + term +
                                 " references unknown doc index " +
                                 std::to_string(p.doc));
        }
        if (!list.empty() && list.back().doc >= p.doc) {
          throw IndexFormatError("posting list for term " + term +
                                 " not sorted by doc index");
        }
        list.push_back(p);
      }
      index.postings_.emplace(std::move(term), std::move(list));
    }
    if (!r.exhausted()) {
      throw IndexFormatError("trailing bytes after index payload");
    }
    double expected_avg =
        index.docs_.empty() ? 0.0
                            : static_cast<double>(total_length) /
                                  static_cast<double>(index.docs_.size());
    if (std::abs(index.avg_doc_length_ - expected_avg) > 1e-9) {
      throw IndexFormatError("stored average document length disagrees with "
                             "the doc table");
    }
    return index;
  }

  static InvertedIndex load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return from_bytes(bytes);
  }

 private:
  static constexpr char kMagic[] = "AEVINDEX";

  Bm25Params params_;
  TokenizerConfig tokenizer_;
  bool store_text_ = true;
  double avg_doc_length_ = 0.0;
  std::vector<DocRecord> docs_;
  std::map<std::string, std::vector<Posting>> postings_;
};

/// Free-function spellings matching the operation names used elsewhere.
inline InvertedIndex build_index(
    std::vector<std::pair<std::string, std::string>> docs,
    Bm25Params params = {}, TokenizerConfig tokenizer = {},
    bool store_text = true, int n_threads = 0) {
  return InvertedIndex::build(std::move(docs), params, tokenizer, store_text,
                              n_threads);
}

}  // namespace aeval::bm25
